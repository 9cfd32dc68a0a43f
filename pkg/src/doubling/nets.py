"""Nested hierarchies of maximal separated sets and their parent projections."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidExponents, PartitionBroken, ScaleTooSmall
from .packing import close_masks, greedy_scan
from .space import PseudoMetricSpace

NORMALIZED_DIAMETER = 0.99

# Relative slack for comparing integers against irrational powers such as
# 9**(log 2 / log 9), which evaluates to 2.0000000000000004.
REL_TOL = 1e-12


class ScaleBaseWarning(UserWarning):
    pass


def scale_power(a: float, j: int) -> float:
    """``a**-j``, correctly rounded when ``a`` is an integer."""
    if float(a).is_integer():
        return float(Fraction(1, int(a) ** j)) if j >= 0 else float(int(a) ** -j)
    return float(a) ** -j


def scale_base_violations(a, c_d, s, t, s_prime, t_prime, c_s, c_t) -> list[str]:
    """Human-readable list of the scale-base constraints that ``a`` fails."""
    out = []
    if a < 16 * c_d**4:
        out.append(f"A >= 16*C_d^4 = {16 * c_d**4:g} violated")
    if not a ** (s_prime - s) > c_s:
        out.append(f"A^(s'-s) > C_s = {c_s:g} violated")
    if t > 0 and not a ** (t - t_prime) > 4**t * c_d ** (2 * t) / c_t:
        out.append(f"A^(t-t') > 4^t C_d^(2t) / C_t = {4**t * c_d ** (2 * t) / c_t:g} violated")
    if a <= c_d:
        out.append(f"A > C_d = {c_d:g} violated")
    return out


def check_exponents(s, t, s_prime, t_prime):
    if not s_prime > s:
        raise InvalidExponents(f"need s' > s, got s'={s_prime}, s={s}")
    if not s >= t:
        raise InvalidExponents(f"need s >= t, got s={s}, t={t}")
    if t == 0 and t_prime == 0:
        return
    if not (t > t_prime >= 0):
        raise InvalidExponents(f"need t > t' >= 0 (or t = t' = 0), got t={t}, t'={t_prime}")


def choose_scale_base(c_d, s, t, s_prime, t_prime, c_s, c_t, override=None):
    """Smallest integer A with A >= 16 C_d^4, A^(s'-s) > C_s and, when t > 0,
    A^(t-t') > 4^t C_d^(2t) / C_t.

    An ``override`` is returned as given; a ScaleBaseWarning lists the
    constraints it breaks.
    """
    check_exponents(s, t, s_prime, t_prime)
    if c_s <= 0 or c_t <= 0:
        raise InvalidExponents("constants C_s and C_t must be positive")
    if override is not None:
        broken = scale_base_violations(override, c_d, s, t, s_prime, t_prime, c_s, c_t)
        if broken:
            warnings.warn("; ".join(broken), ScaleBaseWarning, stacklevel=2)
        return override
    a = max(2, math.ceil(16 * c_d**4))
    # Jump close to the answer analytically, then walk up to the exact integer.
    bounds = [a, math.floor(c_s ** (1 / (s_prime - s)))]
    if t > 0:
        bounds.append(math.floor((4**t * c_d ** (2 * t) / c_t) ** (1 / (t - t_prime))))
    a = max(bounds)
    a = max(a - 2, math.ceil(16 * c_d**4), 2)
    while scale_base_violations(a, c_d, s, t, s_prime, t_prime, c_s, c_t):
        a += 1
    return a


@dataclass(frozen=True, eq=False)
class NetHierarchy:
    """Levels S_0 subset S_1 subset ... subset S_J = X of maximal nets.

    ``parent[m]`` maps each g in S_{m+1} to its nearest point of S_m and
    ``children[m]`` maps each e in S_m to the tuple S_{e,m+1}.  ``space`` is
    the working space (already scaled when ``normalization != 1``).
    """

    space: PseudoMetricSpace
    scale_base: float
    levels: tuple
    parent: tuple
    children: tuple
    normalization: float = 1.0
    normalized: bool = False

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def separation(self, j: int) -> float:
        return scale_power(self.scale_base, j)

    def child_counts(self, m: int) -> dict:
        return {e: len(g) for e, g in self.children[m].items()}


def normalize_space(space: PseudoMetricSpace, target: float = NORMALIZED_DIAMETER):
    """Scale distances so the diameter equals ``target`` (< 1)."""
    if space.n < 2:
        return space, 1.0
    factor = target / space.diameter
    return space.scaled(factor), factor


def build_hierarchy(space: PseudoMetricSpace, a: float, normalized: bool = True) -> NetHierarchy:
    """Build nested maximal A^-j separated sets top-down until S_J = X.

    Each level is a greedy scan seeded with the previous level, followed by
    the remaining points in index order.  Parents are nearest points of the
    coarser level, ties to the lowest index.
    """
    if not a > space.c_d:
        raise ScaleTooSmall(f"scale base A={a} must exceed C_d={space.c_d}")
    work, factor = normalize_space(space) if normalized else (space, 1.0)
    n = work.n
    everyone = list(range(n))
    levels = []
    prev: list[int] = []
    j = 0
    while True:
        sep = scale_power(a, j)
        seen = set(prev)
        order = prev + [i for i in everyone if i not in seen]
        current = greedy_scan(order, close_masks(work, sep))
        levels.append(tuple(sorted(current)))
        if len(current) == n:
            break
        prev = sorted(current)
        j += 1
    parents, children = [], []
    for m in range(len(levels) - 1):
        coarse = np.array(levels[m])
        fine = levels[m + 1]
        block = work.dist[np.ix_(fine, coarse)]
        nearest = coarse[np.argmin(block, axis=1)]
        par = {int(g): int(e) for g, e in zip(fine, nearest)}
        kids = {int(e): [] for e in coarse}
        for g in fine:
            kids[par[g]].append(int(g))
        for e, g in kids.items():
            if not g:
                raise PartitionBroken(f"net point {e} at level {m} has no children")
        parents.append(par)
        children.append({e: tuple(g) for e, g in kids.items()})
    return NetHierarchy(work, a, tuple(levels), tuple(parents), tuple(children), factor, normalized)


@dataclass
class ChildBoundReport:
    lower_bound: float
    upper_bound: float
    counts: dict  # level -> {e: count}
    violations: list  # (m, e, count)
    unverified_levels: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def histogram(self) -> dict:
        hist: dict[int, int] = {}
        for m, per in self.counts.items():
            if m in self.unverified_levels:
                continue
            for c in per.values():
                hist[c] = hist.get(c, 0) + 1
        return dict(sorted(hist.items()))


def check_child_bounds(h: NetHierarchy, s_prime: float, t_prime: float, max_level: int | None = None):
    """Check A^t' <= #S_{e,m+1} <= A^s' for every e in S_m, m < J.

    Levels above ``max_level`` are still counted but reported as unverified
    and never produce violations.
    """
    lo = h.scale_base**t_prime
    hi = h.scale_base**s_prime
    counts, violations, unverified = {}, [], []
    for m in range(h.depth):
        per = h.child_counts(m)
        counts[m] = per
        if max_level is not None and m > max_level:
            unverified.append(m)
            continue
        for e, c in per.items():
            if c < lo * (1 - REL_TOL) or c > hi * (1 + REL_TOL):
                violations.append((m, e, c))
    return ChildBoundReport(lo, hi, counts, violations, unverified)


def hierarchy_document(h: NetHierarchy) -> dict:
    ids = h.space.ids
    return {
        "scale_base": h.scale_base,
        "depth": h.depth,
        "normalized": h.normalized,
        "normalization": h.normalization,
        "levels": [
            {
                "level": j,
                "separation": h.separation(j),
                "members": [ids[i] for i in members],
                "parent": None if j == 0 else {str(ids[g]): ids[e] for g, e in h.parent[j - 1].items()},
                "child_counts": None if j == h.depth else {str(ids[e]): len(g) for e, g in h.children[j].items()},
            }
            for j, members in enumerate(h.levels)
        ],
    }
