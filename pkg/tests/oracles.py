"""Slow, independent reference implementations used to cross-check the package.

Everything here works on plain Python lists and Fractions and shares no code
with the package.
"""

from __future__ import annotations

import itertools
from fractions import Fraction


def cantor_points(ratio: Fraction, level: int, a=Fraction(0), b=Fraction(1)) -> list[Fraction]:
    intervals = [(a, b)]
    for _ in range(level):
        nxt = []
        for lo, hi in intervals:
            sub = (hi - lo) * ratio
            nxt += [(lo, lo + sub), (hi - sub, hi)]
        intervals = nxt
    return sorted({p for iv in intervals for p in iv})


def triangle_constant(points, dist) -> Fraction | float:
    best = 1
    for x, y, z in itertools.permutations(range(len(points)), 3):
        den = dist(points[x], points[y]) + dist(points[y], points[z])
        if den > 0:
            best = max(best, dist(points[x], points[z]) / den)
    return best


def max_separated_bruteforce(points, dist, sep) -> int:
    """Largest subset with all pairwise distances >= sep, by enumeration."""
    n = len(points)
    for size in range(n, 0, -1):
        for combo in itertools.combinations(range(n), size):
            if all(dist(points[i], points[j]) >= sep for i, j in itertools.combinations(combo, 2)):
                return size
    return 0


def is_maximal_separated(points, dist, chosen, candidates, sep) -> bool:
    ok = all(dist(points[i], points[j]) >= sep for i, j in itertools.combinations(chosen, 2))
    return ok and all(any(dist(points[c], points[s]) < sep for s in chosen) for c in candidates if c not in chosen)


def nested_nets(points, dist, base, scale=Fraction(1)):
    """Greedy nested nets on exact distances multiplied by ``scale``."""
    n = len(points)
    levels = []
    prev: list[int] = []
    j = 0
    while True:
        sep = Fraction(1, base**j)
        chosen = []
        for i in prev + [i for i in range(n) if i not in prev]:
            if all(dist(points[i], points[c]) * scale >= sep for c in chosen):
                chosen.append(i)
        levels.append(sorted(chosen))
        if len(chosen) == n:
            return levels
        prev = sorted(chosen)
        j += 1


def parents(points, dist, coarse, fine):
    return {g: min(coarse, key=lambda e: (dist(points[g], points[e]), e)) for g in fine}


def ball_ratio_extremes(points, dist, mass, radii):
    """(max, min) of mu(B(x, R2)) / mu(B(x, R1)) over centers and R1 <= R2."""
    hi, lo = 0.0, float("inf")
    for x in range(len(points)):
        bm = [sum(m for y, m in enumerate(mass) if dist(points[x], points[y]) < r) for r in radii]
        for i in range(len(radii)):
            for j in range(i, len(radii)):
                hi = max(hi, bm[j] / bm[i])
                lo = min(lo, bm[j] / bm[i])
    return hi, lo


def line(a, b):
    return abs(a - b)


def spectrum_midpoints(points, dist, cap):
    ds = sorted({dist(p, q) for p in points for q in points})
    mids = [(a + b) / 2 for a, b in zip(ds, ds[1:])]
    return [r for r in mids if r <= cap] + [cap]


def doubling_constant_exact(points, dist, mass, cap):
    """sup of mu(B(x,2R)) / mu(B(x,R)) over 0 < 2R <= cap.

    Evaluated at every breakpoint d and d/2, every midpoint between
    consecutive breakpoints, and cap/2, all in exact arithmetic.
    """
    top = cap / 2
    best = Fraction(1)
    for x in points:
        d = sorted((dist(x, y), m) for y, m in zip(points, mass))
        marks = sorted({v for dy, _ in d if dy > 0 for v in (dy, dy / 2)} | {top})
        marks = [r for r in marks if r <= top]
        cand = marks + [(a + b) / 2 for a, b in zip(marks, marks[1:])]
        if marks:
            cand.append(marks[0] / 2)
        for r in cand:
            small = sum(m for dy, m in d if dy < r)
            big = sum(m for dy, m in d if dy < 2 * r)
            best = max(best, big / small)
    return best


def branching_masses(points, pieces):
    """Exact per-piece uniform branching masses, summed and normalized.

    ``pieces`` holds (ratio, depth, a, b); each surviving interval gives half
    its share to each endpoint.
    """
    mass = {p: Fraction(0) for p in points}
    for ratio, depth, a, b in pieces:
        intervals = [(a, b)]
        for _ in range(depth):
            nxt = []
            for lo, hi in intervals:
                sub = (hi - lo) * ratio
                nxt += [(lo, lo + sub), (hi - sub, hi)]
            intervals = nxt
        share = Fraction(1, 2 * len(intervals))
        for lo, hi in intervals:
            mass[lo] += share
            mass[hi] += share
    total = sum(mass.values())
    return [mass[p] / total for p in points]


def touching_points(level):
    return sorted(set(cantor_points(Fraction(1, 3), 2 * level)) | set(cantor_points(Fraction(1, 9), level, Fraction(1), Fraction(2))))


def touching_pieces(level):
    return [(Fraction(1, 3), 2 * level, Fraction(0), Fraction(1)), (Fraction(1, 9), level, Fraction(1), Fraction(2))]
