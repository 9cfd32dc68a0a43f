"""Separated sets, packing counts N(x, R, k) and dimension-exponent fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InvalidResolution, OracleTooLarge
from .space import PseudoMetricSpace, default_scale_cap, dyadic_radii, spectrum_radii

DEFAULT_ORACLE_CAP = 24


@dataclass(frozen=True)
class PackingObservation:
    center: int
    r_small: float
    r_big: float
    k: float
    count: int
    exact: bool


@dataclass(frozen=True)
class DimensionFit:
    """Exponent ``gamma`` with the tightest constant ``c`` for the data.

    For ``side == "upper"`` every observation satisfies value <= c k**gamma,
    for ``"lower"`` value >= c k**gamma.  ``witness`` attains the bound.
    """

    gamma: float
    c: float
    side: str
    witness: object


# -- separated sets ----------------------------------------------------------


def close_masks(space: PseudoMetricSpace, separation: float) -> list[int]:
    """Bitmask per point of the *other* points closer than ``separation``."""
    close = space.dist < separation
    np.fill_diagonal(close, False)
    packed = np.packbits(close, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def greedy_scan(order: Iterable[int], close: Sequence[int]) -> list[int]:
    """Keep each point of ``order`` unless it is too close to one already kept."""
    chosen = []
    taken = 0
    for i in order:
        if not close[i] & taken:
            chosen.append(i)
            taken |= 1 << i
    return chosen


def greedy_separated(space: PseudoMetricSpace, candidates, separation: float) -> list[int]:
    """Maximal ``separation``-separated subset of ``candidates``.

    Candidates are scanned in ascending index order, so the result is
    deterministic.  Every rejected candidate lies at distance < separation
    from some selected point.
    """
    if separation <= 0:
        raise ConfigError("separation must be positive")
    cand = sorted(set(int(c) for c in candidates))
    if not cand:
        raise ConfigError("candidate set is empty")
    return greedy_scan(cand, close_masks(space, separation))


def _mis_size(adj: list[int], full: int) -> int:
    """Maximum independent set size of a small graph given as bitmasks."""
    memo: dict[int, int] = {}

    def solve(mask: int) -> int:
        if mask == 0:
            return 0
        hit = memo.get(mask)
        if hit is not None:
            return hit
        lo_v = hi_v = -1
        lo_deg = math.inf
        hi_deg = -1
        m = mask
        while m:
            bit = m & -m
            v = bit.bit_length() - 1
            deg = (adj[v] & mask).bit_count()
            if deg < lo_deg:
                lo_v, lo_deg = v, deg
            if deg > hi_deg:
                hi_v, hi_deg = v, deg
            m ^= bit
        if lo_deg <= 1:
            # A vertex of degree <= 1 belongs to some maximum independent set.
            best = 1 + solve(mask & ~(adj[lo_v] | (1 << lo_v)))
        else:
            best = solve(mask & ~(1 << hi_v))
            if 1 + mask.bit_count() - 1 - hi_deg > best:
                best = max(best, 1 + solve(mask & ~(adj[hi_v] | (1 << hi_v))))
        memo[mask] = best
        return best

    return solve(full)


def exact_packing_number(
    space: PseudoMetricSpace,
    ball_members,
    separation: float,
    cap: int = DEFAULT_ORACLE_CAP,
) -> int:
    """Largest ``separation``-separated subset of ``ball_members``.

    Exhaustive branch and bound on the graph joining points closer than
    ``separation``; raises OracleTooLarge above ``cap`` points.
    """
    members = sorted(set(int(i) for i in ball_members))
    if len(members) > cap:
        raise OracleTooLarge(f"{len(members)} points exceed the exact-oracle cap {cap}")
    if len(members) <= 1:
        return len(members)
    sub = space.dist[np.ix_(members, members)] < separation
    np.fill_diagonal(sub, False)
    adj = [sum(1 << int(j) for j in np.flatnonzero(row)) for row in sub]
    return _mis_size(adj, (1 << len(members)) - 1)


def _local_count(members: list[int], close: list[int], exact: bool, cap: int) -> tuple[int, bool]:
    greedy = len(greedy_scan(members, close))
    if not exact or len(members) > cap or greedy == len(members):
        return greedy, greedy == len(members)
    pos = {g: i for i, g in enumerate(members)}
    memb_mask = 0
    for g in members:
        memb_mask |= 1 << g
    adj = []
    for g in members:
        nb = close[g] & memb_mask
        local = 0
        while nb:
            bit = nb & -nb
            local |= 1 << pos[bit.bit_length() - 1]
            nb ^= bit
        adj.append(local)
    return _mis_size(adj, (1 << len(members)) - 1), True


# -- profiles ----------------------------------------------------------------


class PackingProfile(list):
    """List of PackingObservation with cached array views for fitting."""

    def __init__(self, observations=(), scale_cap=None, policy=None, mode=None):
        super().__init__(observations)
        self.scale_cap = scale_cap
        self.policy = policy
        self.mode = mode

    def arrays(self):
        k = np.array([o.k for o in self], dtype=float)
        count = np.array([o.count for o in self], dtype=float)
        return k, count

    @property
    def all_exact(self) -> bool:
        return all(o.exact for o in self)


def profile_radii(space: PseudoMetricSpace, policy: str, scale_cap: float) -> np.ndarray:
    if policy == "spectrum":
        return spectrum_radii(space, scale_cap)
    if policy == "dyadic":
        return dyadic_radii(space, scale_cap)
    raise ConfigError(f"unknown radii policy {policy!r}")


def packing_profile(
    space: PseudoMetricSpace,
    radii_policy: str = "spectrum",
    mode: str = "exact",
    scale_cap: float | None = None,
    oracle_cap: int = DEFAULT_ORACLE_CAP,
    centers: Sequence[int] | None = None,
) -> PackingProfile:
    """One observation per center and radius pair ``R <= kR <= scale_cap``.

    ``mode="exact"`` uses the branch-and-bound oracle when the ball holds at
    most ``oracle_cap`` points and falls back to the greedy count (flagged
    ``exact=False``) otherwise.  ``mode="greedy"`` always counts greedily;
    counts that equal the ball size are still flagged exact.
    """
    if mode not in ("exact", "greedy"):
        raise ConfigError(f"unknown mode {mode!r}")
    if space.n == 0:
        raise ConfigError("space is empty")
    cap = default_scale_cap(space, normalized=False) if scale_cap is None else scale_cap
    radii = profile_radii(space, radii_policy, cap)
    order, sdist = space.sorted_neighbours
    centers = range(space.n) if centers is None else centers
    obs = []
    for ri, r_small in enumerate(radii):
        close = close_masks(space, r_small)
        for x in centers:
            for r_big in radii[ri:]:
                n_in = int(np.searchsorted(sdist[x], r_big, side="left"))
                members = sorted(int(i) for i in order[x, :n_in])
                count, exact = _local_count(members, close, mode == "exact", oracle_cap)
                obs.append(
                    PackingObservation(int(x), float(r_small), float(r_big), float(r_big / r_small), count, exact)
                )
    return PackingProfile(obs, scale_cap=cap, policy=radii_policy, mode=mode)


# -- fits --------------------------------------------------------------------


def _fit(k: np.ndarray, value: np.ndarray, gamma: float, upper: bool) -> tuple[float, int]:
    with np.errstate(over="ignore"):
        scaled = value / k**gamma
    i = int(np.argmax(scaled) if upper else np.argmin(scaled))
    return float(scaled[i]), i


def fit_upper_dimension(profile, gamma: float) -> DimensionFit:
    """Minimal C with count <= C k**gamma on every observation."""
    if not len(profile):
        raise ConfigError("profile is empty")
    if gamma < 0:
        raise ConfigError("gamma must be >= 0")
    k, count = _profile_arrays(profile)
    c, i = _fit(k, count, gamma, upper=True)
    return DimensionFit(float(gamma), c, "upper", profile[i])


def fit_lower_dimension(profile, gamma: float) -> DimensionFit:
    """Maximal C with count >= C k**gamma on every observation.

    Greedy counts never exceed the true packing number, so they are valid
    data for this side.
    """
    if not len(profile):
        raise ConfigError("profile is empty")
    if gamma < 0:
        raise ConfigError("gamma must be >= 0")
    k, count = _profile_arrays(profile)
    c, i = _fit(k, count, gamma, upper=False)
    return DimensionFit(float(gamma), c, "lower", profile[i])


def _profile_arrays(profile):
    if hasattr(profile, "arrays"):
        return profile.arrays()
    return (
        np.array([o.k for o in profile], dtype=float),
        np.array([o.count for o in profile], dtype=float),
    )


def gamma_grid(resolution: float, gamma_max: float) -> np.ndarray:
    if not resolution > 0:
        raise InvalidResolution(f"resolution must be positive, got {resolution}")
    steps = int(math.floor(gamma_max / resolution + 1e-9))
    return np.arange(steps + 1) * resolution


def scan_curve(k: np.ndarray, value: np.ndarray, side: str, resolution: float, gamma_max: float):
    """Fitted constant as a function of gamma on a uniform grid."""
    if side not in ("upper", "lower"):
        raise ConfigError(f"side must be 'upper' or 'lower', got {side!r}")
    grid = gamma_grid(resolution, gamma_max)
    logk = np.log(k)
    logv = np.log(value)
    out = []
    for g in grid:
        s = logv - g * logk
        c = s.max() if side == "upper" else s.min()
        out.append((float(g), float(math.exp(c))))
    return out


def scan_dimension(profile, side: str, resolution: float, gamma_max: float = 1.5):
    """Sweep gamma = 0, resolution, 2 resolution, ... up to ``gamma_max``.

    Returns the list of (gamma, c) pairs; for an upper fit on data with
    k >= 1 the constant is nonincreasing in gamma.
    """
    k, count = _profile_arrays(profile)
    return scan_curve(k, count, side, resolution, gamma_max)


def curve_knee(curve, side: str, k_max: float, threshold: float = 0.5) -> float:
    """Where the constant curve c(gamma) flattens out.

    The slope of ln c is taken per unit of ln k_max, the largest dilation in
    the profile, so a slope of 1 means the constant moves by the full range
    k_max**dgamma.  The upper curve falls steeply and then flattens; its knee
    is the first grid gamma whose forward slope magnitude is below
    ``threshold``.  The lower curve is flat and then falls; its knee is the
    last gamma before the magnitude reaches ``threshold``.
    """
    if side not in ("upper", "lower"):
        raise ConfigError(f"side must be 'upper' or 'lower', got {side!r}")
    g = np.array([p[0] for p in curve], dtype=float)
    if len(g) < 2 or not k_max > 1:
        return float(g[0]) if side == "upper" else float(g[-1])
    logc = np.log([p[1] for p in curve])
    slope = np.abs(np.diff(logc) / np.diff(g)) / math.log(k_max)
    if side == "upper":
        flat = np.flatnonzero(slope < threshold)
        return float(g[flat[0]]) if len(flat) else float(g[-1])
    steep = np.flatnonzero(slope >= threshold)
    return float(g[steep[0]]) if len(steep) else float(g[-1])
