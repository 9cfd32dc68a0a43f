"""Exhaustive checks of dilated-ball mass bounds for a finite measure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedMeasure
from .nets import REL_TOL, scale_power
from .packing import DimensionFit, fit_lower_dimension, fit_upper_dimension
from .space import PseudoMetricSpace, spectrum_radii

# Full profiles above this many (center, radius pair) entries switch to the
# compressed cell representation.
FULL_PROFILE_LIMIT = 2_000_000
TRANSPORT_FULL_GRID_MAX = 512
TRANSPORT_SAMPLE = 10_000


@dataclass(frozen=True)
class BallRatioObservation:
    center: int
    r_small: float
    r_big: float
    k: float
    mass_small: float
    mass_big: float
    ratio: float


def _masses(measure) -> np.ndarray:
    return np.asarray(getattr(measure, "mass", measure), dtype=float)


def ball_mass(measure, space: PseudoMetricSpace, center: int, radius: float) -> float:
    """Mass of the open ball {y : d(center, y) < radius}."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    mass = _masses(measure)
    return float(mass[space.dist[center] < radius].sum())


def _ball_masses(space, mass, radii):
    """Matrix of ball masses, shape (n_centers, n_radii)."""
    order, sdist = space.sorted_neighbours
    cm = np.cumsum(mass[order], axis=1)
    out = np.empty((space.n, len(radii)))
    for x in range(space.n):
        cnt = np.searchsorted(sdist[x], radii, side="left")
        out[x] = cm[x, np.maximum(cnt, 1) - 1]
    return out


def _open_edge(radius):
    """Radius to compare against for an open ball whose radius was computed.

    A dilated or shifted radius such as 2R = d_i + d_j can equal another
    distance exactly while its float lands an ulp above it; shrinking by a
    relative 1e-12 treats such near-ties as the exact ties they are.
    """
    return radius * (1 - REL_TOL)


def _require_support(space, mass):
    empty = np.flatnonzero(mass <= 0)
    if len(empty):
        raise UnsupportedMeasure(f"measure has no mass at point {space.ids[empty[0]]!r}; balls around it are null")


class RatioProfile:
    """All (center, r_small <= r_big) ball-ratio observations up to the cap.

    Stored per center as cells of radii that give the same ball.  In full
    mode every spectrum radius is its own cell.  In compressed mode a cell
    keeps only its smallest and largest radius: for gamma >= 0 the largest
    ratio / k**gamma over a pair of cells is reached at (largest small
    radius, smallest big radius) and the smallest at the opposite corner,
    so both fits agree exactly with the full profile.
    """

    def __init__(self, space, scale_cap, centers, r_lo, r_hi, mass, compressed):
        self.space = space
        self.scale_cap = scale_cap
        self.centers = centers
        self.r_lo = r_lo
        self.r_hi = r_hi
        self.mass = mass
        self.compressed = compressed

    def _pairs(self, i, side):
        lo, hi, m = self.r_lo[i], self.r_hi[i], self.mass[i]
        n = len(lo)
        a, b = np.triu_indices(n, 0)
        if side == "upper":
            rs, rb = hi[a], lo[b]
            same = a == b
            rs = np.where(same, lo[a], rs)
        else:
            rs, rb = lo[a], hi[b]
        return rs, rb, m[a], m[b]

    def __len__(self):
        total = 0
        for i in range(len(self.centers)):
            n = len(self.r_lo[i])
            total += n * (n + 1) // 2 * (2 if self.compressed else 1)
        return total

    def __iter__(self):
        sides = ("upper", "lower") if self.compressed else ("lower",)
        for i, x in enumerate(self.centers):
            for side in sides:
                rs, rb, ms, mb = self._pairs(i, side)
                for vals in zip(rs, rb, ms, mb):
                    yield _observation(x, *vals)

    def fit(self, gamma: float, side: str):
        best = -math.inf if side == "upper" else math.inf
        witness = None
        for i, x in enumerate(self.centers):
            rs, rb, ms, mb = self._pairs(i, side)
            score = (mb / ms) / (rb / rs) ** gamma
            j = int(np.argmax(score) if side == "upper" else np.argmin(score))
            if (side == "upper" and score[j] > best) or (side == "lower" and score[j] < best):
                best = float(score[j])
                witness = _observation(x, rs[j], rb[j], ms[j], mb[j])
        return best, witness

    def envelope(self, bins: int = 40):
        """Per log-k bin, the extreme ratios observed (plot data)."""
        kmax = self.scale_cap / min(lo.min() for lo in self.r_lo)
        edges = np.logspace(0, math.log10(max(kmax, 1.0)) + 1e-9, bins + 1)
        hi_ratio = np.full(bins, -np.inf)
        lo_ratio = np.full(bins, np.inf)
        for i in range(len(self.centers)):
            for side in ("upper", "lower"):
                rs, rb, ms, mb = self._pairs(i, side)
                k = rb / rs
                r = mb / ms
                idx = np.clip(np.searchsorted(edges, k, side="right") - 1, 0, bins - 1)
                np.maximum.at(hi_ratio, idx, r)
                np.minimum.at(lo_ratio, idx, r)
        rows = []
        for b in range(bins):
            if np.isfinite(hi_ratio[b]):
                rows.append((float(math.sqrt(edges[b] * edges[b + 1])), float(lo_ratio[b]), float(hi_ratio[b])))
        return rows


def _observation(x, rs, rb, ms, mb):
    return BallRatioObservation(int(x), float(rs), float(rb), float(rb / rs), float(ms), float(mb), float(mb / ms))


def ratio_profile(measure, space: PseudoMetricSpace, scale_cap: float, compress: bool | None = None) -> RatioProfile:
    """Ball ratios mu(B(x, r_big)) / mu(B(x, r_small)) over spectrum radii.

    ``compress=None`` picks the full profile when it is small enough.
    """
    mass = _masses(measure)
    _require_support(space, mass)
    radii = spectrum_radii(space, scale_cap)
    if compress is None:
        compress = space.n * len(radii) * (len(radii) + 1) // 2 > FULL_PROFILE_LIMIT
    bm = _ball_masses(space, mass, radii)
    order, sdist = space.sorted_neighbours
    r_lo, r_hi, ms = [], [], []
    for x in range(space.n):
        if not compress:
            r_lo.append(radii)
            r_hi.append(radii)
            ms.append(bm[x])
            continue
        cell = np.searchsorted(sdist[x], radii, side="left")
        starts = np.flatnonzero(np.r_[True, cell[1:] != cell[:-1]])
        ends = np.r_[starts[1:], len(radii)] - 1
        r_lo.append(radii[starts])
        r_hi.append(radii[ends])
        ms.append(bm[x, starts])
    return RatioProfile(space, scale_cap, list(range(space.n)), r_lo, r_hi, ms, compress)


def _fit_measure(profile, gamma, side):
    if isinstance(profile, RatioProfile):
        c, w = profile.fit(gamma, side)
        return DimensionFit(float(gamma), c, side, w)
    obs = list(profile)
    k = np.array([o.k for o in obs])
    ratio = np.array([o.ratio for o in obs])
    score = ratio / k**gamma
    i = int(np.argmax(score) if side == "upper" else np.argmin(score))
    return DimensionFit(float(gamma), float(score[i]), side, obs[i])


def fit_measure_upper(profile, gamma: float) -> DimensionFit:
    """Smallest C with mu(B(x,kR)) <= C k**gamma mu(B(x,R)) on the profile."""
    return _fit_measure(profile, gamma, "upper")


def fit_measure_lower(profile, gamma: float) -> DimensionFit:
    """Largest C with mu(B(x,kR)) >= C k**gamma mu(B(x,R)) on the profile."""
    return _fit_measure(profile, gamma, "lower")


def doubling_constant(measure, space: PseudoMetricSpace, scale_cap: float, dilation: float = 2.0) -> float:
    """sup of mu(B(x, dilation R)) / mu(B(x, R)) over 0 < dilation R <= scale_cap.

    Both ball masses are constant on the intervals between the breakpoints
    R = d(x, y) and R = d(x, y) / dilation, and open balls make each interval
    closed on the right, so the supremum is attained at a breakpoint or at
    R = scale_cap / dilation.  The spectrum midpoints lie inside those
    intervals and never give a larger value.
    """
    mass = _masses(measure)
    _require_support(space, mass)
    top = scale_cap / dilation
    order, sdist = space.sorted_neighbours
    cm = np.cumsum(mass[order], axis=1)
    best = 1.0
    for x in range(space.n):
        d = sdist[x, 1:]
        r = np.unique(np.r_[d, d / dilation, top])
        r = r[(r > 0) & (r <= top)]
        small = cm[x, np.searchsorted(sdist[x], r, side="left") - 1]
        big = cm[x, np.searchsorted(sdist[x], _open_edge(dilation * r), side="left") - 1]
        best = max(best, float((big / small).max()))
    return best


# -- transport ---------------------------------------------------------------


@dataclass
class TransportReport:
    checked: int
    violations: list
    min_slack: float
    full_grid: bool
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return not self.violations


def transport_bound_check(snapshots, final, constants, space: PseudoMetricSpace, sample=None, seed: int = 0):
    """Check mu_j(B(x,r)) <= mu(B(x, r + c4 A^-j)) and the reverse inclusion.

    ``sample=None`` uses the full (level, center, spectrum radius) grid when
    the space has at most 512 points and a seeded sample of 10**4 triples
    otherwise; pass ``sample="full"`` or an integer to force either.
    """
    mu = _masses(final)
    radii = spectrum_radii(space, space.diameter * 2 + 1)
    full = sample == "full" or (sample is None and space.n <= TRANSPORT_FULL_GRID_MAX)
    violations = []
    checked = 0
    slack = math.inf
    rng = np.random.default_rng(seed)
    if not full:
        count = int(sample) if isinstance(sample, int) else TRANSPORT_SAMPLE
        count = max(1, count // len(snapshots))
    order, sdist = space.sorted_neighbours
    for j, snap in enumerate(snapshots):
        mj = _masses(snap)
        grow = constants.c4 * scale_power(constants.a, j)
        if full:
            xs = np.repeat(np.arange(space.n), len(radii))
            rs = np.tile(radii, space.n)
            pairs = (
                (_ball_masses(space, mj, radii), _ball_masses(space, mu, _open_edge(radii + grow)), "mu_j<=mu"),
                (_ball_masses(space, mu, radii), _ball_masses(space, mj, _open_edge(radii + grow)), "mu<=mu_j"),
            )
            pairs = tuple((lhs.ravel(), rhs.ravel(), which) for lhs, rhs, which in pairs)
        else:
            xs = rng.integers(0, space.n, count)
            rs = rng.choice(radii, count)
            d = space.dist[xs]
            inner = d < rs[:, None]
            outer = d < _open_edge(rs + grow)[:, None]
            pairs = (
                ((mj * inner).sum(axis=1), (mu * outer).sum(axis=1), "mu_j<=mu"),
                ((mu * inner).sum(axis=1), (mj * outer).sum(axis=1), "mu<=mu_j"),
            )
        for lhs, rhs, which in pairs:
            gap = rhs - lhs
            slack = min(slack, float(gap.min()))
            for i in np.flatnonzero(gap < -1e-12):
                violations.append((j, int(xs[i]), float(rs[i]), float(lhs[i]), float(rhs[i]), which))
        checked += 2 * len(xs)
    return TransportReport(checked, violations, slack, full, None if full else seed)


# -- consistency between packing data and measure data -------------------------


@dataclass
class ConsistencyReport:
    gamma_upper: float
    gamma_lower: float
    measure_upper: float
    packing_upper: float
    upper_bound: float
    upper_ok: bool
    measure_lower: float
    packing_lower: float
    lower_bound: float
    lower_ok: bool
    dilation_constant: float
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.upper_ok and self.lower_ok


def trivial_inequality_report(
    packing,
    ratios,
    gamma_upper: float,
    gamma_lower: float,
    c_d: float,
    dilation_constant: float,
) -> ConsistencyReport:
    """Cross-check packing fits against measure fits.

    A measure with upper constant C at exponent gamma forces packing counts
    N <= C 8**gamma C_d**(3 gamma) k**gamma.  A measure with lower constant C
    whose 2 C_d dilation constant is D forces N >= (C / D) k**gamma.
    ``dilation_constant`` is that D, measured on the same measure.
    """
    mu_up = fit_measure_upper(ratios, gamma_upper)
    pk_up = fit_upper_dimension(packing, gamma_upper)
    ub = mu_up.c * 8**gamma_upper * c_d ** (3 * gamma_upper)
    mu_lo = fit_measure_lower(ratios, gamma_lower)
    pk_lo = fit_lower_dimension(packing, gamma_lower)
    lb = mu_lo.c / dilation_constant
    return ConsistencyReport(
        gamma_upper,
        gamma_lower,
        mu_up.c,
        pk_up.c,
        ub,
        pk_up.c <= ub * (1 + REL_TOL),
        mu_lo.c,
        pk_lo.c,
        lb,
        pk_lo.c >= lb * (1 - REL_TOL),
        dilation_constant,
        {"packing_upper": pk_up.witness, "packing_lower": pk_lo.witness},
    )


# -- weak conditions -----------------------------------------------------------


def check_weak_conditions(measure, space: PseudoMetricSpace, scale_cap: float, u_fit: DimensionFit, l_fit: DimensionFit):
    """Check the single-ball bounds implied by the fits with k R = cap:

    mu(B(x,R)) >= mu(B(x,cap)) (R/cap)**s / C_U   and
    mu(B(x,R)) <= mu(B(x,cap)) (R/cap)**t / C_L.

    Returns (upper_ok, lower_ok).
    """
    mass = _masses(measure)
    radii = spectrum_radii(space, scale_cap)
    bm = _ball_masses(space, mass, radii)
    top = bm[:, -1:]
    scale = radii[None, :] / scale_cap
    floor = top * scale**u_fit.gamma / u_fit.c
    ceil = top * scale**l_fit.gamma / l_fit.c
    up_ok = bool(np.all(bm >= floor * (1 - REL_TOL)))
    lo_ok = bool(np.all(bm <= ceil * (1 + REL_TOL)))
    return up_ok, lo_ok


@dataclass
class VerificationReport:
    u_fit: DimensionFit
    l_fit: DimensionFit
    doubling_constant: float
    violations: list
    scale_cap: float
    weak_upper_ok: bool = True
    weak_lower_ok: bool = True
    plot_data: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations and self.weak_upper_ok and self.weak_lower_ok


def verify_measure(
    measure,
    space: PseudoMetricSpace,
    scale_cap: float,
    gamma_upper: float,
    gamma_lower: float,
    claimed_upper: float | None = None,
    claimed_lower: float | None = None,
) -> VerificationReport:
    """Fit both sides, compute the doubling constant and collect violations
    of any claimed constants."""
    prof = ratio_profile(measure, space, scale_cap)
    u = fit_measure_upper(prof, gamma_upper)
    lo = fit_measure_lower(prof, gamma_lower)
    violations = []
    if claimed_upper is not None and u.c > claimed_upper * (1 + REL_TOL):
        violations.append(("upper", u.witness))
    if claimed_lower is not None and lo.c < claimed_lower * (1 - REL_TOL):
        violations.append(("lower", lo.witness))
    up_ok, lo_ok = check_weak_conditions(measure, space, scale_cap, u, lo)
    return VerificationReport(
        u, lo, doubling_constant(measure, space, scale_cap), violations, scale_cap, up_ok, lo_ok, prof.envelope()
    )


def report_document(rep: VerificationReport, ids) -> dict:
    def fit_doc(f: DimensionFit):
        w = f.witness
        return {
            "gamma": f.gamma,
            "c": f.c,
            "side": f.side,
            "witness": None
            if w is None
            else {
                "center": ids[w.center],
                "r_small": w.r_small,
                "r_big": w.r_big,
                "k": w.k,
                "mass_small": w.mass_small,
                "mass_big": w.mass_big,
                "ratio": w.ratio,
            },
        }

    return {
        "upper_fit": fit_doc(rep.u_fit),
        "lower_fit": fit_doc(rep.l_fit),
        "doubling_constant": rep.doubling_constant,
        "scale_cap": rep.scale_cap,
        "weak_upper_ok": rep.weak_upper_ok,
        "weak_lower_ok": rep.weak_lower_ok,
        "violations": [[side, None if w is None else ids[w.center]] for side, w in rep.violations],
        "passed": rep.passed,
    }
