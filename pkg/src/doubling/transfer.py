"""Level-by-level mass transfer producing a measure with two-sided ball bounds.

A measure on the net S_m is refined to S_{m+1} by splitting each parent's
mass evenly over its children and then walking every close pair of S_{m+1}
once, moving mass from the heavier to the lighter point until their ratio is
exactly ``c1``.  Every step is audited: local comparability (a), the band
A^-s' f0(e) <= f1(g) <= A^-t' f0(e) (b), conservation (c), bounded transport
distance (d) and the absence of relayed mass.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisViolation, PartitionBroken
from .nets import REL_TOL, NetHierarchy
from .space import PseudoMetricSpace

CONSERVATION_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative masses on the points of a net level.

    ``mass`` is indexed by point index over the whole working space and is
    zero off ``support``.
    """

    level: int
    mass: np.ndarray
    support: tuple

    def __post_init__(self):
        m = np.array(self.mass, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def __getitem__(self, i):
        return float(self.mass[i])

    def as_dict(self, ids=None) -> dict:
        ids = ids if ids is not None else range(len(self.mass))
        return {ids[i]: float(self.mass[i]) for i in self.support}


@dataclass(frozen=True)
class TransferRecord:
    step: int
    source: int
    dest: int
    amount: float
    distance: float
    level: int
    kind: str  # "split" | "rebalance" | "init" | "settle"


@dataclass(frozen=True)
class TransferConstants:
    a: float
    c1: float
    c2: float
    c4: float
    s_prime: float
    t_prime: float
    c_d: float = 1.0

    @classmethod
    def from_exponents(cls, a: float, c_d: float, s_prime: float, t_prime: float) -> "TransferConstants":
        return cls(
            a=a,
            c1=a ** (s_prime - t_prime),
            c2=8 * c_d**3,
            c4=2 * c_d**2 / (1 - c_d / a),
            s_prime=s_prime,
            t_prime=t_prime,
            c_d=c_d,
        )


@dataclass
class StepReport:
    level: int
    prop_a: bool
    prop_b: bool
    prop_c: bool
    prop_d: bool
    no_relay: bool
    moves: int
    rebalances: int
    drift: float
    max_split_distance: float = 0.0
    max_rebalance_distance: float = 0.0
    max_effective_distance: float = 0.0
    distance_bound: float = 0.0
    renormalized: bool = False
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.prop_a and self.prop_b and self.prop_c and self.prop_d and self.no_relay


# -- primitives --------------------------------------------------------------


def pairs_within(space: PseudoMetricSpace, members, threshold: float) -> list[tuple[int, int]]:
    """Unordered pairs of ``members`` at distance <= threshold, lexicographic."""
    idx = np.array(sorted(members), dtype=int)
    if len(idx) < 2:
        return []
    block = space.dist[np.ix_(idx, idx)] <= threshold
    iu, ju = np.nonzero(np.triu(block, 1))
    return [(int(idx[i]), int(idx[j])) for i, j in zip(iu, ju)]


def close_pairs(h: NetHierarchy, m: int, c2: float) -> list[tuple[int, int]]:
    """Pairs of S_{m+1} within c2 A^-(m+1), in lexicographic index order."""
    members = h.levels[min(m + 1, h.depth)]
    return pairs_within(h.space, members, c2 * h.separation(m + 1))


def homogeneous_split(f0: DiscreteMeasure, h: NetHierarchy):
    """Spread each parent's mass evenly over its children at level m + 1."""
    m = f0.level
    mass = np.zeros_like(f0.mass)
    records = []
    dist = h.space.dist
    for e in h.levels[m]:
        kids = h.children[m][e] if m < h.depth else (e,)
        if not kids:
            raise PartitionBroken(f"net point {e} at level {m} has no children")
        share = f0.mass[e] / len(kids)
        for g in kids:
            mass[g] = share
            if g != e:
                records.append(TransferRecord(len(records), e, g, float(share), float(dist[e, g]), m, "split"))
    # Exact conservation: the parent keeps whatever rounding left over.
    for e in h.levels[m]:
        kids = h.children[m][e] if m < h.depth else (e,)
        if e in kids:
            mass[e] = f0.mass[e] - sum(mass[g] for g in kids if g != e)
    support = h.levels[min(m + 1, h.depth)]
    return DiscreteMeasure(m + 1, mass, support), records


def _compliant(x: float, y: float, c1: float) -> bool:
    return x <= c1 * y * (1 + REL_TOL) and y <= c1 * x * (1 + REL_TOL)


def _rebalance_inplace(mass: np.ndarray, g1: int, g2: int, c1: float):
    x, y = mass[g1], mass[g2]
    if _compliant(x, y, c1):
        return None
    heavy, light = (g1, g2) if x > y else (g2, g1)
    delta = (mass[heavy] - c1 * mass[light]) / (c1 + 1)
    mass[heavy] -= delta
    mass[light] += delta
    return heavy, light, float(delta)


def rebalance_pair(f: DiscreteMeasure, pair, c1: float, space: PseudoMetricSpace | None = None):
    """Move mass across ``pair`` so the heavier side is exactly ``c1`` times
    the lighter one; compliant pairs (ratio within [1/c1, c1]) are untouched."""
    mass = np.array(f.mass)
    moved = _rebalance_inplace(mass, pair[0], pair[1], c1)
    if moved is None:
        return f, None
    heavy, light, delta = moved
    d = float(space.dist[heavy, light]) if space is not None else float("nan")
    rec = TransferRecord(0, heavy, light, delta, d, f.level - 1, "rebalance")
    return DiscreteMeasure(f.level, mass, f.support), rec


# -- refinement --------------------------------------------------------------


def check_hypothesis(f0: DiscreteMeasure, h: NetHierarchy, k: TransferConstants):
    """Raise HypothesisViolation unless f0(e') <= c1 f0(e) on close pairs of S_m."""
    m = f0.level
    thr = k.c2 * h.separation(m)
    for e1, e2 in pairs_within(h.space, h.levels[min(m, h.depth)], thr):
        if not _compliant(f0.mass[e1], f0.mass[e2], k.c1):
            heavy, light = (e1, e2) if f0.mass[e1] > f0.mass[e2] else (e2, e1)
            raise HypothesisViolation(
                f"level {m}: mass ratio {f0.mass[heavy] / f0.mass[light]:.6g} exceeds C1={k.c1:.6g} "
                f"on pair ({heavy}, {light}) at distance {h.space.dist[heavy, light]:.6g}",
                level=m,
                pair=(heavy, light),
            )


def refine_measure(
    f0: DiscreteMeasure,
    h: NetHierarchy,
    k: TransferConstants,
    order: str = "lex",
    seed: int | None = None,
):
    """One refinement step: f0 on S_m -> f1 on S_{m+1}.

    Returns (f1, records, StepReport).  ``order="random"`` processes the
    close pairs in a seeded random order instead of lexicographically.
    """
    m = f0.level
    check_hypothesis(f0, h, k)
    f00, records = homogeneous_split(f0, h)
    pairs = close_pairs(h, m, k.c2)
    if order == "random":
        random.Random(seed).shuffle(pairs)
    elif order != "lex":
        raise ValueError(f"unknown pair order {order!r}")
    mass = np.array(f00.mass)
    target = f0.total
    drift = 0.0
    dist = h.space.dist
    for g1, g2 in pairs:
        moved = _rebalance_inplace(mass, g1, g2, k.c1)
        if moved is None:
            continue
        heavy, light, delta = moved
        records.append(TransferRecord(len(records), heavy, light, delta, float(dist[heavy, light]), m, "rebalance"))
        drift = max(drift, abs(float(mass.sum()) - target))
    renormalized = False
    if abs(float(mass.sum()) - target) > CONSERVATION_TOL:
        mass *= target / mass.sum()
        renormalized = True
    f1 = DiscreteMeasure(m + 1, mass, f00.support)
    report = audit_step(f0, f1, h, k, records)
    report.drift = max(report.drift, drift)
    report.renormalized = renormalized
    return f1, records, report


def audit_step(f0: DiscreteMeasure, f1: DiscreteMeasure, h: NetHierarchy, k: TransferConstants, records) -> StepReport:
    """Re-verify properties (a)-(d) and no-relay from scratch."""
    m = f0.level
    space = h.space
    dist = space.dist
    fine = np.array(h.levels[min(m + 1, h.depth)])
    w = {}

    # (a) full pairwise rescan, independent of the incremental pass
    thr = k.c2 * h.separation(m + 1)
    block = dist[np.ix_(fine, fine)] <= thr
    np.fill_diagonal(block, False)
    fm = f1.mass[fine]
    bad_a = block & (fm[:, None] > k.c1 * fm[None, :] * (1 + REL_TOL))
    prop_a = not bad_a.any()
    if not prop_a:
        i, j = np.argwhere(bad_a)[0]
        w["a"] = (int(fine[i]), int(fine[j]))

    # (b) band around the parent's mass
    lo = h.scale_base ** (-k.s_prime)
    hi = h.scale_base ** (-k.t_prime)
    prop_b = True
    for e, kids in (h.children[m].items() if m < h.depth else ((e, (e,)) for e in h.levels[m])):
        for g in kids:
            v = f1.mass[g]
            if v < lo * f0.mass[e] * (1 - REL_TOL) or v > hi * f0.mass[e] * (1 + REL_TOL):
                prop_b = False
                w.setdefault("b", (int(e), int(g)))

    # (c)
    drift = abs(f1.total - f0.total)
    prop_c = drift <= CONSERVATION_TOL

    # (d) every unit of mass ends within 2 C_d A^-m of the parent it came from
    bound = 2 * k.c_d * h.separation(m)
    parent = h.parent[m] if m < h.depth else {g: g for g in fine}
    max_split = max_reb = max_eff = 0.0
    prop_d = True
    for r in records:
        if r.kind == "split":
            max_split = max(max_split, r.distance)
            eff = r.distance
        else:
            max_reb = max(max_reb, r.distance)
            eff = float(dist[parent[r.source], r.dest])
            if r.distance > thr * (1 + REL_TOL):
                prop_d = False
                w.setdefault("d", r)
        max_eff = max(max_eff, eff)
        if eff > bound * (1 + REL_TOL):
            prop_d = False
            w.setdefault("d", r)

    # no point receives rebalanced mass and later sends some on
    received = set()
    no_relay = True
    for r in records:
        if r.kind != "rebalance":
            continue
        if r.source in received:
            no_relay = False
            w.setdefault("relay", r)
        received.add(r.dest)

    return StepReport(
        level=m,
        prop_a=prop_a,
        prop_b=prop_b,
        prop_c=prop_c,
        prop_d=prop_d,
        no_relay=no_relay,
        moves=len(records),
        rebalances=sum(r.kind == "rebalance" for r in records),
        drift=drift,
        max_split_distance=max_split,
        max_rebalance_distance=max_reb,
        max_effective_distance=max_eff,
        distance_bound=bound,
        witnesses=w,
    )


@dataclass
class MeasureBuild:
    measure: DiscreteMeasure
    log: list
    steps: list
    snapshots: list
    stabilization_level: int
    constants: TransferConstants
    hierarchy: NetHierarchy
    settle_moves: int = 0

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.steps)


def build_measure(h: NetHierarchy, k: TransferConstants, order: str = "lex", seed: int | None = None) -> MeasureBuild:
    """Iterate the refinement from S_0 down to S_J = X, then settle.

    mu_0 is uniform on S_0 (a single point in normalized mode); several
    roots are first rebalanced pairwise at threshold c2.  Past the deepest
    net the nets stop changing, and rebalancing continues on X at shrinking
    thresholds c2 A^-(m+1) until no pair qualifies; that level is recorded
    as the stabilization level.
    """
    space = h.space
    n = space.n
    roots = h.levels[0]
    mass = np.zeros(n)
    mass[list(roots)] = 1.0 / len(roots)
    log = []
    for g1, g2 in pairs_within(space, roots, k.c2):
        moved = _rebalance_inplace(mass, g1, g2, k.c1)
        if moved is not None:
            heavy, light, delta = moved
            log.append(TransferRecord(len(log), heavy, light, delta, float(space.dist[heavy, light]), -1, "init"))
    mu = DiscreteMeasure(0, mass, roots)
    snapshots = [mu]
    steps = []
    for m in range(h.depth):
        mu, records, report = refine_measure(mu, h, k, order=order, seed=None if seed is None else seed + m)
        log.extend(_renumber(records, len(log)))
        steps.append(report)
        snapshots.append(mu)
    level = h.depth
    settle = 0
    mass = np.array(mu.mass)
    everyone = tuple(range(n))
    while True:
        pairs = pairs_within(space, everyone, k.c2 * h.separation(level + 1))
        if not pairs:
            break
        for g1, g2 in pairs:
            moved = _rebalance_inplace(mass, g1, g2, k.c1)
            if moved is not None:
                heavy, light, delta = moved
                log.append(
                    TransferRecord(len(log), heavy, light, delta, float(space.dist[heavy, light]), level, "settle")
                )
                settle += 1
        level += 1
    final = DiscreteMeasure(level, mass, everyone)
    return MeasureBuild(final, log, steps, snapshots, level, k, h, settle)


def _renumber(records, offset):
    return [TransferRecord(offset + i, r.source, r.dest, r.amount, r.distance, r.level, r.kind) for i, r in enumerate(records)]


def measure_document(build: MeasureBuild) -> dict:
    h, k = build.hierarchy, build.constants
    ids = h.space.ids
    return {
        "masses": {str(ids[i]): float(build.measure.mass[i]) for i in range(h.space.n)},
        "ids": list(ids),
        "metadata": {
            "a": k.a,
            "s_prime": k.s_prime,
            "t_prime": k.t_prime,
            "c_d": k.c_d,
            "c1": k.c1,
            "c2": k.c2,
            "c4": k.c4,
            "depth": h.depth,
            "stabilization_level": build.stabilization_level,
            "settle_moves": build.settle_moves,
            "normalized": h.normalized,
            "normalization": h.normalization,
            "conservation_drift": max((s.drift for s in build.steps), default=0.0),
            "all_steps_passed": build.passed,
        },
    }
