"""Finite pseudo-metric spaces: construction, validation, generators and I/O.

Points are addressed internally by their index ``0..n-1``; the ``ids`` tuple
maps indices back to the labels used in documents.  Index order is the
"ascending point-id order" used by every deterministic scan in the package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegeneratePair,
    InvalidDistance,
    InvalidRatio,
    MetricMismatch,
    SymmetryViolation,
)

METRIC_TYPES = ("matrix", "euclidean", "max", "snowflake")

# Float noise on collinear triples can push the triangle ratio of a true
# metric a few ulps above 1.
_UNIT_SNAP = 1e-12

# Largest integer exactly representable in binary64.
_EXACT_LIMIT = 2**53


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    members: frozenset

    def __contains__(self, item):
        return item in self.members

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True, eq=False)
class PseudoMetricSpace:
    """A finite set with a symmetric, quasi-triangle distance table.

    ``dist`` is validated on construction and made read-only.  ``coords`` and
    ``exact_coords`` are optional; when exact rational coordinates are present
    the distance table was computed from them with correct rounding, so
    comparisons against correctly rounded rational radii are faithful.
    """

    ids: tuple
    dist: np.ndarray
    metric: dict = field(default_factory=lambda: {"type": "matrix"})
    coords: np.ndarray | None = None
    exact_coords: tuple | None = None

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        n = len(self.ids)
        if d.shape != (n, n):
            raise InvalidDistance(f"distance table has shape {d.shape}, expected ({n}, {n})")
        if len(set(self.ids)) != n:
            raise ConfigError("point ids must be unique")
        if not np.all(np.isfinite(d)):
            raise InvalidDistance("distance table contains non-finite entries")
        if np.any(d < 0):
            i, j = np.argwhere(d < 0)[0]
            raise InvalidDistance(f"negative distance between {self.ids[i]!r} and {self.ids[j]!r}")
        if np.any(np.diag(d) != 0):
            i = int(np.flatnonzero(np.diag(d))[0])
            raise InvalidDistance(f"nonzero self-distance at {self.ids[i]!r}")
        asym = d != d.T
        if np.any(asym):
            i, j = np.argwhere(asym)[0]
            raise SymmetryViolation(
                f"dist({self.ids[i]!r},{self.ids[j]!r})={d[i, j]!r} "
                f"but dist({self.ids[j]!r},{self.ids[i]!r})={d[j, i]!r}"
            )
        off = ~np.eye(n, dtype=bool)
        if np.any((d == 0) & off):
            i, j = np.argwhere((d == 0) & off)[0]
            raise DegeneratePair(f"distinct points {self.ids[i]!r} and {self.ids[j]!r} are at distance 0")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        if self.coords is not None:
            c = np.array(self.coords, dtype=float).reshape(n, -1)
            c.setflags(write=False)
            object.__setattr__(self, "coords", c)

    def __len__(self):
        return len(self.ids)

    @property
    def n(self) -> int:
        return len(self.ids)

    def index(self, point_id) -> int:
        return self._index[point_id]

    @cached_property
    def _index(self):
        return {pid: i for i, pid in enumerate(self.ids)}

    @cached_property
    def c_d(self) -> float:
        return quasi_triangle_constant(self)

    @cached_property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    @cached_property
    def min_distance(self) -> float:
        """Smallest positive distance (``inf`` for a singleton)."""
        if self.n < 2:
            return math.inf
        iu = np.triu_indices(self.n, 1)
        return float(self.dist[iu].min())

    @cached_property
    def distinct_distances(self) -> np.ndarray:
        """Sorted distinct pairwise distances, 0 included."""
        iu = np.triu_indices(self.n, 1)
        vals = np.unique(np.concatenate(([0.0], self.dist[iu])))
        vals.setflags(write=False)
        return vals

    @cached_property
    def sorted_neighbours(self):
        """Per-center (order, sorted distances); used for fast ball queries."""
        order = np.argsort(self.dist, axis=1, kind="stable")
        return order, np.take_along_axis(self.dist, order, axis=1)

    def ball(self, center: int, radius: float) -> Ball:
        if radius <= 0:
            raise ConfigError("ball radius must be positive")
        members = np.flatnonzero(self.dist[center] < radius)
        return Ball(center, float(radius), frozenset(int(i) for i in members))

    def subspace(self, indices: Iterable[int]) -> "PseudoMetricSpace":
        idx = sorted(set(int(i) for i in indices))
        sub = self.dist[np.ix_(idx, idx)]
        coords = None if self.coords is None else self.coords[idx]
        exact = None if self.exact_coords is None else tuple(self.exact_coords[i] for i in idx)
        return PseudoMetricSpace(tuple(self.ids[i] for i in idx), sub, dict(self.metric), coords, exact)

    def scaled(self, factor: float) -> "PseudoMetricSpace":
        """Multiply every distance by ``factor`` (coordinates follow for
        homogeneous metric rules)."""
        if factor <= 0:
            raise ConfigError("scale factor must be positive")
        metric = dict(self.metric)
        coords = None
        if self.coords is not None and metric["type"] in ("euclidean", "max"):
            coords = self.coords * factor
        else:
            metric = {"type": "matrix"}
        return PseudoMetricSpace(self.ids, self.dist * factor, metric, coords, None)


def quasi_triangle_constant(space: PseudoMetricSpace) -> float:
    """Least C >= 1 with d(x,z) <= C (d(x,y) + d(y,z)) over all triples."""
    d = space.dist
    n = len(d)
    worst = 1.0
    if n < 3:
        return worst
    off = ~np.eye(n, dtype=bool)
    for y in range(n):
        denom = d[:, y][:, None] + d[y, :][None, :]
        mask = off.copy()
        mask[y, :] = False
        mask[:, y] = False
        ratio = d[mask] / denom[mask]
        worst = max(worst, float(ratio.max()))
    if worst <= 1.0 + _UNIT_SNAP:
        return 1.0
    return worst


# -- distance tables ---------------------------------------------------------


def _distance_table(coords: np.ndarray, metric: dict, exact=None) -> np.ndarray:
    kind = metric["type"]
    if exact is not None and (kind == "max" or coords.shape[1] == 1):
        table = _exact_table(exact)
        if table is not None:
            if kind == "snowflake":
                table = table ** float(metric["p"])
            return table
    diff = coords[:, None, :] - coords[None, :, :]
    if kind == "max":
        return np.abs(diff).max(axis=2)
    eu = np.sqrt((diff**2).sum(axis=2))
    if kind == "snowflake":
        return eu ** float(metric["p"])
    return eu


def _exact_table(exact) -> np.ndarray | None:
    """Max-coordinate distances computed from rationals, correctly rounded.

    Returns None when the common denominator or numerators leave the range
    where binary64 holds integers exactly.
    """
    flat = [q for row in exact for q in row]
    den = reduce(lambda a, b: a * b // math.gcd(a, b), (q.denominator for q in flat), 1)
    nums = [[int(q * den) for q in row] for row in exact]
    if den >= _EXACT_LIMIT or any(abs(v) >= _EXACT_LIMIT // 2 for row in nums for v in row):
        return None
    arr = np.array(nums, dtype=np.int64)
    diff = np.abs(arr[:, None, :] - arr[None, :, :]).max(axis=2)
    # int64 -> float64 is exact below 2**53 and the division is correctly rounded.
    return diff.astype(float) / float(den)


def _check_metric(metric: dict) -> dict:
    kind = metric.get("type")
    if kind not in METRIC_TYPES:
        raise ConfigError(f"unknown metric type {kind!r}; expected one of {METRIC_TYPES}")
    out = {"type": kind}
    if kind == "snowflake":
        if "p" not in metric:
            raise ConfigError("snowflake metric requires a power 'p'")
        p = float(to_fraction(metric["p"]))
        if not 0 < p <= 1:
            raise ConfigError(f"snowflake power must lie in (0, 1], got {p}")
        out["p"] = p
    return out


def to_fraction(value) -> Fraction:
    """Parse ``1/3``, ``"0.25"``, ints, floats or Fractions exactly."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


def from_coordinates(ids: Sequence, coords, metric: dict) -> PseudoMetricSpace:
    """Build a space from coordinates (floats or exact rationals)."""
    metric = _check_metric(metric)
    if metric["type"] == "matrix":
        raise ConfigError("matrix metric needs a table, not coordinates")
    rows = [list(c) if isinstance(c, (list, tuple, np.ndarray)) else [c] for c in coords]
    if len({len(r) for r in rows}) > 1:
        raise ConfigError("all points must have the same coordinate dimension")
    exact = None
    if all(isinstance(v, (Fraction, int, str)) for r in rows for v in r):
        exact = tuple(tuple(to_fraction(v) for v in r) for r in rows)
        fl = np.array([[float(v) for v in r] for r in exact], dtype=float)
    else:
        fl = np.array([[float(v) for v in r] for r in rows], dtype=float)
    fl = fl.reshape(len(rows), -1)
    table = _distance_table(fl, metric, exact)
    return PseudoMetricSpace(tuple(ids), table, metric, fl, exact)


def from_matrix(ids: Sequence, table) -> PseudoMetricSpace:
    return PseudoMetricSpace(tuple(ids), np.asarray(table, dtype=float), {"type": "matrix"})


# -- documents ---------------------------------------------------------------


def load_space(file_spec) -> PseudoMetricSpace:
    """Load a space-description document (path, JSON string or dict).

    Document layout::

        {"points": [{"id": ..., "coords": [...]}, ...],
         "metric": {"type": "matrix"|"euclidean"|"max"|"snowflake",
                    "p": ..., "table": [[...]]}}

    Coordinates given as strings such as ``"1/3"`` are kept exact.
    """
    if isinstance(file_spec, dict):
        doc = file_spec
    else:
        path = Path(file_spec)
        doc = json.loads(path.read_text())
    try:
        points = doc["points"]
        metric = dict(doc["metric"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"space document lacks required key: {exc}") from None
    ids = [p["id"] for p in points]
    if metric.get("type") == "matrix":
        table = metric.get("table")
        if table is None:
            raise ConfigError("matrix metric requires a 'table'")
        return from_matrix(ids, table)
    try:
        coords = [p["coords"] for p in points]
    except KeyError:
        raise ConfigError("coordinate metrics require 'coords' on every point") from None
    return from_coordinates(ids, coords, metric)


def space_document(space: PseudoMetricSpace) -> dict:
    """Serializable dump; includes the computed c_d and diameter."""
    points = []
    for i, pid in enumerate(space.ids):
        entry = {"id": pid}
        if space.exact_coords is not None:
            entry["coords"] = [str(q) for q in space.exact_coords[i]]
        elif space.coords is not None:
            entry["coords"] = [float(v) for v in space.coords[i]]
        points.append(entry)
    metric = dict(space.metric)
    if metric["type"] == "matrix":
        metric["table"] = space.dist.tolist()
    return {
        "points": points,
        "metric": metric,
        "c_d": space.c_d,
        "diameter": space.diameter,
        "size": space.n,
    }


def dump_space(space: PseudoMetricSpace, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(space_document(space), indent=1))
    return path


# -- generators --------------------------------------------------------------


def cantor_endpoints(ratio, level: int, interval=(0, 1)) -> list[Fraction]:
    """Endpoints of the surviving intervals after ``level`` deletion steps."""
    r = to_fraction(ratio)
    if not 0 < r <= Fraction(1, 2):
        raise InvalidRatio(f"contraction ratio must lie in (0, 1/2], got {ratio}")
    if level < 0:
        raise ConfigError("level must be >= 0")
    a, b = (to_fraction(v) for v in interval)
    if b <= a:
        raise ConfigError("interval must satisfy b > a")
    intervals = [(a, b - a)]
    for _ in range(level):
        nxt = []
        for left, length in intervals:
            sub = r * length
            nxt.append((left, sub))
            nxt.append((left + length - sub, sub))
        intervals = nxt
    pts = set()
    for left, length in intervals:
        pts.add(left)
        pts.add(left + length)
    return sorted(pts)


def generate_cantor(contraction_ratio, level: int, interval=(0, 1)) -> PseudoMetricSpace:
    """Finite Cantor approximation with the euclidean (line) distance.

    Each surviving interval is replaced by its two end subintervals of
    relative length ``contraction_ratio``; both endpoints of every interval
    at depth ``level`` are returned (``2**(level+1)`` points when the ratio
    is below 1/2).
    """
    pts = cantor_endpoints(contraction_ratio, level, interval)
    return from_coordinates(range(len(pts)), [[p] for p in pts], {"type": "euclidean"})


def union_spaces(a: PseudoMetricSpace, b: PseudoMetricSpace) -> PseudoMetricSpace:
    """Union of two coordinate spaces under the same metric rule.

    Coincident points are merged; the result is re-indexed in ascending
    coordinate order and all distances are recomputed.
    """
    if a.coords is None or b.coords is None:
        raise MetricMismatch("union requires coordinates on both spaces")
    if a.metric != b.metric:
        raise MetricMismatch(f"cannot unite {a.metric} with {b.metric}")
    if a.coords.shape[1] != b.coords.shape[1]:
        raise MetricMismatch("coordinate dimensions differ")
    if a.exact_coords is not None and b.exact_coords is not None:
        pts = sorted(set(a.exact_coords) | set(b.exact_coords))
    else:
        rows = {tuple(float(v) for v in r) for r in np.vstack([a.coords, b.coords])}
        pts = sorted(rows)
    return from_coordinates(range(len(pts)), [list(p) for p in pts], a.metric)


# -- radii -------------------------------------------------------------------


def default_scale_cap(space: PseudoMetricSpace, normalized: bool) -> float:
    """Largest admissible ball radius.

    Normalized spaces use 1.  Raw spaces use a value one part in 1e9 above
    the diameter, so that the whole space is a single open ball.
    """
    if normalized:
        return 1.0
    if space.n < 2:
        return 1.0
    return space.diameter * (1 + 1e-9)


def spectrum_radii(space: PseudoMetricSpace, scale_cap: float) -> np.ndarray:
    """Radii strictly between consecutive distinct distances, capped.

    Includes a radius below the smallest positive distance and the cap
    itself, so every distinct ball shape up to the cap is represented.
    """
    vals = space.distinct_distances
    mids = (vals[:-1] + vals[1:]) / 2
    mids = mids[mids < scale_cap]
    return np.append(mids, scale_cap)


def dyadic_radii(space: PseudoMetricSpace, scale_cap: float) -> np.ndarray:
    """Radii ``cap * 2**-i`` down to half the minimum distance."""
    floor = space.min_distance / 2 if space.n > 1 else scale_cap
    out = []
    r = scale_cap
    while r >= floor:
        out.append(r)
        r /= 2
    if not out:
        out.append(scale_cap)
    return np.array(sorted(out))
