"""Cantor-type test spaces and their natural self-similar measures.

``touching_union(L)`` is the set F = C1 u C2 truncated at level L: the
ternary set on [0, 1] at depth 2L and the 9-adic set (7/9 removed from
each middle) on [1, 2] at depth L, sharing the point 1.  Both pieces then
resolve the same smallest scale 9**-L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .space import PseudoMetricSpace, cantor_endpoints, generate_cantor, union_spaces

LOG2_LOG3 = math.log(2) / math.log(3)
LOG2_LOG9 = math.log(2) / math.log(9)
LOG5_LOG9 = math.log(5) / math.log(9)


@dataclass(frozen=True)
class CantorPiece:
    ratio: Fraction
    level: int
    interval: tuple

    @property
    def dimension(self) -> float:
        return math.log(2) / -math.log(float(self.ratio))

    def endpoints(self):
        return cantor_endpoints(self.ratio, self.level, self.interval)


def touching_pieces(level: int):
    return (
        CantorPiece(Fraction(1, 3), 2 * level, (Fraction(0), Fraction(1))),
        CantorPiece(Fraction(1, 9), level, (Fraction(1), Fraction(2))),
    )


def disjoint_pieces(level: int):
    """C_t on [0, 1] (t = log2/log9) and C_s on [2, 3] (s = log2/log3)."""
    return (
        CantorPiece(Fraction(1, 9), level, (Fraction(0), Fraction(1))),
        CantorPiece(Fraction(1, 3), 2 * level, (Fraction(2), Fraction(3))),
    )


def single_pieces(level: int):
    return (CantorPiece(Fraction(1, 3), level, (Fraction(0), Fraction(1))),)


def space_from_pieces(pieces) -> PseudoMetricSpace:
    space = generate_cantor(pieces[0].ratio, pieces[0].level, pieces[0].interval)
    for p in pieces[1:]:
        space = union_spaces(space, generate_cantor(p.ratio, p.level, p.interval))
    return space


def touching_union(level: int) -> PseudoMetricSpace:
    return space_from_pieces(touching_pieces(level))


def disjoint_union(level: int) -> PseudoMetricSpace:
    return space_from_pieces(disjoint_pieces(level))


def branching_measure(space: PseudoMetricSpace, pieces) -> np.ndarray:
    """Sum of the uniform branching measures of the pieces, normalized.

    Each piece carries mass 1 split equally over its 2**level surviving
    intervals and equally over the two endpoints of each interval.  A point
    shared by two pieces collects mass from both (the density jump at the
    junction of F lives there).
    """
    if space.exact_coords is None:
        raise ValueError("branching measure needs exact coordinates")
    pos = {c[0]: i for i, c in enumerate(space.exact_coords)}
    mass = np.zeros(space.n)
    for p in pieces:
        intervals = 2**p.level
        share = 1.0 / (2 * intervals)
        pts = _interval_endpoints(p)
        for left, right in pts:
            mass[pos[left]] += share
            mass[pos[right]] += share
    return mass / mass.sum()


def _interval_endpoints(piece: CantorPiece):
    a, b = piece.interval
    intervals = [(a, b - a)]
    for _ in range(piece.level):
        nxt = []
        for left, length in intervals:
            sub = piece.ratio * length
            nxt.append((left, sub))
            nxt.append((left + length - sub, sub))
        intervals = nxt
    return [(left, left + length) for left, length in intervals]


SCENARIOS = {
    "cantor": single_pieces,
    "disjoint": disjoint_pieces,
    "touching": touching_pieces,
}


def scenario_space(name: str, level: int):
    pieces = SCENARIOS[name](level)
    return space_from_pieces(pieces), pieces
