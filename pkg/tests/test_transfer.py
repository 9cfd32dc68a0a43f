import math
from fractions import Fraction

import numpy as np
import pytest

from doubling.errors import HypothesisViolation
from doubling.nets import build_hierarchy
from doubling.scenarios import LOG2_LOG9, LOG5_LOG9, touching_union
from doubling.space import from_coordinates, generate_cantor
from doubling.transfer import (
    DiscreteMeasure,
    TransferConstants,
    build_measure,
    check_hypothesis,
    close_pairs,
    homogeneous_split,
    measure_document,
    pairs_within,
    rebalance_pair,
    refine_measure,
)


def line(points):
    return from_coordinates(range(len(points)), [[p] for p in points], {"type": "euclidean"})


@pytest.fixture
def two_parents():
    # Raw mode, A = 4: S_0 = {0, 10}; S_1 = everything; 0 has children
    # {0, 0.3}, 10 has {10, 10.3, 10.6}.
    sp = line([Fraction(0), Fraction(3, 10), Fraction(10), Fraction(103, 10), Fraction(106, 10)])
    h = build_hierarchy(sp, 4, normalized=False)
    assert h.levels == ((0, 2), (0, 1, 2, 3, 4))
    return h


def test_constants():
    k = TransferConstants.from_exponents(9, 1.0, LOG5_LOG9, LOG2_LOG9)
    assert k.c1 == pytest.approx(2.5)
    assert k.c2 == 8.0
    assert k.c4 == pytest.approx(2 / (1 - 1 / 9))


def test_split_two_parents(two_parents):
    f0 = DiscreteMeasure(0, [0.5, 0, 0.5, 0, 0], (0, 2))
    f1, records = homogeneous_split(f0, two_parents)
    assert f1.mass.tolist() == pytest.approx([0.25, 0.25, 1 / 6, 1 / 6, 1 / 6], abs=1e-16)
    assert f1.total == pytest.approx(1.0, abs=1e-15)
    # children equal to their parent need no record
    assert sorted((r.source, r.dest) for r in records) == [(0, 1), (2, 3), (2, 4)]


def test_split_three_children(two_parents):
    f0 = DiscreteMeasure(0, [0.4, 0, 0.6, 0, 0], (0, 2))
    f1, _ = homogeneous_split(f0, two_parents)
    assert f1.mass[2:].tolist() == pytest.approx([0.2, 0.2, 0.2])


def test_split_single_child_no_record():
    h = build_hierarchy(line([Fraction(0), Fraction(5)]), 4, normalized=False)
    assert h.depth == 0
    f0 = DiscreteMeasure(0, [0.5, 0.5], (0, 1))
    f1, records = homogeneous_split(f0, h)
    assert records == [] and f1.mass.tolist() == [0.5, 0.5]


def test_rebalance_example():
    f = DiscreteMeasure(1, [10.0, 1.0], (0, 1))
    g, rec = rebalance_pair(f, (0, 1), 4.0)
    assert rec.amount == pytest.approx(1.2)
    assert g.mass.tolist() == pytest.approx([8.8, 2.2])
    assert g.mass[0] == pytest.approx(4 * g.mass[1], rel=1e-15)


@pytest.mark.parametrize("masses", [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0)])
def test_rebalance_compliant_untouched(masses):
    f = DiscreteMeasure(1, list(masses), (0, 1))
    g, rec = rebalance_pair(f, (0, 1), 4.0)
    assert rec is None and g is f


def test_pairs_order():
    sp = line([0.0, 0.1, 0.2])
    assert pairs_within(sp, [2, 0, 1], 1.0) == [(0, 1), (0, 2), (1, 2)]


def test_close_pairs_below_separation_empty():
    h = build_hierarchy(generate_cantor("1/3", 4), 3, normalized=True)
    assert close_pairs(h, 1, 0.99) == []


def test_touching_pair_count_level0():
    # 37 pairs of S_1 within 8/9, found by exact enumeration at L = 2, 3, 4
    for level in (2, 3, 4):
        h = build_hierarchy(touching_union(level), 9, normalized=False)
        assert len(close_pairs(h, 0, 8.0)) == 37


def test_hypothesis_violation_reports_pair():
    h = build_hierarchy(line([Fraction(0), Fraction(1), Fraction(2)]), 9, normalized=False)
    k = TransferConstants.from_exponents(9, 1.0, 0.6, 0.3)
    f0 = DiscreteMeasure(0, [0.9, 0.05, 0.05], (0, 1, 2))
    with pytest.raises(HypothesisViolation) as exc:
        check_hypothesis(f0, h, k)
    assert exc.value.level == 0 and exc.value.pair == (0, 1)


def test_singleton_root_refinement():
    h = build_hierarchy(generate_cantor("1/3", 2), 16, normalized=True)
    k = TransferConstants.from_exponents(16, 1.0, 1.0, 0.0)
    f0 = DiscreteMeasure(0, np.eye(h.space.n)[h.levels[0][0]], h.levels[0])
    f1, _, rep = refine_measure(f0, h, k)
    assert rep.passed
    assert f1.total == pytest.approx(1.0, abs=1e-12)


def test_singleton_space():
    b = build_measure(build_hierarchy(line([0.0]), 9), TransferConstants.from_exponents(9, 1.0, 0.5, 0.1))
    assert b.measure.mass.tolist() == [1.0]
    assert b.log == [] and b.passed


def test_two_point_measure():
    h = build_hierarchy(line([0.0, 1.0]), 16, normalized=True)
    b = build_measure(h, TransferConstants.from_exponents(16, 1.0, 1.0, 0.0))
    assert b.measure.mass.tolist() == [0.5, 0.5]
    assert all(r.kind == "split" for r in b.log)


@pytest.mark.parametrize("level", [2, 3, 4])
def test_touching_build_passes(level):
    h = build_hierarchy(touching_union(level), 9, normalized=False)
    k = TransferConstants.from_exponents(9, 1.0, LOG5_LOG9, LOG2_LOG9)
    b = build_measure(h, k)
    assert b.passed
    assert b.measure.total == pytest.approx(1.0, abs=1e-12)
    assert (b.measure.mass > 0).all()
    assert len(b.steps) == level


def test_cantor_level5_near_uniform():
    """With the base large enough for one split, the measure is the uniform
    branching measure on the endpoints."""
    sp = generate_cantor("1/3", 5)
    h = build_hierarchy(sp, 3187, normalized=True)
    b = build_measure(h, TransferConstants.from_exponents(3187, 1.0, 0.75, 0.5))
    assert np.abs(b.measure.mass * sp.n - 1).max() < 1e-12
    h = build_hierarchy(sp, 9, normalized=False)
    b = build_measure(h, TransferConstants.from_exponents(9, 1.0, LOG5_LOG9, LOG2_LOG9))
    assert b.passed
    assert np.abs(b.measure.mass * sp.n - 1).max() < 1e-12


def test_random_order_keeps_properties():
    h = build_hierarchy(touching_union(3), 9, normalized=True)
    k = TransferConstants.from_exponents(9, 1.0, LOG5_LOG9, LOG2_LOG9)
    for seed in range(3):
        assert build_measure(h, k, order="random", seed=seed).passed


def test_rebalances_traced_by_hand():
    # Distances in units of 1/729 with A = 9.  Level 1 is {0, 81}; level 2 is
    # {0, 36, 45, 81, 117, 153}; at level 3 the point 36 keeps one child
    # while its neighbour 45 has four: {42, 43, 44, 45}.  After the splits
    # 36 carries 1/4 and 42, 43, 44 carry 1/32 each, so with c1 = 4 the
    # lexicographic pass moves 1/40, then 1/50, then 2/125 out of 36.
    units = [0, 36, 42, 43, 44, 45, 81, 117, 153]
    h = build_hierarchy(line([Fraction(u, 729) for u in units]), 9, normalized=False)
    assert [list(x) for x in h.levels] == [[0], [0, 6], [0, 1, 5, 6, 7, 8], list(range(9))]
    k = TransferConstants.from_exponents(9, 1.0, math.log(4) / math.log(9), 0.0)
    assert k.c1 == pytest.approx(4.0)
    b = build_measure(h, k)
    moves = [(r.source, r.dest, r.amount) for r in b.log if r.kind == "rebalance"]
    assert [(s, d) for s, d, _ in moves] == [(1, 2), (1, 3), (1, 4)]
    assert [a for _, _, a in moves] == pytest.approx([1 / 40, 1 / 50, 2 / 125], rel=1e-12)
    assert b.steps[-1].rebalances == 3
    assert b.passed
    assert b.measure.mass[1] == pytest.approx(0.25 - 1 / 40 - 1 / 50 - 2 / 125, rel=1e-12)
    assert b.measure.total == pytest.approx(1.0, abs=1e-12)


def test_measure_document():
    h = build_hierarchy(touching_union(2), 9, normalized=False)
    b = build_measure(h, TransferConstants.from_exponents(9, 1.0, LOG5_LOG9, LOG2_LOG9))
    doc = measure_document(b)
    assert sum(doc["masses"].values()) == pytest.approx(1.0)
    for key in ("a", "c1", "c2", "c4", "stabilization_level", "conservation_drift"):
        assert key in doc["metadata"]
