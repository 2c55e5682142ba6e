import itertools
import random

import pytest

from z2higgs.dec import BoxSpec, Cell, Chain, Z2Form, boundary, chain_boundary, coboundary, differential, evaluate, rho
from z2higgs.errors import DimensionError

BOX2 = BoxSpec(((0, 2), (0, 2)))
BOX3 = BoxSpec(((0, 1), (0, 1), (0, 1)))


def test_rho_homomorphism():
    for a in (0, 1):
        for b in (0, 1):
            assert rho(a + b) == rho(a) * rho(b)
    assert rho(0) == 1 and rho(1) == -1


def test_boundary_unit_square():
    p = Cell(2, (0, 0), (0, 1))
    dp = boundary(p)
    assert len(dp) == 4
    assert all(abs(n) == 1 for _, n in dp.items())
    assert chain_boundary(dp).is_zero()


def test_boundary_edge():
    e = Cell(1, (2, 1), (0,))
    de = boundary(e)
    assert de[Cell(0, (3, 1), ())] == 1
    assert de[Cell(0, (2, 1), ())] == -1


def test_boundary_cube():
    c = Cell(3, (0, 0, 0), (0, 1, 2))
    dc = boundary(c)
    assert len(dc) == 6
    assert all(abs(n) == 1 for _, n in dc.items())
    assert chain_boundary(dc).is_zero()


def test_boundary_negated_cell():
    p = Cell(2, (1, 0), (0, 1))
    assert boundary(-p) == -boundary(p)


def test_boundary_of_vertex_raises():
    with pytest.raises(DimensionError):
        boundary(Cell(0, (0, 0), ()))


@pytest.mark.parametrize("box", [BOX2, BOX3])
def test_dd_zero_exhaustive(box):
    for k in range(2, box.m + 1):
        for c in box.cells(k):
            assert chain_boundary(boundary(c)).is_zero()


@pytest.mark.parametrize("box", [BOX2, BOX3])
def test_coboundary_duality_exhaustive(box):
    for k in range(0, box.m):
        parents = list(box.cells(k + 1))
        for c in box.cells(k):
            cob = coboundary(c, box).support()
            for cp in parents:
                assert (cp in cob) == (c in boundary(cp).support())


def test_coboundary_counts():
    # interior edge in m=2 has two plaquettes, boundary edge one
    assert len(coboundary(Cell(1, (1, 1), (0,)), BOX2)) == 2
    assert len(coboundary(Cell(1, (0, 0), (0,)), BOX2)) == 1
    box3 = BoxSpec(((0, 2),) * 3)
    assert len(coboundary(Cell(1, (1, 1, 1), (0,)), box3)) == 4


def test_coboundary_top_cell_raises():
    with pytest.raises(DimensionError):
        coboundary(Cell(2, (0, 0), (0, 1)), BOX2)


def test_differential_single_edge_form():
    e = Cell(1, (1, 1), (0,))
    form = Z2Form(BOX2, 1, frozenset([e]))
    d = differential(form)
    assert d.support == frozenset(c.positive() for c in coboundary(e, BOX2).support())


def test_differential_zero_form_twice():
    lam = Z2Form(BOX2, 0, frozenset([Cell(0, (1, 1), ())]))
    assert len(differential(differential(lam))) == 0


def test_differential_top_raises():
    form = Z2Form(BOX2, 2, frozenset())
    with pytest.raises(DimensionError):
        differential(form)


def test_dd_zero_random_forms():
    rng = random.Random(20240811)
    edges = list(BOX3.cells(1))
    for _ in range(1000):
        support = frozenset(e for e in edges if rng.random() < 0.3)
        form = Z2Form(BOX3, 1, support)
        assert len(differential(differential(form))) == 0


def test_evaluate_examples():
    plaqs = list(BOX2.cells(2))
    zero = Z2Form(BOX2, 2, frozenset())
    q4 = Chain(2, {p: 1 for p in plaqs[:4]})
    assert evaluate(zero, q4) == 0
    full = Z2Form(BOX2, 2, frozenset(plaqs[:4]))
    assert evaluate(full, q4) == 0          # 4 mod 2
    single = Z2Form(BOX2, 2, frozenset([plaqs[0]]))
    assert evaluate(single, Chain(2, {plaqs[0]: 1})) == 1


def test_evaluate_dimension_mismatch():
    form = Z2Form(BOX2, 2, frozenset())
    with pytest.raises(DimensionError):
        evaluate(form, Chain(1))


def test_form_negative_cell_symmetry():
    e = Cell(1, (0, 1), (1,))
    form = Z2Form(BOX2, 1, frozenset([-e]))
    assert form(e) == form(-e) == 1


def test_chain_negated_lookup():
    e = Cell(1, (0, 0), (0,))
    ch = Chain(1, {e: 3})
    assert ch[-e] == -3
    assert (ch + (-ch)).is_zero()


def test_cell_text_roundtrip():
    cells = [Cell(2, (0, 1), (0, 1)), Cell(1, (2, 0), (1,), -1), Cell(0, (1, 1), ())]
    for c in cells:
        assert Cell.from_text(c.to_text()) == c
    assert Cell(2, (0, 1), (0, 1)).to_text() == "2:(0,1):12:+"


def test_box_validation():
    with pytest.raises(DimensionError):
        BoxSpec(((0, 3),))
    with pytest.raises(ValueError):
        BoxSpec(((0, 3), (2, 1)))


def test_cell_counts_small_boxes():
    # acceptance-suite boxes stay under 200 cells
    assert sum(BOX2.count_cells(k) for k in range(3)) <= 200
    assert sum(BOX3.count_cells(k) for k in range(4)) <= 200
