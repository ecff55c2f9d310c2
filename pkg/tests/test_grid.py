import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vecchaos.errors import SymmetryViolation, VecChaosError
from vecchaos.grid import (Box, RegularSystem, build_symmetric_grid, match_positions,
                           parent_positions, refine, scale_system, unit_torus)


def test_two_cell_line():
    s = build_symmetric_grid(1, np.pi, 2)
    assert s.n_cells == 2
    c1, cm1 = s.cell(1), s.cell(-1)
    assert np.allclose([c1.lower[0], c1.upper[0]], [0, np.pi])
    assert np.allclose([cm1.lower[0], cm1.upper[0]], [-np.pi, 0])
    assert s.representatives[s.position(1), 0] == pytest.approx(np.pi / 2)
    assert s.representatives[s.position(-1), 0] == pytest.approx(-np.pi / 2)


def test_odd_count_rejected():
    with pytest.raises(SymmetryViolation):
        build_symmetric_grid(1, np.pi, 3)


def test_quadrants():
    s = build_symmetric_grid(2, (np.pi, np.pi), (2, 2))
    assert s.n_cells == 4
    assert sorted(s.signed_index.tolist()) == [-2, -1, 1, 2]
    for k in (1, 2):
        a, b = s.cell(k), s.cell(-k)
        assert np.array_equal(a.lower, -b.upper) and np.array_equal(a.upper, -b.lower)
        assert np.allclose(np.abs(a.upper - a.lower), np.pi)


def test_refine_midpoints():
    s = refine(unit_torus(1, 2), 2)
    edges = sorted(set(s.lower[:, 0].tolist()) | set(s.upper[:, 0].tolist()))
    assert np.allclose(edges, [-np.pi, -np.pi / 2, 0, np.pi / 2, np.pi])


def test_refine_identity():
    s = unit_torus(2, (4, 2))
    assert refine(s, 1) == s


def test_refine_quadrants_by_three():
    s = refine(build_symmetric_grid(2, (np.pi, np.pi), (2, 2)), 3)
    assert s.n_cells == 36
    neg = s.negation
    assert np.array_equal(s.lower[neg], -s.upper)
    assert np.array_equal(s.representatives[neg], -s.representatives)


@settings(max_examples=40, deadline=None)
@given(dim=st.integers(1, 3), data=st.data())
def test_negation_closure(dim, data):
    cpa = data.draw(st.lists(st.sampled_from([2, 4, 6]), min_size=dim, max_size=dim))
    he = data.draw(st.lists(st.floats(0.1, 10), min_size=dim, max_size=dim))
    s = build_symmetric_grid(dim, he, cpa)
    neg = s.negation
    assert np.array_equal(neg[neg], np.arange(s.n_cells))
    assert np.array_equal(s.signed_index[neg], -s.signed_index)
    assert np.array_equal(s.representatives[neg], -s.representatives)
    assert np.all(neg != np.arange(s.n_cells))
    # cells tile the box
    assert np.isclose(s.cell_volume * s.n_cells, s.box.volume)
    # every representative lies in its own cell
    u = s.representatives
    assert np.all((u >= s.lower) & (u < s.upper))


def test_parents_and_matching():
    coarse = unit_torus(1, 4)
    fine = refine(coarse, 2)
    par = parent_positions(fine, coarse)
    for p, q in enumerate(par):
        assert coarse.lower[q, 0] <= fine.representatives[p, 0] < coarse.upper[q, 0]
    big = scale_system(unit_torus(1, 8), 2.0)
    small = unit_torus(1, 4)
    pos = match_positions(small, big)
    assert np.allclose(big.lower[pos], small.lower)


def test_dict_roundtrip():
    s = build_symmetric_grid(2, (1.0, 2.0), (2, 4))
    assert RegularSystem.from_dict(s.to_dict()) == s


def test_bad_box():
    with pytest.raises(VecChaosError):
        Box((0.0,))
    with pytest.raises(VecChaosError):
        build_symmetric_grid(2, (1.0, 1.0), (2, 2, 2))
