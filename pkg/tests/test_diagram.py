import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vecchaos.chaos import (SimpleKernel, analytic_covariance, evaluate, evaluate_tensor,
                            random_kernel, tensor_kernel, zero_kernel)
from vecchaos.diagram import (Diagram, contract, contraction_norm_ratio, corollary_expansion,
                              diagram_count, enumerate_diagrams, product_expansion,
                              tensor_contraction_factors)
from vecchaos.errors import VecChaosError
from vecchaos.grid import unit_torus
from vecchaos.sampler import sample
from vecchaos.spectral import random_measure


def _smooth(system, freq, width=1.0):
    x = system.representatives[:, 0]
    return np.exp(-0.5 * x * x / width**2 + 1j * freq * x)


def test_small_counts():
    assert [len(enumerate_diagrams(*nm)) for nm in [(1, 1), (2, 1), (2, 2)]] == [2, 3, 7]
    sizes = sorted(g.size for g in enumerate_diagrams(2, 2))
    assert sizes == [0, 1, 1, 1, 1, 2, 2]


def test_counts_match_closed_form():
    for n in range(1, 6):
        for m in range(1, 6):
            ds = enumerate_diagrams(n, m)
            assert len(ds) == diagram_count(n, m)
            assert len(set(ds)) == len(ds)
    assert diagram_count(3, 3) == 1 + 9 + 18 + 6


def test_worked_example_shape():
    g = Diagram(3, 4, ((2, 4), (3, 1)))
    c1, c2 = (2, 3, 5), (1, 5, 4, 2)
    assert g.output_colours(c1, c2) == (2, 5, 4)
    assert g.contraction_measures(c1, c2) == ((3, 2), (5, 1))
    assert g.output_order == 3


def test_invalid_diagrams():
    with pytest.raises(VecChaosError):
        Diagram(2, 2, ((1, 1), (1, 2)))
    with pytest.raises(VecChaosError):
        Diagram(2, 2, ((3, 1),))


def test_empty_diagram_is_tensor_product(example_measure):
    G = example_measure
    rng = np.random.default_rng(0)
    h1 = random_kernel(G.system, (1, 2), rng)
    h2 = random_kernel(G.system, (2,), rng)
    out = contract(h1, h2, Diagram(2, 1, ()), G)
    assert out.colours == (1, 2, 2)
    want = SimpleKernel(G.system, (1, 2, 2), np.multiply.outer(h1.values, h2.values))
    assert np.abs(out.values - want.values).max() <= 1e-15


def test_single_edge_is_covariance(example_measure):
    G = example_measure
    rng = np.random.default_rng(1)
    h1 = random_kernel(G.system, (1,), rng)
    h2 = random_kernel(G.system, (2,), rng)
    out = contract(h1, h2, Diagram(1, 1, ((1, 1),)), G)
    assert out.order == 0
    assert out.values.real == pytest.approx(analytic_covariance(h1, h2, G), rel=1e-13)


def test_zero_second_kernel(example_measure):
    G = example_measure
    h1 = random_kernel(G.system, (1, 2), np.random.default_rng(2))
    for _, k in product_expansion(h1, zero_kernel(G.system, (1, 1)), G):
        assert not np.any(k.values)


def test_corollary_matches_diagrams(example_measure):
    G = example_measure
    rng = np.random.default_rng(3)
    h1 = random_kernel(G.system, (2, 1), rng)
    phi = random_kernel(G.system, (2,), rng)
    diag = product_expansion(h1, phi, G)
    cor = corollary_expansion(h1, phi, G)
    assert len(diag) == len(cor) == 3
    for (g, a), b in zip(diag, cor):
        assert a.colours == b.colours
        assert np.abs(a.values - b.values).max() <= 1e-12


def test_corollary_factor_for_tensor_kernels(example_measure):
    G = example_measure
    s = G.system
    p = [_smooth(s, 0.2), _smooth(s, 0.7, 1.3), _smooth(s, -0.4)]
    h1 = tensor_kernel(p[:2], (1, 2), s)
    phi = SimpleKernel(s, (1,), p[2])
    t2 = corollary_expansion(h1, phi, G)[2]
    # E U_2 U_3, leaving out the cells c = +-k that the zeroed diagonal of h1 removes
    w = p[1] * np.conj(p[2]) * G.entry(2, 1)
    eu = w.sum() - w - w[s.negation]
    want = SimpleKernel(s, (1,), p[0] * eu, tol=1e-10)
    assert t2.colours == (1,)
    assert np.abs(t2.values - want.values).max() <= 1e-13


def test_norm_inequality_random_pairs():
    s = unit_torus(1, 6)
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = int(rng.integers(1, 3))
        G = random_measure(s, d, rng)
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        h1 = random_kernel(s, tuple(rng.integers(1, d + 1, n)), rng)
        h2 = random_kernel(s, tuple(rng.integers(1, d + 1, m)), rng)
        for g in enumerate_diagrams(n, m):
            lhs, rhs = contraction_norm_ratio(h1, h2, g, G)
            assert lhs <= rhs * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3), m=st.integers(1, 2))
def test_factored_contraction_matches_dense(seed, n, m):
    rng = np.random.default_rng(seed)
    s = unit_torus(1, 8)
    G = random_measure(s, 2, rng)
    p1 = [_smooth(s, f) for f in rng.uniform(-1, 1, n)]
    p2 = [_smooth(s, f, 1.5) for f in rng.uniform(-1, 1, m)]
    c1 = [int(c) for c in rng.integers(1, 3, n)]
    c2 = [int(c) for c in rng.integers(1, 3, m)]
    h1, h2 = tensor_kernel(p1, c1, s), tensor_kernel(p2, c2, s)
    smp = sample(G, seed, 4)
    for g in enumerate_diagrams(n, m):
        dense = evaluate(smp, contract(h1, h2, g, G))
        fac = evaluate_tensor(smp, *tensor_contraction_factors(p1, c1, p2, c2, g, G))
        assert np.allclose(dense, fac, atol=1e-12, rtol=1e-12)


def test_full_matching_sum_is_covariance(example_measure):
    G = example_measure
    s = G.system
    p1 = [_smooth(s, 0.3), _smooth(s, 0.8)]
    p2 = [_smooth(s, 0.1, 1.3), _smooth(s, 0.5, 1.3)]
    h1, h2 = tensor_kernel(p1, (1, 2), s), tensor_kernel(p2, (2, 1), s)
    full = [contract(h1, h2, g, G) for g in enumerate_diagrams(2, 2) if g.size == 2]
    total = sum(float(k.values.real) for k in full)
    assert total == pytest.approx(analytic_covariance(h1, h2, G), rel=1e-12)


def test_shape_mismatch(example_measure):
    h = random_kernel(example_measure.system, (1,), np.random.default_rng(0))
    with pytest.raises(VecChaosError):
        contract(h, h, Diagram(2, 1, ()), example_measure)
