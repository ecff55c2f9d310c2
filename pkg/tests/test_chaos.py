import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vecchaos.chaos import (SimpleKernel, analytic_covariance, evaluate, evaluate_tensor,
                            permute_kernel, random_kernel, second_moment_bound, set_partitions,
                            tensor_kernel, zero_kernel)
from vecchaos.errors import GridMismatch, NotRealKernel, VecChaosError
from vecchaos.grid import unit_torus
from vecchaos.sampler import integrate_one_fold, one_fold_covariance, sample
from vecchaos.spectral import random_measure

R = 100_000


def _smooth(system, freq, width=1.0):
    x = system.representatives[:, 0]
    return np.exp(-0.5 * x * x / width**2 + 1j * freq * x)


def test_tensor_on_two_cells_vanishes():
    s = unit_torus(1, 2)
    h = tensor_kernel([np.ones(2), np.ones(2)], (1, 1), s)
    assert not h.values.any()


def test_tensor_on_four_cells_counts_off_diagonal_tuples():
    s = unit_torus(1, 4)
    h = tensor_kernel([np.ones(4), np.ones(4)], (1, 1), s)
    assert np.count_nonzero(h.values) == 8
    for (k1, k2), v in h.nonzero_entries():
        assert abs(k1) != abs(k2) and v == 1


def test_tensor_order_one_is_unchanged():
    s = unit_torus(1, 6)
    phi = _smooth(s, 0.3)
    assert np.array_equal(tensor_kernel([phi], (2,), s).values, phi)


def test_non_hermitian_kernel_rejected():
    s = unit_torus(1, 4)
    with pytest.raises(NotRealKernel):
        SimpleKernel(s, (1,), np.array([1j, 0, 0, 0]))


def test_evaluate_zero_and_indicator(example_measure):
    G = example_measure
    s = G.system
    smp = sample(G, 4, 10)
    assert np.all(evaluate(smp, zero_kernel(s, (1, 2))) == 0)
    ind = np.zeros(s.n_cells)
    ind[[s.position(1), s.position(-1)]] = 1
    z = smp.component(2)
    got = evaluate(smp, SimpleKernel(s, (2,), ind))
    assert np.allclose(got, (z[:, s.position(1)] + z[:, s.position(-1)]).real, atol=1e-15)


def test_evaluate_hand_expansion():
    s = unit_torus(1, 4)
    G = random_measure(s, 1, np.random.default_rng(2))
    v = np.zeros((4, 4), complex)
    v[s.position(1), s.position(2)] = 1
    v[s.position(-1), s.position(-2)] = 1
    smp = sample(G, 77)
    z = smp.component(1)
    want = 2 * (z[s.position(1)] * z[s.position(2)]).real
    assert evaluate(smp, SimpleKernel(s, (1, 1), v)) == pytest.approx(want, abs=1e-15)


def test_covariance_order_one_matches_one_fold(example_measure):
    G = example_measure
    s = G.system
    f = SimpleKernel(s, (1,), _smooth(s, 0.4))
    h = SimpleKernel(s, (2,), _smooth(s, -0.2, 1.5))
    want = one_fold_covariance(G, f.values, h.values, 1, 2)
    assert analytic_covariance(f, h, G) == pytest.approx(want, rel=1e-13)
    assert analytic_covariance(f, f, G) == pytest.approx(second_moment_bound(f, G), rel=1e-13)


def test_covariance_order_two_monte_carlo():
    s = unit_torus(1, 6)
    G = random_measure(s, 1, np.random.default_rng(5))
    f = random_kernel(s, (1, 1), np.random.default_rng(6))
    x = evaluate(sample(G, 9, R), f)
    sq = x * x
    want = analytic_covariance(f, f, G)
    assert abs(sq.mean() - want) <= 3 * sq.std() / np.sqrt(R)


def test_cross_order_moment_vanishes(example_measure):
    G = example_measure
    rng = np.random.default_rng(7)
    f1 = random_kernel(G.system, (1,), rng)
    f2 = random_kernel(G.system, (2, 1), rng)
    assert analytic_covariance(f1, f2, G) == 0.0
    smp = sample(G, 10, R)
    prod = evaluate(smp, f1) * evaluate(smp, f2)
    assert abs(prod.mean()) <= 3 * prod.std() / np.sqrt(R)


def test_bound_scalar_order_two():
    s = unit_torus(1, 6)
    rng = np.random.default_rng(8)
    for _ in range(100):
        G = random_measure(s, 1, rng)
        f = random_kernel(s, (1, 1), rng)
        assert analytic_covariance(f, f, G) <= 2 * f.norm2(G) * (1 + 1e-12)


def test_bound_strict_with_cross_spectrum():
    s = unit_torus(1, 6)
    rng = np.random.default_rng(9)
    gaps = []
    for _ in range(20):
        G = random_measure(s, 2, rng)
        f = random_kernel(s, (1, 2), rng)
        cov, bound = analytic_covariance(f, f, G), second_moment_bound(f, G)
        assert cov <= bound + 1e-10
        gaps.append(bound - cov)
    assert max(gaps) > 1e-6


def test_identity_permutation(example_measure):
    f = random_kernel(example_measure.system, (1, 2, 2), np.random.default_rng(3))
    g = permute_kernel(f, (0, 1, 2))
    assert np.array_equal(g.values, f.values) and g.colours == f.colours


def test_swap_of_tensor_kernel(example_measure):
    G = example_measure
    s = G.system
    p1, p2 = _smooth(s, 0.3), _smooth(s, 0.9, 1.4)
    h = tensor_kernel([p1, p2], (1, 2), s)
    swapped = permute_kernel(h, (1, 0))
    direct = tensor_kernel([p2, p1], (2, 1), s)
    assert swapped.colours == (2, 1)
    assert np.allclose(swapped.values, direct.values)
    smp = sample(G, 12, 20)
    assert np.allclose(evaluate(smp, h), evaluate(smp, swapped), rtol=1e-12, atol=0)


def test_cyclic_permutation_pathwise(example_measure):
    G = example_measure
    f = random_kernel(G.system, (1, 2, 1), np.random.default_rng(4))
    g = permute_kernel(f, (1, 2, 0))
    for seed in range(10):
        smp = sample(G, seed)
        a, b = evaluate(smp, f), evaluate(smp, g)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_permutation_validation(example_measure):
    f = random_kernel(example_measure.system, (1, 2), np.random.default_rng(0))
    with pytest.raises(VecChaosError):
        permute_kernel(f, (0, 0))


def test_grid_mismatch():
    a = random_kernel(unit_torus(1, 4), (1,), np.random.default_rng(0))
    b = random_kernel(unit_torus(1, 6), (1,), np.random.default_rng(0))
    with pytest.raises(GridMismatch):
        a + b


def test_set_partitions_are_bell_numbers():
    bell = [1, 1, 2, 5, 15, 52, 203]
    for n, b in enumerate(bell):
        parts = list(set_partitions(n))
        assert len(parts) == b
        for p in parts:
            assert sorted(itertools.chain.from_iterable(p)) == list(range(n))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 4), d=st.integers(1, 2))
def test_factored_evaluation_matches_dense(seed, n, d):
    rng = np.random.default_rng(seed)
    s = unit_torus(1, 6)
    G = random_measure(s, d, rng)
    phis = [_smooth(s, f, w) for f, w in zip(rng.uniform(-1, 1, n), rng.uniform(0.5, 2, n))]
    cols = [int(c) for c in rng.integers(1, d + 1, n)]
    smp = sample(G, seed, 5)
    dense = evaluate(smp, tensor_kernel(phis, cols, s))
    assert np.allclose(evaluate_tensor(smp, phis, cols), dense, atol=1e-12, rtol=1e-12)


def test_order_one_integral_agrees(example_measure):
    s = example_measure.system
    phi = _smooth(s, 0.6)
    smp = sample(example_measure, 1, 30)
    assert np.allclose(evaluate(smp, SimpleKernel(s, (2,), phi)), integrate_one_fold(smp, phi, 2), atol=1e-15)
