import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import one_pair
from vecchaos.errors import NotRealKernel, VecChaosError
from vecchaos.grid import build_symmetric_grid, match_positions, unit_torus
from vecchaos.sampler import (empirical_cross_moments, integrate_one_fold, one_fold_covariance,
                              sample, sample_batches, synthesize_field)
from vecchaos.spectral import MatrixSpectralMeasure, correlation, random_measure

R = 100_000


def _within(est, se, target, k=3.0):
    return abs(est - target) <= k * se


def test_single_pair_variances():
    m = 0.7
    z = sample(one_pair(1, [[m]]), 1, R).component(1)[:, 0]
    for part in (z.real, z.imag):
        v = part.var(ddof=1)
        se = np.sqrt(2 / (R - 1)) * (m / 2)
        assert _within(v, se, m / 2)
    a = np.abs(z) ** 2
    assert _within(a.mean(), a.std() / np.sqrt(R), m)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), d=st.integers(1, 3))
def test_conjugate_pairs_sum_to_real(seed, d):
    G = random_measure(unit_torus(1, 6), d, np.random.default_rng(seed % 2**32))
    smp = sample(G, seed)
    v = smp.values
    assert np.array_equal(v[G.system.negation], v.conj())
    assert np.all((v + v[G.system.negation]).imag == 0)


def test_cross_colour_moment():
    G = one_pair(2, np.array([[1, 0.5], [0.5, 1]]) / 2)
    herm, herm_se, pseudo, pseudo_se = empirical_cross_moments(sample(G, 3, R))
    p = G.system.position(1)
    assert _within(herm[p, 0, 1].real, herm_se[p, 0, 1].real, 0.25)
    assert _within(herm[p, 0, 1].imag, herm_se[p, 0, 1].imag, 0.0)
    for a in range(2):
        for b in range(2):
            assert _within(pseudo[p, a, b].real, pseudo_se[p, a, b].real, 0.0)
            assert _within(pseudo[p, a, b].imag, pseudo_se[p, a, b].imag, 0.0)


def test_field_at_origin_is_twice_real_part():
    G = random_measure(unit_torus(1, 8), 2, np.random.default_rng(0))
    smp = sample(G, 11)
    x0 = synthesize_field(smp, [[0]]).values[0]
    n = G.system.n_pairs
    assert np.allclose(x0, 2 * smp.values[:n].real.sum(axis=0), atol=1e-14)


def test_two_cell_field_covariance():
    G = one_pair(1, [[0.5]])
    f = synthesize_field(sample(G, 5, R), [[0], [2]]).values[..., 0]
    x0, x2 = f[:, 0], f[:, 1]
    assert _within(x0.var(), np.sqrt(2 / R), 1.0)
    prod = x0 * x2
    assert _within(prod.mean(), prod.std() / np.sqrt(R), correlation(G, [2])[0, 0])


def test_independent_seeds_agree_with_correlation(example_measure):
    G = example_measure
    lags = [[0], [1], [3]]
    r = correlation(G, lags)
    for seed in (21, 22):
        f = synthesize_field(sample(G, seed, 50_000), lags).values
        for i in range(3):
            prod = f[:, i, 0] * f[:, 0, 1]  # r(p)_{jj'} = E X_j(p) X_j'(0)
            assert _within(prod.mean(), prod.std() / np.sqrt(len(prod)), r[i, 0, 1])


def test_one_fold_integrals(example_measure):
    G = example_measure
    smp = sample(G, 8, R)
    s = G.system
    assert np.allclose(integrate_one_fold(smp, np.ones(s.n_cells), 1),
                       synthesize_field(smp, [[0]]).values[:, 0, 0])
    p = np.array([3])
    phi = np.exp(1j * (s.representatives @ p))
    assert np.allclose(integrate_one_fold(smp, phi, 2), synthesize_field(smp, [p]).values[:, 0, 1])
    psi = np.exp(-s.representatives[:, 0] ** 2) * np.exp(0.4j * s.representatives[:, 0])
    a = integrate_one_fold(smp, phi, 1)
    b = integrate_one_fold(smp, psi, 2)
    prod = a * b
    assert _within(prod.mean(), prod.std() / np.sqrt(R), one_fold_covariance(G, phi, psi, 1, 2))


def test_non_hermitian_integrand_rejected(example_measure):
    phi = np.zeros(example_measure.system.n_cells, complex)
    phi[0] = 1j
    with pytest.raises(NotRealKernel):
        integrate_one_fold(sample(example_measure, 0), phi, 1)


def test_determinism_and_batching(example_measure):
    a = sample(example_measure, 2**63 + 5, 50)
    b = np.concatenate([s.values for s in sample_batches(example_measure, 2**63 + 5, 50, batch=7)])
    assert np.array_equal(a.values, b)
    assert np.array_equal(a.replica(17).values, sample(example_measure, 2**63 + 5, 1, start=17).values[0])
    assert not np.array_equal(a.values, sample(example_measure, 6, 50).values)


def test_equal_width_grids_share_normals():
    small = unit_torus(1, 8)
    big = build_symmetric_grid(1, 2 * np.pi, 16)
    eye = lambda s: MatrixSpectralMeasure.from_positive(s, np.tile(np.eye(2), (s.n_pairs, 1, 1)))
    a = sample(eye(small), 9, 4).values
    b = sample(eye(big), 9, 4).values
    assert np.array_equal(a, b[:, match_positions(small, big)])


def test_bad_colour(example_measure):
    with pytest.raises(VecChaosError):
        sample(example_measure, 0).component(3)
