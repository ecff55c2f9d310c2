import numpy as np
import pytest

from conftest import flat_density, one_pair
from vecchaos.chaos import evaluate
from vecchaos.errors import VecChaosError
from vecchaos.grid import unit_torus
from vecchaos.limits import (LimitExperiment, LongMemoryModel, WickSpec, chaos_SN, chaos_kernels,
                             check_condition_a, direct_SN, dirichlet_factor, kernel_variance,
                             limit_kernels, order2_moments, psd_limit_check, rescaled_kernel,
                             spectral_SN, tail_mass)
from vecchaos.sampler import sample, synthesize_field
from vecchaos.spectral import correlation, from_density, random_measure, rescale, validate

QUAD = WickSpec({(2, 0): 0.5, (1, 1): 1.0, (0, 2): -0.3})


def test_wick_spec_validation():
    with pytest.raises(VecChaosError):
        WickSpec({(2, 0): 1.0, (1, 0): 1.0})
    with pytest.raises(VecChaosError):
        WickSpec({})
    assert QUAD.order == 2 and QUAD.dim == 2
    assert WickSpec.from_dict(QUAD.to_dict()) == QUAD


def test_dirichlet_limits():
    assert dirichlet_factor(np.array([1e-9]), None)[0] == pytest.approx(1.0)
    assert dirichlet_factor(np.array([1e-9]), 8)[0] == pytest.approx(1.0)
    h0 = dirichlet_factor(np.array([np.pi]), None)[0]
    assert h0 == pytest.approx(2j / np.pi)
    assert abs(h0) == pytest.approx(2 / np.pi)
    assert rescaled_kernel(2.0, None, [[0.5], [0.5]]) == pytest.approx(2 * (np.exp(1j) - 1) / 1j)


def test_finite_kernel_is_dirichlet_mean():
    # E(Nt)/E(t) with t = s/N equals the mean of e^{ipt} over p < N
    s = np.linspace(-7.1, 7.3, 29)
    for N in (3, 8):
        t = s / N
        direct = np.mean([np.exp(1j * p * t) for p in range(N)], axis=0)
        assert np.allclose(dirichlet_factor(s, N), direct, atol=1e-13)


def test_uniform_convergence_on_compacts():
    rep = check_condition_a(QUAD, 1, 2 * np.pi, [4, 8, 16, 32])
    d = rep.sup_defect
    assert all(b < a for a, b in zip(d, d[1:]))
    assert d[-1] < 0.05 and rep.passed


def test_direct_sum_one_block():
    G = one_pair(2, [[0.6, 0.2], [0.2, 0.5]])
    smp = sample(G, 3, 10)
    x = synthesize_field(smp, [[0]]).values[:, 0]
    r0 = correlation(G, [0])
    y = 0.5 * (x[:, 0] ** 2 - r0[0, 0]) + (x[:, 0] * x[:, 1] - r0[0, 1]) - 0.3 * (x[:, 1] ** 2 - r0[1, 1])
    assert np.allclose(direct_SN(QUAD, 1, 2.0, smp), y / 2.0)


def test_linear_variance_double_sum(example_measure):
    G = example_measure
    lin = WickSpec({(1, 0): 1.0, (0, 1): 0.0})
    N, A = 5, 2.5
    p = np.arange(N)
    r = correlation(G, (p[:, None] - p[None, :]).reshape(-1, 1))[:, 0, 0]
    want = r.sum() / A**2
    got = kernel_variance(G, [k for k in chaos_kernels(lin, G.system, N, A) if k.colours == (1,)])
    assert got == pytest.approx(want, rel=1e-12)
    v = direct_SN(lin, N, A, sample(G, 5, 100_000))
    assert abs(v.var() - want) <= 3 * want * np.sqrt(2 / len(v))


def test_sums_are_centred(example_measure):
    smp = sample(example_measure, 6, 50_000)
    for est in (direct_SN(QUAD, 4, 2.0, smp), chaos_SN(QUAD, 4, 2.0, smp)):
        assert abs(est.mean()) <= 3 * est.std() / np.sqrt(len(est))


def test_zero_coefficients(example_measure):
    z = WickSpec({(2, 0): 0.0, (0, 2): 0.0})
    assert np.all(direct_SN(z, 3, 1.0, sample(example_measure, 1, 5)) == 0)


def test_spectral_and_direct_variances_agree_under_refinement():
    N, A = 4, 3.0
    gaps = []
    for cells in (16, 64, 256):
        G = from_density(unit_torus(1, cells), flat_density)
        GN = rescale(G, N, A, 2)
        spec = kernel_variance(GN, limit_kernels(QUAD, GN.system, N))
        x = direct_SN(QUAD, N, A, sample(G, 7, 50_000))
        gaps.append(abs(x.var() - spec) / spec)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.06


def test_spectral_sum_reuses_base_sample(smooth_measure):
    G = smooth_measure
    base = sample(G, 8, 20)
    a = spectral_SN(QUAD, 4, 3.0, G, base_sample=base)
    assert a.shape == (20,)
    b = spectral_SN(QUAD, 4, 3.0, G, seed=8, replicas=20)
    assert np.all(np.isfinite(b))


def test_tail_vanishes_beyond_support():
    s = unit_torus(1, 8)
    k = np.zeros((8, 8))
    inner = np.abs(s.representatives[:, 0]) < 1.0
    k[np.ix_(inner, inner)] = 1.0
    H = random_measure(s, 1, np.random.default_rng(0))
    assert tail_mass(k, (1, 1), H, 1.0) == 0.0
    assert tail_mass(np.ones((8, 8)), (1, 1), H, 0.5) > 0


def test_psd_limit_constant_and_scaled(example_measure):
    G = example_measure
    rep = psd_limit_check([G, G, G], G)
    assert rep.passed and max(rep.mass_defect) == 0
    seq = [G.scaled(1 + 1 / N) for N in (2, 4, 8, 16)]
    rep = psd_limit_check(seq, G)
    assert rep.passed and rep.converging and rep.limit_valid


def test_exact_order_two_moments(smooth_measure):
    G = rescale(smooth_measure, 2, 1.5, 2)
    ks = limit_kernels(QUAD, G.system, 2)
    m = order2_moments(G, ks)
    m = dict(zip(range(1, 5), m))
    assert m[1] == pytest.approx(0.0, abs=1e-12)
    assert m[2] == pytest.approx(kernel_variance(G, ks), rel=1e-10)
    x = sum(evaluate(sample(G, 9, 100_000), k) for k in ks)
    for k in (2, 3, 4):
        xk = x**k
        assert abs(xk.mean() - m[k]) <= 4 * xk.std() / np.sqrt(len(x))


def test_long_memory_model():
    m = LongMemoryModel(0.95, np.array([[1, 0.6], [0.6, 0.8]]), 8, "tapered", 1.0)
    assert LongMemoryModel(**{**m.to_dict(), "matrix": np.asarray(m.to_dict()["matrix"])}).to_dict() == m.to_dict()
    G = m.base_measure(4)
    assert validate(G).passed
    assert G.system.cells_per_axis == (32,)
    with pytest.raises(VecChaosError):
        LongMemoryModel(0.95, np.eye(2), 8, "tapered", 0.0)
    with pytest.raises(VecChaosError):
        LongMemoryModel(1.2, np.eye(2))


def test_experiment_roundtrip():
    from vecchaos.io import data_path, load_experiment
    exp = load_experiment(data_path("long_memory.json"))
    assert LimitExperiment.from_dict(exp.to_dict()).to_dict() == exp.to_dict()
    assert exp.schedule == [4, 8, 16, 32] and exp.replicas >= 20000
