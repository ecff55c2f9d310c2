"""Verification sweeps shared by the command line and the acceptance tests.

Each sweep returns plain rows (dicts of floats and ints) so reports can be
written as CSV or JSON without further conversion.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats

from .chaos import (analytic_covariance, evaluate, evaluate_tensor, random_kernel,
                    second_moment_bound, tensor_kernel)
from .diagram import contract, diagram_count, enumerate_diagrams, tensor_contraction_factors
from .errors import VecChaosError
from .grid import parent_positions, refine
from .sampler import sample, sample_batches, synthesize_field
from .spectral import MatrixSpectralMeasure, correlation, trace_measure
from .wick import (GaussianExpression, coefficient_distance, hermite_coefficients, ito_both_sides,
                   linear, shift_kernel, shift_sample, wick_expand, wick_expand_polynomial,
                   wick_project, wick_recursion_check)

DIAGRAM_RATIO = 0.75
WICK_TOL = 1e-10
RECURSION_TOL = 1e-9
SHIFT_TOL = 1e-12


# -- refinement helpers --------------------------------------------------------------

def split_measure(G: MatrixSpectralMeasure, factor: int) -> MatrixSpectralMeasure:
    """Refine ``G`` by spreading each cell's mass evenly over its subcells."""
    fine = refine(G.system, factor)
    parents = parent_positions(fine, G.system)
    share = float(factor) ** G.system.dim
    return MatrixSpectralMeasure(fine, G.masses[parents] / share)


def max_cell_mass(G: MatrixSpectralMeasure) -> float:
    return float(trace_measure(G).max())


def smooth_function(system, freq, width: float = 1.0) -> np.ndarray:
    """``exp(-|x|^2 / 2 w^2 + i <freq, x>)`` at the representatives (Hermitian by construction)."""
    x = system.representatives
    freq = np.broadcast_to(np.asarray(freq, dtype=float), (system.dim,))
    return np.exp(-0.5 * np.sum(x * x, axis=1) / width**2 + 1j * (x @ freq))


def _frequencies(count: int, offset: float = 0.0) -> list[float]:
    return [0.3 + 0.45 * s + offset for s in range(count)]


def _decay_rows(rows: list[dict], key: str) -> list[dict]:
    for prev, row in zip(rows, rows[1:]):
        if prev[key] > 0:
            row["ratio"] = row[key] / prev[key]
        else:
            row["ratio"] = math.nan if row[key] == 0 else math.inf
    if rows:
        rows[0]["ratio"] = math.nan
    return rows


def levels_of(G: MatrixSpectralMeasure, levels: int, factor: int = 2):
    """Level ``L`` is ``G`` split by ``factor**L``."""
    return lambda L: G if L == 0 else split_measure(G, factor**L)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


# -- diagram formula -----------------------------------------------------------------

def diagram_sweep(measure_at, n: int, m: int, levels: int, replicas: int, seed: int,
                  batch: int = 2000, dense_cells: int = 0, width: float = 1.0) -> list[dict]:
    """Mean-square gap between ``I_n(h1) I_m(h2)`` and the diagram sum, per refinement level.

    ``h1`` and ``h2`` are tensor products of fixed smooth functions, so the
    kernels at different levels discretise the same continuum kernels.  Every
    diagram term is integrated in factored form; on levels with at most
    ``dense_cells`` cells the dense contraction is evaluated as well and the
    largest pathwise difference is reported as ``dense_agreement``.
    """
    rows = []
    for L in range(levels):
        G = measure_at(L)
        d = G.dim_field
        sys_ = G.system
        phis1 = [smooth_function(sys_, f, width) for f in _frequencies(n)]
        phis2 = [smooth_function(sys_, f, 1.3 * width) for f in _frequencies(m, 0.2)]
        cols1 = [1 + s % d for s in range(n)]
        cols2 = [1 + (s + 1) % d for s in range(m)]
        diagrams = enumerate_diagrams(n, m)
        factors = [tensor_contraction_factors(phis1, cols1, phis2, cols2, g, G) for g in diagrams]
        dense = None
        if sys_.n_cells <= dense_cells:
            h1 = tensor_kernel(phis1, cols1, sys_)
            h2 = tensor_kernel(phis2, cols2, sys_)
            dense = (h1, h2, [contract(h1, h2, g, G) for g in diagrams])
        gaps, agree = [], 0.0
        for smp in sample_batches(G, seed, replicas, batch):
            lhs = evaluate_tensor(smp, phis1, cols1) * evaluate_tensor(smp, phis2, cols2)
            rhs = sum(evaluate_tensor(smp, *f) for f in factors)
            gaps.append((lhs - rhs) ** 2)
            if dense is not None:
                h1, h2, terms = dense
                lhs_d = evaluate(smp, h1) * evaluate(smp, h2)
                rhs_d = sum(evaluate(smp, k) for k in terms)
                agree = max(agree, float(np.abs(lhs_d - lhs).max()), float(np.abs(rhs_d - rhs).max()))
        msd, se = _mean_se(np.concatenate(gaps))
        rows.append({"level": L, "cells": sys_.n_cells, "diagrams": len(diagrams),
                     "mean_square_defect": msd, "se": se, "max_cell_mass": max_cell_mass(G),
                     "dense_agreement": agree if dense is not None else math.nan})
    return _decay_rows(rows, "mean_square_defect")


# -- Ito formula ---------------------------------------------------------------------

def ito_sweep(measure_at, n: int, levels: int, replicas: int, seed: int,
              batch: int = 2000, width: float = 1.0) -> list[dict]:
    """Mean-square gap between ``:U_1...U_n:`` and the tensor-kernel integral, per level."""
    rows = []
    for L in range(levels):
        G = measure_at(L)
        d = G.dim_field
        phis = [smooth_function(G.system, f, width) for f in _frequencies(n)]
        colours = [1 + s % d for s in range(n)]
        gaps, worst = [], 0.0
        for smp in sample_batches(G, seed, replicas, batch):
            lhs, rhs = ito_both_sides(phis, colours, smp)
            gaps.append((lhs - rhs) ** 2)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        msd, se = _mean_se(np.concatenate(gaps))
        rows.append({"level": L, "cells": G.system.n_cells, "mean_square_defect": msd, "se": se,
                     "max_abs_gap": worst, "max_cell_mass": max_cell_mass(G)})
    return _decay_rows(rows, "mean_square_defect")


def decays(rows: list[dict], ratio: float = DIAGRAM_RATIO) -> bool:
    return all(r["ratio"] <= ratio for r in rows[1:])


# -- Wick algebra --------------------------------------------------------------------

def _random_linear_family(rng: np.random.Generator, count: int):
    m = int(rng.integers(1, 5))
    rank = int(rng.integers(1, m + 1))
    B = rng.standard_normal((m, rank))
    cov = B @ B.T
    return [linear(rng.standard_normal(m), cov) for _ in range(count)]


def wick_expansion_suite(seed: int, instances: int = 200, max_order: int = 4) -> list[dict]:
    """Closed-form Wick products against the projection oracle on random inputs."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(instances):
        n = int(rng.integers(1, max_order + 1))
        Us = _random_linear_family(rng, n)
        defect = coefficient_distance(wick_expand(*Us), wick_project(*Us))
        rows.append({"instance": i, "order": n, "defect": defect, "tolerance": WICK_TOL,
                     "passed": defect <= WICK_TOL})
    return rows


def wick_recursion_suite(seed: int, instances: int = 50, max_order: int = 4) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(instances):
        n = int(rng.integers(1, max_order + 1))
        Us = _random_linear_family(rng, n + 1)
        defect = wick_recursion_check(*Us)
        rows.append({"instance": i, "order": n, "defect": defect, "tolerance": RECURSION_TOL,
                     "passed": defect <= RECURSION_TOL})
    return rows


def hermite_suite(max_order: int = 6) -> list[dict]:
    """``:xi^n:`` for a standard normal against the coefficients of ``H_n``."""
    rows = []
    for n in range(max_order + 1):
        w = wick_expand_polynomial(GaussianExpression({(n,): 1.0}, np.eye(1), max(8, 2 * n)))
        got = np.zeros(n + 1)
        for (p,), c in w.coeffs.items():
            got[p] = c
        want = np.array(hermite_coefficients(n))
        defect = float(np.abs(got - want).max())
        rows.append({"order": n, "defect": defect, "tolerance": WICK_TOL, "passed": defect <= WICK_TOL})
    return rows


def shift_suite(G: MatrixSpectralMeasure, seeds, max_order: int = 3, replicas: int = 8) -> list[dict]:
    """Pathwise shift identities on one measure over several seeds.

    Per seed and order: kernel-side against sample-side shift (to
    ``SHIFT_TOL``), the group law on samples (exact) and the field-shift
    identity (exact).
    """
    nu = G.system.dim
    rows = []
    for seed in seeds:
        rng = np.random.default_rng(int(seed))
        smp = sample(G, int(seed), replicas=replicas)
        u = rng.integers(-3, 4, size=nu)
        v = rng.integers(-3, 4, size=nu)
        for n in range(1, max_order + 1):
            f = random_kernel(G.system, [1 + s % G.dim_field for s in range(n)], rng)
            a = evaluate(shift_sample(smp, u), f)
            b = evaluate(smp, shift_kernel(f, u))
            scale = max(1.0, float(np.abs(a).max()))
            rows.append({"seed": int(seed), "check": "kernel_vs_sample", "order": n,
                         "defect": float(np.abs(a - b).max()) / scale, "tolerance": SHIFT_TOL})
        lhs = shift_sample(shift_sample(smp, u), v).values
        rhs = shift_sample(smp, u + v).values
        rows.append({"seed": int(seed), "check": "group_law", "order": 0,
                     "defect": float(np.abs(lhs - rhs).max()), "tolerance": 0.0})
        if all(abs(h - np.pi) <= 1e-12 for h in G.system.box.half_extent):
            lags = np.array(list(itertools.product(range(-2, 3), repeat=nu)))
            x1 = synthesize_field(shift_sample(smp, u), lags).values
            x2 = synthesize_field(smp, lags + u).values
            rows.append({"seed": int(seed), "check": "field_shift", "order": 0,
                         "defect": float(np.abs(x1 - x2).max()), "tolerance": 0.0})
    for r in rows:
        r["passed"] = r["defect"] <= r["tolerance"]
    return rows


# -- sampler and chaos moments -------------------------------------------------------

class _Moments:
    """Running sums of a complex statistic and of its squared parts."""

    def __init__(self):
        self.total = self.sq_re = self.sq_im = 0.0

    def add(self, x: np.ndarray) -> None:
        self.total = self.total + x.sum(axis=0)
        self.sq_re = self.sq_re + (x.real ** 2).sum(axis=0)
        self.sq_im = self.sq_im + (x.imag ** 2).sum(axis=0)

    def stats(self, R: int):
        mean = self.total / R
        se_re = np.sqrt(np.maximum(self.sq_re / R - mean.real ** 2, 0.0) / (R - 1))
        se_im = np.sqrt(np.maximum(self.sq_im / R - mean.imag ** 2, 0.0) / (R - 1))
        return mean, se_re, se_im


def _moment_row(kind, mean, se_re, se_im, analytic, **where) -> dict:
    row = {"kind": kind, **where,
           "empirical_re": float(mean.real), "empirical_im": float(mean.imag),
           "analytic_re": float(analytic.real), "analytic_im": float(analytic.imag),
           "se_re": float(se_re), "se_im": float(se_im)}
    z, tests = [], 0
    for part in ("re", "im"):
        se = row[f"se_{part}"]
        gap = abs(row[f"empirical_{part}"] - row[f"analytic_{part}"])
        if se > 0:
            tests += 1
            z.append(gap / se)
        else:
            z.append(0.0 if gap == 0 else math.inf)
    row["z"] = max(z)
    row["tests"] = tests
    row["within_3se"] = bool(row["z"] <= 3)
    return row


def family_threshold(tests: int, sigma: float = 3.0) -> float:
    """Per-test |z| cut-off giving a family of ``tests`` the false-alarm rate of one ``sigma`` test."""
    alpha = 2.0 * stats.norm.sf(sigma)
    per_test = -math.expm1(math.log1p(-alpha) / max(tests, 1))
    return float(stats.norm.isf(per_test / 2.0))


def family_check(rows: list[dict], sigma: float = 3.0) -> dict:
    """Verdict for a family of z-scored rows (Sidak correction of a ``sigma`` test)."""
    tests = sum(r["tests"] for r in rows)
    cut = family_threshold(tests, sigma)
    max_z = max((r["z"] for r in rows), default=0.0)
    return {"tests": tests, "sigma": sigma, "threshold": cut, "max_z": max_z,
            "beyond_sigma": sum(not r["within_3se"] for r in rows), "passed": bool(max_z <= cut)}


def sampler_moment_rows(G: MatrixSpectralMeasure, seed: int, replicas: int, lags=(),
                        batch: int = 20000) -> list[dict]:
    """First and second moments of ``Z`` and of the field against their analytic values.

    Only positive cells are listed since negative ones are exact conjugates.
    Kinds: ``mean`` (E Z, zero), ``cell`` (E Z_j conj Z_j' on one cell, the
    stored mass), ``pseudo`` (E Z_j Z_j' on one cell, zero), ``cross`` and
    ``cross_pseudo`` (the same between two different cells, zero) and
    ``field`` (E X_j(p) X_j'(0) against the correlation).
    """
    d = G.dim_field
    n = G.system.n_pairs
    k = G.system.signed_index
    lags = np.asarray(lags, dtype=np.int64).reshape(-1, G.system.dim)
    acc = {name: _Moments() for name in ("mean", "herm", "pseudo")}
    fx = []
    for smp in sample_batches(G, seed, replicas, batch):
        z = smp.values[:, :n, :]
        acc["mean"].add(z)
        acc["herm"].add(np.einsum("rka,rlb->rklab", z, z.conj()))
        acc["pseudo"].add(np.einsum("rka,rlb->rklab", z, z))
        if len(lags):
            origin = synthesize_field(smp, np.zeros((1, G.system.dim), dtype=np.int64)).values[:, 0]
            x = synthesize_field(smp, lags).values
            fx.append(x[:, :, :, None] * origin[:, None, None, :])
    R = int(replicas)
    rows = []
    mean, sr, si = acc["mean"].stats(R)
    for p in range(n):
        for j in range(d):
            rows.append(_moment_row("mean", mean[p, j], sr[p, j], si[p, j], 0j, k=int(k[p]), j=j + 1))
    for name, kind in (("herm", "cell"), ("pseudo", "pseudo")):
        mean, sr, si = acc[name].stats(R)
        for p in range(n):
            for q in range(p, n):
                for j in range(d):
                    for jp in range(d):
                        if p == q and jp < j:
                            continue  # the transpose (or conjugate) of a listed entry
                        same = p == q
                        target = G.masses[p, j, jp] if (same and kind == "cell") else 0j
                        label = kind if same else ("cross" if kind == "cell" else "cross_pseudo")
                        rows.append(_moment_row(label, mean[p, q, j, jp], sr[p, q, j, jp],
                                                si[p, q, j, jp], target, k=int(k[p]), l=int(k[q]),
                                                j=j + 1, jp=jp + 1))
    if len(lags):
        xs = np.concatenate(fx)
        r = correlation(G, lags)
        for i, lag in enumerate(lags.tolist()):
            for j in range(d):
                for jp in range(d):
                    m, se = _mean_se(xs[:, i, j, jp])
                    rows.append(_moment_row("field", complex(m), se, 0.0, complex(r[i, j, jp]),
                                            lag=lag, j=j + 1, jp=jp + 1))
    return rows


def chaos_moment_rows(G: MatrixSpectralMeasure, f, seed: int, replicas: int,
                      batch: int = 2000) -> list[dict]:
    """Monte Carlo mean and second moment of ``I_n(f)`` against the analytic values."""
    vals = np.concatenate([evaluate(smp, f) for smp in sample_batches(G, seed, replicas, batch)])
    m1, se1 = _mean_se(vals)
    m2, se2 = _mean_se(vals**2)
    var = analytic_covariance(f, f, G)
    bound = second_moment_bound(f, G)
    mean_exact = float(f.values.real) if f.order == 0 else 0.0
    rows = []
    for q, mc, se, exact in (("mean", m1, se1, mean_exact), ("second_moment", m2, se2, var)):
        z = abs(mc - exact) / se if se > 0 else (0.0 if mc == exact else math.inf)
        rows.append({"quantity": q, "monte_carlo": mc, "se": se, "analytic": exact, "z": z,
                     "tests": int(se > 0), "within_3se": bool(z <= 3)})
    rows.append({"quantity": "second_moment_bound", "monte_carlo": math.nan, "se": math.nan,
                 "analytic": bound, "z": 0.0, "tests": 0, "within_3se": var <= bound + 1e-10})
    return rows


def diagram_count_rows(max_n: int = 5) -> list[dict]:
    rows = []
    for n in range(1, max_n + 1):
        for m in range(1, max_n + 1):
            count = len(enumerate_diagrams(n, m))
            rows.append({"n": n, "m": m, "enumerated": count, "closed_form": diagram_count(n, m)})
    return rows

