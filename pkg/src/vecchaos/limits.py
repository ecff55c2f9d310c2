"""Normalised sums of Wick functionals and their non-central limit.

For a stationary field ``X`` on the lattice and a homogeneous Wick polynomial
``Y(p) = sum_k a_k :X_1(p)^{k_1} ... X_d(p)^{k_d}:`` of order n, the block sum

    S_N = A_N^{-1} sum_{p in {0..N-1}^nu} Y(p)

has three computable forms here:

* :func:`direct_SN` sums the Wick polynomial of the synthesised field;
* :func:`chaos_SN` sums shifted copies of the n-fold integral of ``Y(0)``;
* :func:`spectral_SN` integrates the Dirichlet-type kernel ``h^N`` against the
  spectral measure dilated by N.

The last two agree exactly for coupled samples.  As ``N`` grows, ``h^N``
tends to ``h^0`` and the dilated measures tend to a limit ``G^(0)``;
:func:`convergence_report` compares ``S_N`` with the limit integral.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .chaos import SimpleKernel, analytic_covariance, evaluate
from .errors import VecChaosError
from .grid import RegularSystem, build_symmetric_grid, match_positions, unit_torus
from .sampler import SpectralSample, sample, sample_batches, synthesize_field
from .spectral import (MatrixSpectralMeasure, correlation, rescale, singular_density_masses,
                       test_integral, validate)
from .wick import GaussianExpression, shift_kernel, wick_expand_polynomial

SERIES_CUTOFF = 1e-4


# -- Wick functional ------------------------------------------------------------------

@dataclass(frozen=True)
class WickSpec:
    """Homogeneous Wick polynomial ``sum a_k :x_1^{k_1} ... x_d^{k_d}:``."""

    coefficients: dict  # exponent tuple -> real coefficient

    def __post_init__(self):
        if not self.coefficients:
            raise VecChaosError("Wick spec needs at least one coefficient")
        clean = {tuple(int(x) for x in k): float(v) for k, v in self.coefficients.items()}
        orders = {sum(k) for k in clean}
        dims = {len(k) for k in clean}
        if len(orders) != 1 or len(dims) != 1:
            raise VecChaosError("Wick spec must be homogeneous with one exponent length")
        if any(x < 0 for k in clean for x in k):
            raise VecChaosError("exponents must be nonnegative")
        if next(iter(orders)) < 1:
            raise VecChaosError("order must be at least 1")
        object.__setattr__(self, "coefficients", dict(sorted(clean.items())))

    @property
    def order(self) -> int:
        return sum(next(iter(self.coefficients)))

    @property
    def dim(self) -> int:
        return len(next(iter(self.coefficients)))

    def terms(self):
        """``[(coefficient, colour list), ...]`` with ``k_j`` copies of colour ``j``."""
        out = []
        for k, a in self.coefficients.items():
            cols = tuple(j + 1 for j, kj in enumerate(k) for _ in range(kj))
            out.append((a, cols))
        return out

    def polynomial(self, cov) -> GaussianExpression:
        md = max(8, 2 * self.order)
        return GaussianExpression(dict(self.coefficients), cov, md)

    def wick_polynomial(self, cov) -> GaussianExpression:
        return wick_expand_polynomial(self.polynomial(cov))

    def to_dict(self) -> dict:
        return {"coefficients": [{"exponents": list(k), "value": v} for k, v in self.coefficients.items()]}

    @classmethod
    def from_dict(cls, data: dict) -> "WickSpec":
        return cls({tuple(c["exponents"]): c["value"] for c in data["coefficients"]})


def block_points(N: int, nu: int) -> np.ndarray:
    return np.array(list(itertools.product(range(N), repeat=nu)), dtype=np.int64).reshape(-1, nu)


def direct_SN(wick: WickSpec, N: int, A_N: float, smp: SpectralSample = None, *, field=None):
    """``A_N^{-1} sum_{p in B_N} Y(p)`` from field values.

    Pass either a spectral sample on the unit torus (the field is synthesised
    on ``B_N``) or ``field``: an array ``(..., N^nu, d)`` of the values at
    :func:`block_points` order together with ``smp`` for the covariance.
    """
    if smp is None:
        raise VecChaosError("a sample (or at least its measure) is required")
    G = smp.measure
    if wick.dim != G.dim_field:
        raise VecChaosError("Wick spec dimension differs from the field dimension")
    nu = G.system.dim
    pts = block_points(N, nu)
    if field is None:
        field = synthesize_field(smp, pts).values
    field = np.asarray(field)
    if field.shape[-2] != pts.shape[0]:
        raise VecChaosError(f"field must cover all {pts.shape[0]} points of B_N")
    r0 = correlation(G, np.zeros(nu, dtype=int))
    W = wick.wick_polynomial(0.5 * (r0 + r0.T))
    return W.evaluate(field).sum(axis=-1) / A_N


def _tuple_sums(system: RegularSystem, n: int) -> list[np.ndarray]:
    """Per axis, ``u_{k_1} + ... + u_{k_n}`` on the full tuple grid."""
    reps = system.representatives
    out = []
    for ax in range(system.dim):
        acc = np.zeros((1,) * n)
        for s in range(n):
            shape = [1] * n
            shape[s] = -1
            acc = acc + reps[:, ax].reshape(shape)
        out.append(acc)
    return out


def chaos_kernels(wick: WickSpec, system: RegularSystem, N: int, A_N: float):
    """Kernels of ``A_N^{-1} sum_p Y(p)`` built by summing shifted copies of ``Y(0)``'s kernel."""
    n = wick.order
    base = np.ones((system.n_cells,) * n, dtype=complex)
    pts = block_points(N, system.dim)
    proto = SimpleKernel(system, (1,) * n, base)
    total = np.zeros_like(base)
    for p in pts:
        total = total + shift_kernel(proto, p).values
    return [SimpleKernel(system, cols, total * (a / A_N), zero_diagonal=True, tol=1e-9)
            for a, cols in wick.terms()]


def chaos_SN(wick: WickSpec, N: int, A_N: float, smp: SpectralSample):
    total = 0.0
    for f in chaos_kernels(wick, smp.system, N, A_N):
        total = total + evaluate(smp, f)
    return total


# -- rescaled kernels -----------------------------------------------------------------

def _ratio_factor(z: np.ndarray) -> np.ndarray:
    """``(e^{iz} - 1) / (iz)`` with a series near zero."""
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) < SERIES_CUTOFF
    zs = z[small]
    out[small] = 1 + 1j * zs / 2 - zs**2 / 6 - 1j * zs**3 / 24
    zb = z[~small]
    out[~small] = np.expm1(1j * zb) / (1j * zb)
    return out


def dirichlet_factor(s, N: int | None) -> np.ndarray:
    """One axis of ``h^N`` (``N`` finite) or ``h^0`` (``N=None``) as a function of ``s``."""
    s = np.asarray(s, dtype=float)
    if N is None:
        return _ratio_factor(s)
    t = s / N
    t = t - 2 * np.pi * np.round(t / (2 * np.pi))
    # e^{is} = e^{iNt} after reduction since N is an integer
    return _ratio_factor(N * t) / _ratio_factor(t)


def rescaled_kernel(a: float, N: int | None, points) -> complex:
    """``h^N`` or ``h^0`` at points ``y_1..y_n`` given as an ``(n, nu)`` array."""
    y = np.atleast_2d(np.asarray(points, dtype=float))
    s = y.sum(axis=0)
    return complex(a * np.prod(dirichlet_factor(s, N)))


def rescaled_kernel_values(system: RegularSystem, n: int, N: int | None) -> np.ndarray:
    """``prod_l factor(sum_t u_{k_t}^{(l)})`` on every n-tuple of cells (coefficient 1)."""
    vals = np.ones((system.n_cells,) * n, dtype=complex)
    for s in _tuple_sums(system, n):
        vals = vals * dirichlet_factor(s, N)
    return vals


def limit_kernels(wick: WickSpec, system: RegularSystem, N: int | None):
    h = rescaled_kernel_values(system, wick.order, N)
    return [SimpleKernel(system, cols, a * h, tol=1e-9) for a, cols in wick.terms()]


def integral_of_terms(smp: SpectralSample, kernels):
    total = 0.0
    for f in kernels:
        total = total + evaluate(smp, f)
    return total


def spectral_SN(wick: WickSpec, N: int, A_N: float, G: MatrixSpectralMeasure, seed: int = None, *,
                base_sample: SpectralSample = None, replicas: int | None = None, start: int = 0):
    """``S_N`` as an n-fold integral against the dilated measure.

    Either draws ``Z^(N)`` from the rescaled measure with ``seed`` or, given a
    ``base_sample`` of ``G``, uses ``Z^(N) = N^{nu/n} A_N^{-1/n} Z`` directly.
    """
    n = wick.order
    GN = rescale(G, N, A_N, n)
    if base_sample is not None:
        scale = float(N) ** (G.system.dim / n) * float(A_N) ** (-1.0 / n)
        smp = base_sample.with_measure(GN, scale)
    else:
        if seed is None:
            raise VecChaosError("need a seed or a base sample")
        smp = sample(GN, seed, replicas=replicas, start=start)
    return integral_of_terms(smp, limit_kernels(wick, GN.system, N))


def kernel_variance(G: MatrixSpectralMeasure, kernels) -> float:
    """Exact variance of a sum of n-fold integrals on a grid."""
    total = 0.0
    for f in kernels:
        for h in kernels:
            total += analytic_covariance(f, h, G)
    return total


# -- conditions of the limit theorem ---------------------------------------------------

@dataclass
class ConditionAReport:
    T: float
    schedule: list
    sup_defect: list
    threshold: float

    @property
    def monotone(self) -> bool:
        return all(b <= a + 1e-15 for a, b in zip(self.sup_defect, self.sup_defect[1:]))

    @property
    def passed(self) -> bool:
        return self.monotone and self.sup_defect[-1] <= self.threshold

    def to_dict(self):
        return {"T": self.T, "schedule": list(self.schedule), "sup_defect": list(self.sup_defect),
                "threshold": self.threshold, "monotone": self.monotone, "passed": self.passed}


def check_condition_a(wick: WickSpec, nu: int, T: float, schedule, threshold: float = 0.05,
                      points: int = 4001) -> ConditionAReport:
    """Sup over ``[-T, T]^{n nu}`` of ``|h^N - h^0|`` for each N.

    Both kernels depend on the points only through the per-axis sums
    ``s_l``, which range over ``[-nT, nT]``; the sup is taken on a lattice in
    s-space.  Requires ``T <= N pi`` so the cube lies inside every dilated box.
    """
    n = wick.order
    amax = max(abs(a) for a, _ in wick.terms())
    s = np.linspace(-n * T, n * T, points)
    defects = []
    for N in schedule:
        if T > N * np.pi + 1e-12:
            raise VecChaosError(f"cube half-width {T} exceeds the dilated box for N={N}")
        fN = dirichlet_factor(s, N)
        f0 = dirichlet_factor(s, None)
        if nu == 1:
            diff = np.abs(fN - f0).max()
        else:
            # product over axes: evaluate on the full s-lattice (nu <= 2 in practice)
            grids_N = [fN] * nu
            grids_0 = [f0] * nu
            pN = np.ones((1,) * nu, dtype=complex)
            p0 = np.ones((1,) * nu, dtype=complex)
            for ax in range(nu):
                shape = [1] * nu
                shape[ax] = -1
                pN = pN * grids_N[ax].reshape(shape)
                p0 = p0 * grids_0[ax].reshape(shape)
            diff = np.abs(pN - p0).max()
        defects.append(float(amax * diff))
    return ConditionAReport(float(T), list(schedule), defects, float(threshold))


def tail_mass(kernel_abs2: np.ndarray, colours, G: MatrixSpectralMeasure, T: float) -> float:
    """``sum |h|^2 prod G_{jj}`` over tuples with some ``|u_{k_s}|_inf > T``."""
    inside = np.all(np.abs(G.system.representatives) <= T, axis=1)
    total = kernel_abs2
    part = kernel_abs2
    for c in colours:
        g = G.entry(c, c).real
        total = np.tensordot(total, g, axes=([0], [0]))
        part = np.tensordot(part, g * inside, axes=([0], [0]))
    return float(total - part)


@dataclass
class ConditionBReport:
    eps: list
    T_grid: list
    schedule: list
    tails: dict  # N -> list over T_grid of the tail mass (max over terms)
    required_T: dict  # eps -> {N: T}
    uniform_T: dict  # eps -> max_N T (None if no grid value works)
    box_limit: float

    @property
    def passed(self) -> bool:
        return all(t is not None and t < self.box_limit for t in self.uniform_T.values())

    def to_dict(self):
        return {
            "eps": list(self.eps), "T_grid": list(self.T_grid), "schedule": list(self.schedule),
            "tails": {str(N): list(v) for N, v in self.tails.items()},
            "required_T": {str(e): {str(N): t for N, t in d.items()} for e, d in self.required_T.items()},
            "uniform_T": {str(e): t for e, t in self.uniform_T.items()},
            "box_limit": self.box_limit, "passed": self.passed,
        }


def check_condition_b(wick: WickSpec, measures: dict, eps_grid, T_grid) -> ConditionBReport:
    """Tail sums of ``|h^N|^2`` against the diagonal dilated measures.

    ``measures`` maps N to ``G^(N)``.  For each eps the smallest grid T with
    every tail below ``eps^2`` is recorded per N; the check passes when the
    worst of these stays strictly inside the largest dilated box.
    """
    schedule = sorted(measures)
    tails = {}
    for N in schedule:
        GN = measures[N]
        h2 = np.abs(rescaled_kernel_values(GN.system, wick.order, N)) ** 2
        row = []
        for T in T_grid:
            row.append(max(a * a * tail_mass(h2, cols, GN, T) for a, cols in wick.terms()))
        tails[N] = row
    required, uniform = {}, {}
    for e in eps_grid:
        per = {}
        for N in schedule:
            ok = [T for T, v in zip(T_grid, tails[N]) if v < e * e]
            per[N] = float(min(ok)) if ok else None
        required[e] = per
        vals = list(per.values())
        uniform[e] = None if any(v is None for v in vals) else float(max(vals))
    box = float(max(schedule) * np.pi)
    return ConditionBReport(list(eps_grid), [float(t) for t in T_grid], schedule, tails,
                            required, uniform, box)


@dataclass
class PSDLimitReport:
    mass_defect: list  # per sequence element, max entrywise cell-mass difference
    test_defect: list  # per element, max test-integral difference
    limit_min_eigenvalue: float
    limit_valid: bool
    quadratic_form_min: float
    tol: float

    @property
    def converging(self) -> bool:
        return all(b <= a + 1e-15 for a, b in zip(self.mass_defect, self.mass_defect[1:]))

    @property
    def passed(self) -> bool:
        return (self.limit_valid and self.converging and self.quadratic_form_min >= -1e-12
                and self.mass_defect[-1] <= self.tol)

    def to_dict(self):
        return {"mass_defect": list(self.mass_defect), "test_defect": list(self.test_defect),
                "limit_min_eigenvalue": self.limit_min_eigenvalue, "limit_valid": self.limit_valid,
                "quadratic_form_min": self.quadratic_form_min, "tol": self.tol,
                "converging": self.converging, "passed": self.passed}


def tent_functions(system: RegularSystem, centres, width: float) -> list[np.ndarray]:
    """Nonnegative continuous compactly supported test functions at the representatives."""
    reps = system.representatives
    out = []
    for c in np.atleast_2d(centres):
        r = np.abs(reps - c).max(axis=1)
        out.append(np.clip(1.0 - r / width, 0.0, None))
    return out


def psd_limit_check(sequence, limit: MatrixSpectralMeasure, tests=None, tol: float = 0.05,
                    rng_seed: int = 0, n_vectors: int = 64) -> PSDLimitReport:
    """Convergence of cell masses and test integrals towards ``limit``, and psd of the limit.

    All measures must share ``limit``'s regular system.  The quadratic forms
    ``sum v_j conj(v_j') int f dG_{jj'}`` of the limit are checked on random
    complex vectors for every nonnegative test function.
    """
    d = limit.dim_field
    if tests is None:
        tests = tent_functions(limit.system, np.zeros((1, limit.system.dim)),
                               float(np.max(limit.system.box.half_extent)) / 2)
    mass_def, test_def = [], []
    for Gn in sequence:
        if Gn.system != limit.system:
            raise VecChaosError("sequence and limit must share a regular system")
        mass_def.append(float(np.abs(Gn.masses - limit.masses).max()))
        worst = 0.0
        for f in tests:
            for j in range(1, d + 1):
                for jp in range(1, d + 1):
                    worst = max(worst, abs(test_integral(Gn, f, j, jp) - test_integral(limit, f, j, jp)))
        test_def.append(worst)
    rep = validate(limit)
    rng = np.random.default_rng(rng_seed)
    qmin = math.inf
    for f in tests:
        M = np.array([[test_integral(limit, f, j, jp) for jp in range(1, d + 1)] for j in range(1, d + 1)])
        v = rng.standard_normal((n_vectors, d)) + 1j * rng.standard_normal((n_vectors, d))
        q = np.einsum("rj,jk,rk->r", v, M, v.conj()).real
        qmin = min(qmin, float(q.min()))
    return PSDLimitReport(mass_def, test_def, float(rep.min_eigenvalue.min()), rep.passed, qmin, tol)


# -- long-memory model ---------------------------------------------------------------------

@dataclass
class LongMemoryModel:
    """``d``-variate long-memory spectral density on the one-dimensional torus.

    ``shape="power"`` uses ``|x|^{-beta} M`` on ``[-pi, pi)``;
    ``shape="farima"`` uses ``(2|sin(x/2)|)^{-beta} M``;
    ``shape="tapered"`` uses ``|x|^{-beta} cos(x/2)^{2 taper} M``, which vanishes
    at ``+-pi`` so the dilated measures carry no mass where the finite-N
    kernels alias.  In every case the dilated measures converge to
    ``|y|^{-beta} M dy`` on the line.  ``cells_per_2pi`` is the number of
    cells per length ``2 pi`` after dilation.
    """

    beta: float
    matrix: np.ndarray
    cells_per_2pi: int = 8
    shape: str = "power"
    taper: float = 1.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if not 0 < self.beta < 1:
            raise VecChaosError("beta must lie in (0, 1)")
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise VecChaosError("matrix must be square")
        if np.abs(self.matrix - self.matrix.T).max() > 1e-12 or np.linalg.eigvalsh(self.matrix)[0] < -1e-12:
            raise VecChaosError("matrix must be symmetric positive semidefinite")
        if self.taper <= 0:
            raise VecChaosError("taper exponent must be positive")
        if self.cells_per_2pi < 2 or self.cells_per_2pi % 2:
            raise VecChaosError("cells_per_2pi must be even and positive")
        if self.shape not in ("power", "farima", "tapered"):
            raise VecChaosError(f"unknown density shape {self.shape!r}")

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    def _weight(self, x):
        x = abs(x)
        if self.shape == "power":
            return 1.0
        if self.shape == "tapered":
            return math.cos(x / 2.0) ** (2.0 * self.taper)
        if x == 0:
            return 1.0
        return (x / (2.0 * math.sin(x / 2.0))) ** self.beta

    def base_measure(self, N: int) -> MatrixSpectralMeasure:
        system = unit_torus(1, N * self.cells_per_2pi)
        if self.shape == "power":
            return self._power_masses(system, 1.0)
        return singular_density_masses(system, self._weight, self.beta, self.matrix)

    def _power_masses(self, system, factor):
        n = system.n_pairs
        a, b = system.lower[:n, 0], system.upper[:n, 0]
        w = (b ** (1 - self.beta) - a ** (1 - self.beta)) / (1 - self.beta)
        return MatrixSpectralMeasure.from_positive(system, factor * w[:, None, None] * self.matrix[None])

    def limit_measure(self, half_extent: float, factor: float = 1.0) -> MatrixSpectralMeasure:
        """Exact cell masses of ``factor * |y|^{-beta} M dy`` on ``[-T, T)``.

        ``half_extent`` must be a multiple of ``pi`` so the cells line up with
        the dilated grids.
        """
        cells = int(round(half_extent / np.pi)) * self.cells_per_2pi
        system = build_symmetric_grid(1, half_extent, cells)
        return self._power_masses(system, factor)

    def to_dict(self):
        return {"beta": self.beta, "matrix": self.matrix.tolist(), "cells_per_2pi": self.cells_per_2pi,
                "shape": self.shape, "taper": self.taper}


def calibrate_exponent(model: LongMemoryModel, n: int, schedule) -> tuple[float, list]:
    """Norming exponent alpha with ``A_N ~ N^alpha`` from the growth of cell masses.

    Takes the trace mass the base measure puts on the x-cells that dilate onto
    ``[-pi, pi)``, fits ``log m = c + slope log N + kappa N^-2`` (the last term
    absorbs the smooth part of the density), and picks alpha so that
    ``N^{2 nu / n} A_N^{-2/n}`` cancels the growth.
    """
    logs, rows = [], []
    for N in schedule:
        G = model.base_measure(N)
        inside = np.abs(G.system.representatives[:, 0]) * N < np.pi
        m = float(np.einsum("kjj->", G.masses[inside]).real)
        logs.append(math.log(m))
        rows.append({"N": int(N), "trace_mass": m})
    Ns = np.asarray(schedule, dtype=float)
    if len(Ns) >= 3:
        X = np.stack([np.ones_like(Ns), np.log(Ns), Ns ** -2.0], axis=1)
        slope = float(np.linalg.lstsq(X, np.asarray(logs), rcond=None)[0][1])
    elif len(Ns) == 2:
        slope = float((logs[1] - logs[0]) / (math.log(Ns[1]) - math.log(Ns[0])))
    else:
        raise VecChaosError("calibration needs at least two values of N")
    nu = 1
    alpha = n * (2.0 * nu / n + slope) / 2.0
    return alpha, rows


@dataclass
class LimitExperiment:
    model: LongMemoryModel
    wick: WickSpec
    schedule: list
    replicas: int = 20000
    seed: int = 0
    alpha: float | None = None
    scale: float | None = None  # A_N = scale * N^alpha
    cond_a_T: float = 2 * np.pi
    cond_a_threshold: float = 0.05
    eps_grid: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    T_step: float = np.pi / 2
    cf_t: list = field(default_factory=lambda: [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    tolerance: float = 0.05
    batch: int = 2000
    psd_box: float | None = None

    def __post_init__(self):
        if self.wick.dim != self.model.d:
            raise VecChaosError("Wick spec dimension differs from the model dimension")
        sched = [int(N) for N in self.schedule]
        if any(N < 1 for N in sched) or sched != sorted(sched):
            raise VecChaosError("N-schedule must be positive and increasing")
        self.schedule = sched

    def norming(self, N: int) -> float:
        return self.scale * float(N) ** self.alpha

    def calibrate(self):
        """Fill in ``alpha`` (log-log fit) and ``scale`` (unit limit variance)."""
        info = {}
        if self.alpha is None:
            self.alpha, info["mass_rows"] = calibrate_exponent(self.model, self.wick.order, self.schedule)
        if self.scale is None:
            # G^(0) carries the factor scale^{-2/n}, so Var Z_0 scales like scale^{-2}
            G0 = self.model.limit_measure(self.schedule[-1] * np.pi)
            v = kernel_variance(G0, limit_kernels(self.wick, G0.system, None))
            self.scale = math.sqrt(v)
            info["unscaled_limit_variance"] = v
        return info

    def dilated_measure(self, N: int) -> MatrixSpectralMeasure:
        return rescale(self.model.base_measure(N), N, self.norming(N), self.wick.order)

    def limit_measure(self, half_extent: float) -> MatrixSpectralMeasure:
        return self.model.limit_measure(half_extent, self.scale ** (-2.0 / self.wick.order))

    def to_dict(self):
        return {
            "model": self.model.to_dict(), "wick": self.wick.to_dict(), "schedule": list(self.schedule),
            "replicas": self.replicas, "seed": self.seed, "alpha": self.alpha, "scale": self.scale,
            "cond_a_T": self.cond_a_T, "cond_a_threshold": self.cond_a_threshold,
            "eps_grid": list(self.eps_grid), "T_step": self.T_step, "cf_t": list(self.cf_t),
            "tolerance": self.tolerance, "batch": self.batch, "psd_box": self.psd_box,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LimitExperiment":
        m = data["model"]
        model = LongMemoryModel(m["beta"], np.asarray(m["matrix"]), m.get("cells_per_2pi", 8),
                                m.get("shape", "power"), m.get("taper", 1.0))
        kw = {k: data[k] for k in ("replicas", "seed", "alpha", "scale", "cond_a_T", "cond_a_threshold",
                                   "eps_grid", "T_step", "cf_t", "tolerance", "batch", "psd_box")
              if k in data and data[k] is not None}
        return cls(model, WickSpec.from_dict(data["wick"]), data["schedule"], **kw)


def _draw(G: MatrixSpectralMeasure, kernels, seed: int, replicas: int, batch: int) -> np.ndarray:
    out = np.empty(replicas)
    for smp in sample_batches(G, seed, replicas, batch):
        s = smp.first_replica
        out[s:s + smp.replicas] = integral_of_terms(smp, kernels)
    return out


def _moments(x: np.ndarray, kmax: int = 4) -> np.ndarray:
    return np.array([np.mean(x ** k) for k in range(1, kmax + 1)])


def _cf(x: np.ndarray, ts) -> np.ndarray:
    return np.array([np.mean(np.exp(1j * t * x)) for t in ts])


def convergence_report(exp: LimitExperiment) -> dict:
    """Run the whole harness; returns a JSON-ready dict with a ``passed`` flag."""
    calib = exp.calibrate()
    n = exp.wick.order
    Nmax = exp.schedule[-1]
    dilated = {N: exp.dilated_measure(N) for N in exp.schedule}
    for N, GN in dilated.items():
        if not validate(GN).passed:
            raise VecChaosError(f"dilated measure for N={N} is not a valid spectral measure")

    cond_a = check_condition_a(exp.wick, 1, exp.cond_a_T, exp.schedule, exp.cond_a_threshold)
    T_grid = np.arange(exp.T_step, Nmax * np.pi + 1e-9, exp.T_step)
    cond_b = check_condition_b(exp.wick, dilated, exp.eps_grid, T_grid)

    t_eps = cond_b.uniform_T.get(0.05) if 0.05 in cond_b.uniform_T else None
    T_max = Nmax * np.pi
    if t_eps is not None and t_eps > T_max:
        T_max = math.ceil(t_eps / np.pi) * np.pi
    G0 = exp.limit_measure(T_max)
    if not validate(G0).passed:
        raise VecChaosError("limit measure is not positive semidefinite")

    k0 = limit_kernels(exp.wick, G0.system, None)
    z0 = _draw(G0, k0, exp.seed, exp.replicas, exp.batch)
    m0 = _moments(z0)
    cf0 = _cf(z0, exp.cf_t)
    var0 = kernel_variance(G0, k0)
    powers = np.arange(1, 5)
    # each moment discrepancy is relative to the size of that moment of the limit
    scale = np.array([np.mean(np.abs(z0) ** k) for k in powers])

    exact0 = order2_moments(G0, k0) if n == 2 else None
    rows = []
    for N in exp.schedule:
        GN = dilated[N]
        kN = limit_kernels(exp.wick, GN.system, N)
        zN = _draw(GN, kN, exp.seed, exp.replicas, exp.batch)
        mN = _moments(zN)
        cfN = _cf(zN, exp.cf_t)
        per_k = np.abs(mN - m0) / scale
        # the draws are coupled, so the error of a discrepancy is that of the paired difference
        se = np.array([np.std(zN ** k - z0 ** k, ddof=1) for k in powers]) / math.sqrt(exp.replicas)
        row = {
            "N": N, "A_N": exp.norming(N), "moments": mN.tolist(),
            "moment_discrepancy": float(per_k.max()),
            "moment_discrepancy_per_k": per_k.tolist(),
            "moment_discrepancy_se": (se / scale).tolist(),
            "cf_discrepancy": float(np.abs(cfN - cf0).max()),
            "analytic_variance": kernel_variance(GN, kN),
        }
        if exact0 is not None:
            exN = order2_moments(GN, kN)
            row["exact_moments"] = exN.tolist()
            row["exact_moment_discrepancy_per_k"] = (np.abs(exN - exact0) / scale).tolist()
        rows.append(row)

    def nonincreasing(vals):
        return all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    mom_series = [r["moment_discrepancy"] for r in rows]
    cf_series = [r["cf_discrepancy"] for r in rows]
    final = max(mom_series[-1], cf_series[-1])
    monotone = nonincreasing(mom_series) and nonincreasing(cf_series)
    per_k_monotone = [nonincreasing([r["moment_discrepancy_per_k"][k] for r in rows]) for k in range(4)]
    exact_monotone = None
    if exact0 is not None:
        # the first moment vanishes on both sides, so only k >= 2 carries a signal
        exact_monotone = all(nonincreasing([r["exact_moment_discrepancy_per_k"][k] for r in rows])
                             for k in range(1, 4))

    # psd closure: dilated measures restricted to a fixed box against the limit
    box = exp.psd_box or exp.schedule[0] * np.pi
    small = exp.limit_measure(box)
    seq = []
    for N in exp.schedule:
        GN = dilated[N]
        pos = match_positions(small.system, GN.system)
        seq.append(MatrixSpectralMeasure(small.system, GN.masses[pos]))
    tests = tent_functions(small.system, np.array([[0.0], [box / 3], [-box / 3]]), box / 3)
    psd = psd_limit_check(seq, small, tests, tol=exp.tolerance)

    distribution_ok = (monotone and final <= exp.tolerance and exp.replicas >= 20000
                       and exact_monotone is not False)
    report = {
        "experiment": exp.to_dict(),
        "calibration": calib,
        "limit": {"T_max": T_max, "cells": G0.system.n_cells, "moments": m0.tolist(),
                  "exact_moments": None if exact0 is None else exact0.tolist(),
                  "abs_moments": scale.tolist(), "analytic_variance": var0,
                  "cf": [[float(c.real), float(c.imag)] for c in cf0]},
        "rows": rows,
        "condition_a": cond_a.to_dict(),
        "condition_b": cond_b.to_dict(),
        "psd_limit": psd.to_dict(),
        "discrepancies_monotone": monotone,
        "per_moment_monotone": per_k_monotone,
        "exact_discrepancies_monotone": exact_monotone,
        "final_discrepancy": float(final),
        "distribution_passed": distribution_ok,
    }
    report["passed"] = bool(distribution_ok and cond_a.passed and cond_b.passed and psd.passed)
    return report


# -- exact moments for second-order chaos ------------------------------------------------

def order2_quadratic_form(G: MatrixSpectralMeasure, kernels) -> tuple[np.ndarray, np.ndarray]:
    """``(A, C)`` with ``sum_f I_2(f) = x^T A x`` for the real base coordinates ``x ~ N(0, C)``.

    Coordinates follow :func:`vecchaos.wick.base_covariance`.
    """
    from .wick import base_covariance

    sys_ = G.system
    n, d = sys_.n_pairs, G.dim_field
    dim = 2 * n * d
    # T maps x to the complex vector of Z_j(Delta_k) over all positions
    T = np.zeros((2 * n, d, dim), dtype=complex)
    for p in range(n):
        for j in range(d):
            T[p, j, 2 * d * p + j] = 1.0
            T[p, j, 2 * d * p + d + j] = 1j
    T[n:] = T[:n].conj()
    A = np.zeros((dim, dim), dtype=complex)
    for f in kernels:
        if f.order != 2:
            raise VecChaosError("exact moments are implemented for order-2 kernels only")
        c1, c2 = f.colours
        A += T[:, c1 - 1, :].T @ f.values @ T[:, c2 - 1, :]
    A = A.real
    return 0.5 * (A + A.T), base_covariance(G)


def order2_moments(G: MatrixSpectralMeasure, kernels, kmax: int = 4) -> np.ndarray:
    """Exact raw moments ``E Z^k``, ``k = 1..kmax``, of a sum of order-2 integrals.

    Uses the cumulants ``kappa_m = 2^{m-1} (m-1)! tr((A C)^m)`` of a Gaussian
    quadratic form and the moment-cumulant recursion.
    """
    A, C = order2_quadratic_form(G, kernels)
    AC = A @ C
    kap = []
    P = np.eye(AC.shape[0])
    for m in range(1, kmax + 1):
        P = P @ AC
        kap.append(2 ** (m - 1) * math.factorial(m - 1) * float(np.trace(P)))
    mom = [1.0]
    for m in range(1, kmax + 1):
        mom.append(sum(math.comb(m - 1, i - 1) * kap[i - 1] * mom[m - i] for i in range(1, m + 1)))
    return np.array(mom[1:])
