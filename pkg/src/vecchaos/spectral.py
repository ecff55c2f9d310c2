"""Matrix-valued spectral measures stored as per-cell mass matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import NonEvenMeasure, NotPSD, VecChaosError
from .grid import RegularSystem, scale_system

HERMITIAN_TOL = 1e-12
EVEN_TOL = 1e-12
PSD_TOL = 1e-10
REAL_TOL = 1e-10


class MatrixSpectralMeasure:
    """Masses ``G(Delta_k)`` of a d x d Hermitian psd even measure on a grid.

    ``masses`` has shape ``(2N, d, d)`` in grid position order.  The usual
    constructor :meth:`from_positive` takes only the ``k > 0`` cells and fills
    ``k < 0`` by conjugation, so evenness holds by construction.
    :meth:`from_full` keeps whatever it is given, which is how corrupt inputs
    reach :func:`validate`.
    """

    def __init__(self, system: RegularSystem, masses: np.ndarray):
        masses = np.asarray(masses, dtype=complex)
        if masses.ndim != 3 or masses.shape[0] != system.n_cells or masses.shape[1] != masses.shape[2]:
            raise VecChaosError(
                f"masses must have shape ({system.n_cells}, d, d), got {masses.shape}"
            )
        if not np.all(np.isfinite(masses)):
            raise VecChaosError("masses must be finite")
        self.system = system
        self.masses = masses
        self.masses.setflags(write=False)

    @classmethod
    def from_positive(cls, system: RegularSystem, positive_masses) -> "MatrixSpectralMeasure":
        pos = np.asarray(positive_masses, dtype=complex)
        if pos.ndim == 1:
            pos = pos[:, None, None]
        if pos.shape[0] != system.n_pairs:
            raise VecChaosError(f"expected {system.n_pairs} positive-cell masses, got {pos.shape[0]}")
        return cls(system, np.concatenate([pos, pos.conj()], axis=0))

    @classmethod
    def from_full(cls, system: RegularSystem, masses) -> "MatrixSpectralMeasure":
        return cls(system, masses)

    @property
    def dim_field(self) -> int:
        return self.masses.shape[1]

    def entry(self, j: int, jp: int) -> np.ndarray:
        """Per-cell values of ``G_{j,j'}`` (colours are 1-based)."""
        _check_colour(j, self.dim_field)
        _check_colour(jp, self.dim_field)
        return self.masses[:, j - 1, jp - 1]

    def mass(self, k: int) -> np.ndarray:
        return self.masses[self.system.position(k)]

    def total(self) -> np.ndarray:
        return self.masses.sum(axis=0)

    def scaled(self, factor: float) -> "MatrixSpectralMeasure":
        return MatrixSpectralMeasure(self.system, self.masses * factor)

    def __repr__(self):
        return f"MatrixSpectralMeasure(d={self.dim_field}, system={self.system!r})"


def _check_colour(j, d):
    if int(j) != j or not 1 <= j <= d:
        raise VecChaosError(f"colour {j} outside 1..{d}")


@dataclass
class ValidationReport:
    hermitian_defect: np.ndarray
    min_eigenvalue: np.ndarray
    evenness_defect: np.ndarray
    signed_index: np.ndarray
    tolerances: dict = field(default_factory=lambda: {
        "hermitian": HERMITIAN_TOL, "evenness": EVEN_TOL, "psd": -PSD_TOL})

    @property
    def hermitian_ok(self) -> bool:
        return bool(np.all(self.hermitian_defect <= self.tolerances["hermitian"]))

    @property
    def psd_ok(self) -> bool:
        return bool(np.all(self.min_eigenvalue >= self.tolerances["psd"]))

    @property
    def evenness_ok(self) -> bool:
        return bool(np.all(self.evenness_defect <= self.tolerances["evenness"]))

    @property
    def passed(self) -> bool:
        return self.hermitian_ok and self.psd_ok and self.evenness_ok

    def first_failure(self):
        """``(invariant, signed index, value)`` of the first violated check, or None."""
        checks = [
            ("hermitian", self.hermitian_defect, lambda v: v > self.tolerances["hermitian"]),
            ("psd", self.min_eigenvalue, lambda v: v < self.tolerances["psd"]),
            ("evenness", self.evenness_defect, lambda v: v > self.tolerances["evenness"]),
        ]
        for name, vals, bad in checks:
            idx = np.flatnonzero(bad(vals))
            if idx.size:
                p = int(idx[0])
                return name, int(self.signed_index[p]), float(vals[p])
        return None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "hermitian_ok": self.hermitian_ok,
            "psd_ok": self.psd_ok,
            "evenness_ok": self.evenness_ok,
            "first_failure": self.first_failure(),
            "tolerances": dict(self.tolerances),
            "cells": [
                {"k": int(k), "hermitian_defect": float(h), "min_eigenvalue": float(e),
                 "evenness_defect": float(v)}
                for k, h, e, v in zip(self.signed_index, self.hermitian_defect,
                                      self.min_eigenvalue, self.evenness_defect)
            ],
        }


def validate(G: MatrixSpectralMeasure) -> ValidationReport:
    m = G.masses
    herm = np.abs(m - np.conj(np.swapaxes(m, 1, 2))).max(axis=(1, 2))
    sym = 0.5 * (m + np.conj(np.swapaxes(m, 1, 2)))
    min_eig = np.linalg.eigvalsh(sym)[:, 0]
    even = np.abs(m[G.system.negation] - np.conj(m)).max(axis=(1, 2))
    return ValidationReport(herm, min_eig, even, np.asarray(G.system.signed_index))


def require_valid(G: MatrixSpectralMeasure) -> None:
    """Raise the error matching the first failed invariant."""
    rep = validate(G)
    fail = rep.first_failure()
    if fail is None:
        return
    name, k, val = fail
    msg = f"{name} check failed at cell k={k} (value {val:.3e})"
    if name == "psd":
        raise NotPSD(msg)
    if name == "evenness":
        raise NonEvenMeasure(msg)
    raise VecChaosError(msg)


def _is_unit_torus(system: RegularSystem) -> bool:
    return all(abs(h - np.pi) <= 1e-12 for h in system.box.half_extent)


def fourier_transform(G: MatrixSpectralMeasure, lags) -> np.ndarray:
    """Complex ``sum_k exp(i<p, u_k>) G(Delta_k)`` for lags of shape ``(P, nu)``."""
    lags = np.atleast_2d(np.asarray(lags, dtype=float))
    u = G.system.representatives
    phase = np.exp(1j * lags @ u.T)
    return np.einsum("pk,kab->pab", phase, G.masses)


def correlation(G: MatrixSpectralMeasure, p, tol_real: float = REAL_TOL) -> np.ndarray:
    """Cross-correlation matrix ``r(p)`` (or a stack of them for several lags).

    ``p`` is one integer lag vector of length nu, or an array of shape
    ``(P, nu)``; the result is ``(d, d)`` or ``(P, d, d)`` accordingly.
    """
    if not _is_unit_torus(G.system):
        raise VecChaosError("correlation requires the unit torus [-pi, pi)^nu")
    p_arr = np.asarray(p)
    single = p_arr.ndim <= 1
    lags = np.atleast_2d(p_arr).reshape(-1, G.system.dim)
    if not np.all(lags == np.round(lags)):
        raise VecChaosError("lags must be integer vectors")
    r = fourier_transform(G, lags)
    resid = float(np.abs(r.imag).max()) if r.size else 0.0
    if resid > tol_real:
        raise NonEvenMeasure(f"correlation has imaginary residue {resid:.3e} > {tol_real:.1e}")
    out = r.real.copy()
    return out[0] if single else out


def trace_measure(G: MatrixSpectralMeasure) -> np.ndarray:
    """Per-cell trace, the dominating scalar measure."""
    return np.trace(G.masses, axis1=1, axis2=2).real.copy()


def rescale(G: MatrixSpectralMeasure, N: int, A_N: float, n: int) -> MatrixSpectralMeasure:
    """Measure ``A -> N^{2nu/n} A_N^{-2/n} G(A / N)`` on the box dilated by N."""
    if not N > 0:
        raise VecChaosError(f"N must be positive, got {N}")
    if not A_N > 0:
        raise VecChaosError(f"A_N must be positive, got {A_N}")
    if int(n) != n or n < 1:
        raise VecChaosError(f"chaos order must be a positive integer, got {n}")
    nu = G.system.dim
    factor = float(N) ** (2.0 * nu / n) * float(A_N) ** (-2.0 / n)
    return MatrixSpectralMeasure(scale_system(G.system, N), G.masses * factor)


def test_integral(G: MatrixSpectralMeasure, f, j: int, jp: int) -> complex:
    """``sum_k f(u_k) G_{j,j'}(Delta_k)`` for ``f`` given at the representatives.

    ``f`` may also be a callable taking the ``(2N, nu)`` representative array.
    """
    vals = f(G.system.representatives) if callable(f) else np.asarray(f)
    if vals.shape != (G.system.n_cells,):
        raise VecChaosError(f"test function needs {G.system.n_cells} values, got {vals.shape}")
    return complex(np.sum(vals * G.entry(j, jp)))


test_integral.__test__ = False  # keep pytest from collecting it


def moderate_increase_check(G: MatrixSpectralMeasure, r: float) -> float:
    if not r > 0:
        raise VecChaosError(f"exponent r must be positive, got {r}")
    w = (1.0 + np.linalg.norm(G.system.representatives, axis=1)) ** (-r)
    diag = np.einsum("kjj->kj", G.masses).real
    return float((w[:, None] * diag).sum(axis=0).max())


# -- construction helpers ---------------------------------------------------

def from_density(system: RegularSystem, density, order: int = 6) -> MatrixSpectralMeasure:
    """Cell masses of a smooth matrix density by tensor Gauss-Legendre quadrature.

    ``density`` maps points ``(M, nu)`` to Hermitian psd matrices ``(M, d, d)``;
    it should satisfy ``g(-x) = conj(g(x))``.  Only positive cells are
    integrated, the rest follow by conjugation.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nu = system.dim
    n = system.n_pairs
    lo, hi = system.lower[:n], system.upper[:n]
    grids = np.meshgrid(*([nodes] * nu), indexing="ij")
    ref = np.stack([g.ravel() for g in grids], axis=1)  # (q, nu) in [-1,1]
    wgrid = np.meshgrid(*([weights] * nu), indexing="ij")
    w = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None, :] + half[:, None, :] * ref[None, :, :]  # (n, q, nu)
    vals = np.asarray(density(pts.reshape(-1, nu)), dtype=complex)
    d = vals.shape[-1]
    vals = vals.reshape(n, ref.shape[0], d, d)
    jac = np.prod(half, axis=1)
    pos = np.einsum("q,nqab->nab", w, vals) * jac[:, None, None]
    pos = 0.5 * (pos + np.conj(np.swapaxes(pos, 1, 2)))
    return MatrixSpectralMeasure.from_positive(system, pos)


def singular_density_masses(system: RegularSystem, weight, beta: float, matrix) -> MatrixSpectralMeasure:
    """Cell masses of ``|x|^{-beta} w(x) M`` on a one-dimensional grid.

    ``w`` is a smooth even scalar function.  The cell touching the origin is
    integrated with an algebraic-weight rule so the singularity is exact.
    """
    if system.dim != 1:
        raise VecChaosError("singular_density_masses supports nu = 1 only")
    M = np.asarray(matrix, dtype=complex)
    n = system.n_pairs
    out = np.empty(n)
    for p in range(n):
        a, b = float(system.lower[p, 0]), float(system.upper[p, 0])
        if a == 0.0:
            val, _ = integrate.quad(lambda x: weight(x), 0.0, b, weight="alg", wvar=(-beta, 0.0))
        else:
            val, _ = integrate.quad(lambda x: x ** (-beta) * weight(x), a, b)
        out[p] = val
    return MatrixSpectralMeasure.from_positive(system, out[:, None, None] * M[None])


def random_measure(system: RegularSystem, d: int, rng: np.random.Generator,
                   rank: int | None = None, scale: float = 1.0) -> MatrixSpectralMeasure:
    """Random valid measure: ``B B^*`` per positive cell with complex Gaussian ``B``."""
    rank = d if rank is None else rank
    n = system.n_pairs
    B = rng.standard_normal((n, d, rank)) + 1j * rng.standard_normal((n, d, rank))
    pos = B @ np.conj(np.swapaxes(B, 1, 2)) * (scale / (rank * system.n_cells))
    pos = 0.5 * (pos + np.conj(np.swapaxes(pos, 1, 2)))
    return MatrixSpectralMeasure.from_positive(system, pos)
