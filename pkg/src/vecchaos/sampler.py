"""Joint sampling of the vector random spectral measure and field synthesis.

Randomness contract
-------------------
Every positive cell owns a Philox key derived from ``(seed, cell offset)``,
where the offset is the cell's integer position relative to the origin.
Replica ``r`` of that cell reads a fixed block of the Philox counter space,
so any replica can be regenerated on its own, batches can be drawn in any
order, and two grids with the same cell width share the normals of the cells
they have in common.  Uniforms are mapped to normals by the inverse CDF,
which consumes a fixed number of raw words per replica.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConsistencyError, GridMismatch, NotPSD, NotRealKernel, VecChaosError
from .grid import RegularSystem
from .spectral import PSD_TOL, MatrixSpectralMeasure

FIELD_REAL_TOL = 1e-10
SYMMETRY_TOL = 1e-12


def _zigzag(v: int) -> int:
    return 2 * v if v >= 0 else -2 * v - 1


def cell_offsets(system: RegularSystem) -> np.ndarray:
    """Integer offsets of the positive cells from the origin corner."""
    half = np.array(system.cells_per_axis) // 2
    return system.multi_index[: system.n_pairs] - half


def cell_keys(system: RegularSystem, seed: int) -> np.ndarray:
    """One 128-bit Philox key per positive cell, shape ``(N, 2)``."""
    seed = int(seed)
    if seed < 0:
        raise VecChaosError("seed must be a nonnegative integer")
    keys = np.empty((system.n_pairs, 2), dtype=np.uint64)
    for p, off in enumerate(cell_offsets(system).tolist()):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_zigzag(o) for o in off))
        keys[p] = ss.generate_state(2, dtype=np.uint64)
    return keys


def standard_normals(key: np.ndarray, start: int, count: int, width: int) -> np.ndarray:
    """Normals for replicas ``start .. start+count-1`` of one cell stream, shape ``(count, width)``."""
    blocks = -(-width // 4)  # Philox emits 4 words per counter step
    bg = np.random.Philox(key=key, counter=int(start) * blocks)
    raw = bg.random_raw(count * blocks * 4).reshape(count, blocks * 4)[:, :width]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def cell_factors(G: MatrixSpectralMeasure) -> np.ndarray:
    """Complex ``L_k`` with ``L_k L_k^* = G(Delta_k)`` for the positive cells.

    Cholesky first; on failure the Hermitian eigendecomposition is used with
    eigenvalues in ``[-PSD_TOL, 0)`` clipped to zero.
    """
    n = G.system.n_pairs
    d = G.dim_field
    out = np.empty((n, d, d), dtype=complex)
    for p in range(n):
        g = G.masses[p]
        g = 0.5 * (g + g.conj().T)
        try:
            out[p] = np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(g)
            if w[0] < -PSD_TOL:
                k = int(G.system.signed_index[p])
                raise NotPSD(f"cell k={k} has eigenvalue {w[0]:.3e} below -{PSD_TOL:.0e}")
            out[p] = V * np.sqrt(np.clip(w, 0.0, None))
    return out


@dataclass(frozen=True)
class SpectralSample:
    """Realizations of ``Z_j(Delta_k)``.

    ``base`` has shape ``(2N, d)`` for one realization or ``(R, 2N, d)`` for a
    batch of replicas.  ``shift`` is an integer lattice vector; the visible
    values are ``exp(i<shift, u_k>) * base``.  Keeping the shift symbolic
    makes composition of shifts and the field-shift identity exact.
    """

    measure: MatrixSpectralMeasure
    base: np.ndarray
    shift: tuple = ()
    seed: int | None = None
    first_replica: int = 0

    def __post_init__(self):
        if not self.shift:
            object.__setattr__(self, "shift", (0,) * self.system.dim)
        self.base.setflags(write=False)

    @property
    def system(self) -> RegularSystem:
        return self.measure.system

    @property
    def batched(self) -> bool:
        return self.base.ndim == 3

    @property
    def replicas(self) -> int:
        return self.base.shape[0] if self.batched else 1

    def phases(self, lag) -> np.ndarray:
        """``exp(i<lag, u_k>)`` with the negative cells set to exact conjugates."""
        lag = np.asarray(lag, dtype=float)
        n = self.system.n_pairs
        ph = np.exp(1j * (self.system.representatives[:n] @ lag))
        return np.concatenate([ph, ph.conj()])

    @property
    def values(self) -> np.ndarray:
        if not any(self.shift):
            return self.base
        return self.base * self.phases(self.shift)[:, None]

    def component(self, j: int) -> np.ndarray:
        d = self.measure.dim_field
        if int(j) != j or not 1 <= j <= d:
            raise VecChaosError(f"colour {j} outside 1..{d}")
        return self.values[..., j - 1]

    def replica(self, r: int) -> "SpectralSample":
        if not self.batched:
            raise VecChaosError("sample holds a single realization")
        return SpectralSample(self.measure, self.base[r].copy(), self.shift, self.seed,
                              self.first_replica + r)

    def with_measure(self, measure: MatrixSpectralMeasure, scale: float = 1.0) -> "SpectralSample":
        """Same realization reinterpreted on ``measure``'s grid, multiplied by ``scale``."""
        if measure.system.n_cells != self.system.n_cells:
            raise GridMismatch("target measure has a different number of cells")
        return SpectralSample(measure, self.base * scale, self.shift, self.seed, self.first_replica)


def sample(G: MatrixSpectralMeasure, rng_seed: int, replicas: int | None = None,
           start: int = 0) -> SpectralSample:
    """Draw the random spectral measure of ``G``.

    With ``replicas=None`` a single realization is returned; otherwise
    replicas ``start .. start+replicas-1`` are returned as a batch.
    """
    L = cell_factors(G)
    keys = cell_keys(G.system, rng_seed)
    d = G.dim_field
    n = G.system.n_pairs
    count = 1 if replicas is None else int(replicas)
    if count < 0:
        raise VecChaosError("replicas must be nonnegative")
    z = np.empty((count, n, d), dtype=complex)
    for p in range(n):
        xi = standard_normals(keys[p], start, count, 2 * d)
        w = (xi[:, :d] + 1j * xi[:, d:]) * np.sqrt(0.5)
        # elementwise product so each replica is bit-identical whatever the batch size
        z[:, p, :] = (w[:, None, :] * L[p][None]).sum(axis=2)
    full = np.concatenate([z, z.conj()], axis=1)
    if replicas is None:
        full = full[0]
    return SpectralSample(G, full, seed=int(rng_seed), first_replica=int(start))


def sample_batches(G: MatrixSpectralMeasure, rng_seed: int, replicas: int, batch: int = 4096):
    """Yield consecutive replica batches; concatenated they equal one big draw."""
    for s in range(0, replicas, batch):
        yield sample(G, rng_seed, replicas=min(batch, replicas - s), start=s)


@dataclass(frozen=True)
class FieldRealization:
    points: np.ndarray  # (P, nu) integer lags
    values: np.ndarray  # (P, d) or (R, P, d), real

    def at(self, j: int, idx: int):
        return self.values[..., idx, j - 1]


def synthesize_field(smp: SpectralSample, lags) -> FieldRealization:
    """``X_j(p) = sum_k exp(i<p, u_k>) Z_j(Delta_k)`` for each lag."""
    if not all(abs(h - np.pi) <= 1e-12 for h in smp.system.box.half_extent):
        raise VecChaosError("field synthesis requires the unit torus")
    pts = np.atleast_2d(np.asarray(lags)).reshape(-1, smp.system.dim)
    if not np.all(pts == np.round(pts)):
        raise VecChaosError("lags must be integer vectors")
    eff = pts + np.asarray(smp.shift)
    ph = np.stack([smp.phases(p) for p in eff]) if len(eff) else np.zeros((0, smp.system.n_cells))
    x = np.einsum("pk,...kd->...pd", ph, smp.base)
    resid = float(np.abs(x.imag).max()) if x.size else 0.0
    if resid > FIELD_REAL_TOL:
        raise ConsistencyError(f"field has imaginary residue {resid:.3e}")
    return FieldRealization(pts.astype(np.int64), x.real.copy())


def check_hermitian(phi: np.ndarray, system: RegularSystem, tol: float = SYMMETRY_TOL) -> np.ndarray:
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (system.n_cells,):
        raise VecChaosError(f"one-variable kernel needs {system.n_cells} values, got {phi.shape}")
    scale = max(1.0, float(np.abs(phi).max(initial=0.0)))
    defect = float(np.abs(phi[system.negation] - phi.conj()).max(initial=0.0))
    if defect > tol * scale:
        raise NotRealKernel(f"phi(-k) differs from conj(phi(k)) by {defect:.3e}")
    return phi


def one_fold_values(smp: SpectralSample, phi, j: int) -> np.ndarray:
    """``sum_k phi(k) Z_j(Delta_k)`` as a complex array (no realness check)."""
    phi = check_hermitian(phi, smp.system)
    return smp.component(j) @ phi


def integrate_one_fold(smp: SpectralSample, phi, j: int):
    """Real one-fold integral; a float for one realization, an array for a batch."""
    v = one_fold_values(smp, phi, j)
    scale = max(1.0, float(np.abs(v.real).max(initial=0.0)))
    resid = float(np.abs(v.imag).max(initial=0.0))
    if resid > 1e-10 * scale:
        raise ConsistencyError(f"one-fold integral has imaginary residue {resid:.3e}")
    out = v.real
    return float(out) if np.ndim(out) == 0 else out.copy()


def one_fold_covariance(G: MatrixSpectralMeasure, phi, psi, j: int, jp: int) -> float:
    """``E[int phi dZ_j * int psi dZ_j']  = sum_k phi(k) conj(psi(k)) G_{j,j'}(Delta_k)``."""
    phi = check_hermitian(phi, G.system)
    psi = check_hermitian(psi, G.system)
    v = np.sum(phi * psi.conj() * G.entry(j, jp))
    return float(v.real)


def empirical_cross_moments(smp: SpectralSample):
    """Replica averages of ``Z conj(Z')`` and ``Z Z'`` per cell, with standard errors.

    Returns ``(herm_mean, herm_se, pseudo_mean, pseudo_se)`` each shaped
    ``(2N, d, d)``; standard errors are per real and imaginary part.
    """
    if not smp.batched:
        raise VecChaosError("empirical moments need a batch of replicas")
    z = smp.values
    R = z.shape[0]
    herm = z[:, :, :, None] * z[:, :, None, :].conj()
    pseudo = z[:, :, :, None] * z[:, :, None, :]

    def stats(a):
        m = a.mean(axis=0)
        se = (a.real.std(axis=0, ddof=1) + 1j * a.imag.std(axis=0, ddof=1)) / np.sqrt(R)
        return m, se

    return (*stats(herm), *stats(pseudo))
