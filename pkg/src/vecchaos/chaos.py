"""Simple kernels and their multiple Wiener-Ito integrals.

A kernel of order n is a dense complex array of shape ``(2N,)*n`` indexed by
grid positions.  Tuples in which two cells coincide up to sign are zeroed on
construction.  No ``1/n!`` normalisation is applied to the integral.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import ConsistencyError, GridMismatch, NotRealKernel, VecChaosError
from .grid import RegularSystem
from .sampler import SpectralSample, check_hermitian
from .spectral import MatrixSpectralMeasure

EVAL_REAL_TOL = 1e-9
SYMMETRY_TOL = 1e-12
_EVAL_CHUNK = 1 << 22  # complex entries per intermediate block


@lru_cache(maxsize=64)
def _diagonal_mask(n_pairs: int, n: int) -> np.ndarray:
    pid = np.arange(2 * n_pairs) % n_pairs
    mask = np.zeros((2 * n_pairs,) * n, dtype=bool)
    for a, b in itertools.combinations(range(n), 2):
        shape_a = [1] * n
        shape_b = [1] * n
        shape_a[a] = shape_b[b] = 2 * n_pairs
        mask |= pid.reshape(shape_a) == pid.reshape(shape_b)
    mask.setflags(write=False)
    return mask


def diagonal_mask(system: RegularSystem, n: int) -> np.ndarray:
    """Boolean array, True where ``k_l = +-k_l'`` for some ``l != l'``."""
    return _diagonal_mask(system.n_pairs, n)


def negate_all(values: np.ndarray, system: RegularSystem) -> np.ndarray:
    """``f(-k_1, ..., -k_n)`` as an array."""
    if values.ndim == 0:
        return values
    return values[np.ix_(*([system.negation] * values.ndim))]


class SimpleKernel:
    """Hermitian-symmetric kernel on a regular system with a colour list.

    Colours are 1-based.  ``values[p_1, ..., p_n]`` is the kernel on the tuple
    of cells at grid positions ``p_1..p_n``.
    """

    def __init__(self, system: RegularSystem, colours, values, *, zero_diagonal: bool = True,
                 check: bool = True, tol: float = SYMMETRY_TOL):
        colours = tuple(int(c) for c in colours)
        values = np.array(values, dtype=complex)
        n = len(colours)
        if values.shape != (system.n_cells,) * n:
            raise VecChaosError(
                f"kernel of order {n} needs shape {(system.n_cells,) * n}, got {values.shape}")
        if any(c < 1 for c in colours):
            raise VecChaosError(f"colours must be >= 1, got {colours}")
        if zero_diagonal and n >= 2:
            values[diagonal_mask(system, n)] = 0.0
        if check:
            defect = float(np.abs(negate_all(values, system) - values.conj()).max(initial=0.0))
            scale = max(1.0, float(np.abs(values).max(initial=0.0)))
            if defect > tol * scale:
                raise NotRealKernel(f"kernel is not Hermitian symmetric (defect {defect:.3e})")
        values.setflags(write=False)
        self.system = system
        self.colours = colours
        self.values = values

    @property
    def order(self) -> int:
        return len(self.colours)

    def __repr__(self):
        return f"SimpleKernel(order={self.order}, colours={self.colours}, cells={self.system.n_cells})"

    def check_colours(self, d: int) -> None:
        if any(c > d for c in self.colours):
            raise VecChaosError(f"colours {self.colours} exceed field dimension {d}")

    def norm2(self, G: MatrixSpectralMeasure) -> float:
        """``sum |f|^2 prod_s G_{j_s,j_s}(Delta_{k_s})``."""
        return weighted_norm2(self.values, self.colours, G)

    def __add__(self, other: "SimpleKernel") -> "SimpleKernel":
        _same(self, other)
        if self.colours != other.colours:
            raise VecChaosError("cannot add kernels with different colour lists")
        return SimpleKernel(self.system, self.colours, self.values + other.values, check=False)

    def scaled(self, c: float) -> "SimpleKernel":
        return SimpleKernel(self.system, self.colours, self.values * float(c), check=False)

    def nonzero_entries(self):
        """Iterate ``(signed index tuple, value)`` over nonzero entries."""
        idx = np.argwhere(self.values != 0)
        k = self.system.signed_index
        for row in idx:
            yield tuple(int(k[p]) for p in row), complex(self.values[tuple(row)])


def _same(a, b):
    if a.system != b.system:
        raise GridMismatch("objects live on different regular systems")


def weighted_norm2(values: np.ndarray, colours, G: MatrixSpectralMeasure) -> float:
    acc = np.abs(values) ** 2
    for c in colours:
        g = G.entry(c, c).real
        acc = np.tensordot(acc, g, axes=([0], [0]))
    return float(acc)


def zero_kernel(system: RegularSystem, colours) -> SimpleKernel:
    return SimpleKernel(system, colours, np.zeros((system.n_cells,) * len(colours)), check=False)


def tensor_kernel(phis, colours, system: RegularSystem, d: int | None = None) -> SimpleKernel:
    """``phi_1(k_1) ... phi_n(k_n)`` with diagonal tuples removed."""
    colours = tuple(int(c) for c in colours)
    if len(phis) != len(colours):
        raise VecChaosError("need one colour per factor")
    if any(c < 1 or (d is not None and c > d) for c in colours):
        raise VecChaosError(f"colour out of range in {colours}")
    arrs = [check_hermitian(p, system) for p in phis]
    if not arrs:
        return SimpleKernel(system, (), np.array(1.0 + 0j), check=False)
    out = arrs[0]
    for a in arrs[1:]:
        out = np.multiply.outer(out, a)
    return SimpleKernel(system, colours, out)


def random_kernel(system: RegularSystem, colours, rng: np.random.Generator,
                  density: float = 1.0) -> SimpleKernel:
    """Random Hermitian-symmetric kernel; ``density`` is the chance an entry survives."""
    n = len(colours)
    shape = (system.n_cells,) * n
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if density < 1.0:
        a = a * (rng.random(shape) < density)
    a = 0.5 * (a + negate_all(a, system).conj())
    return SimpleKernel(system, colours, a)


def _check_permutation(pi, n):
    pi = tuple(int(p) for p in pi)
    if sorted(pi) != list(range(n)):
        raise VecChaosError(f"{pi} is not a permutation of 0..{n - 1}")
    return pi


def permute_kernel(h: SimpleKernel, pi) -> SimpleKernel:
    """``h_pi(k_1..k_n) = h(k_{pi(1)}, ..., k_{pi(n)})``, integral unchanged pathwise.

    ``pi`` is a sequence over ``0..n-1``.  Variable ``k_s`` of ``h_pi`` sits in
    slot ``pi^{-1}(s)`` of ``h``, so it takes that slot's colour.
    """
    pi = _check_permutation(pi, h.order)
    axes = np.argsort(pi)
    vals = np.transpose(h.values, axes) if h.order else h.values
    cols = tuple(h.colours[a] for a in axes)
    return SimpleKernel(h.system, cols, vals, zero_diagonal=False, check=False)


def _contract_batch(values: np.ndarray, zs) -> np.ndarray:
    """Full contraction ``sum f(k) prod_s z_s[r, k_s]`` for each replica r."""
    n = values.ndim
    R = zs[0].shape[0]
    M = values.shape[0] if n else 0
    if n == 0:
        return np.full(R, complex(values))
    # contract the last axis with a matrix product, then fold the rest
    head = values.reshape(-1, M)
    out = np.empty(R, dtype=complex)
    step = max(1, _EVAL_CHUNK // max(1, head.shape[0]))
    for s in range(0, R, step):
        sl = slice(s, min(R, s + step))
        acc = head @ zs[-1][sl].T  # (M^{n-1}, r)
        for t in range(n - 2, -1, -1):
            acc = acc.reshape(-1, M, acc.shape[-1])
            acc = np.einsum("amr,rm->ar", acc, zs[t][sl])
        out[sl] = acc.reshape(-1)
    return out


def evaluate_complex(smp: SpectralSample, f: SimpleKernel) -> np.ndarray:
    if smp.system != f.system:
        raise GridMismatch("kernel and sample live on different regular systems")
    f.check_colours(smp.measure.dim_field)
    vals = smp.values
    batch = vals if smp.batched else vals[None]
    zs = [batch[..., c - 1] for c in f.colours]
    if not zs:
        zs = [np.zeros((batch.shape[0], 0))]
    return _contract_batch(f.values, zs)


def evaluate(smp: SpectralSample, f: SimpleKernel):
    """Multiple integral ``I_n(f)``: float for one realization, array for a batch."""
    v = evaluate_complex(smp, f)
    scale = max(1.0, float(np.abs(v.real).max(initial=0.0)))
    resid = float(np.abs(v.imag).max(initial=0.0))
    if resid > EVAL_REAL_TOL * scale:
        raise ConsistencyError(f"integral has imaginary residue {resid:.3e}")
    out = v.real.copy()
    return out if smp.batched else float(out[0])


def set_partitions(n: int):
    """All partitions of ``range(n)`` as lists of tuples."""
    if n == 0:
        yield []
        return
    for part in set_partitions(n - 1):
        yield part + [(n - 1,)]
        for i in range(len(part)):
            yield part[:i] + [part[i] + (n - 1,)] + part[i + 1:]


def evaluate_tensor(smp: SpectralSample, phis, colours, weights=()):
    """``I_n`` of ``tensor_kernel(phis, colours)`` without building the dense kernel.

    Summing a product over tuples of pairwise distinct cell pairs is done by
    Moebius inversion on the partition lattice: each block of a partition
    contributes ``sum_p prod_{s in B} a_s(p)`` where ``a_s(p)`` folds the two
    signs of pair ``p``.  Cost grows with the Bell number of ``n`` instead of
    ``(2N)^n``.

    ``weights`` are extra deterministic factors ``w(k)`` summed over cells
    that must also avoid every other variable's pair; they are how the
    contracted variables of a diagram enter (see
    :func:`vecchaos.diagram.tensor_contraction_factors`).
    """
    colours = tuple(int(c) for c in colours)
    if len(phis) != len(colours):
        raise VecChaosError("need one colour per factor")
    system = smp.system
    n_pairs = system.n_pairs
    vals = smp.values if smp.batched else smp.values[None]
    folded = []
    for phi, c in zip(phis, colours):
        phi = check_hermitian(phi, system)
        z = vals[..., c - 1] * phi
        folded.append(z[:, :n_pairs] + z[:, n_pairs:])
    for w in weights:
        w = np.asarray(w, dtype=complex)
        if w.shape != (system.n_cells,):
            raise VecChaosError(f"weight needs {system.n_cells} values, got {w.shape}")
        folded.append((w[:n_pairs] + w[n_pairs:])[None, :])
    total = np.zeros(vals.shape[0], dtype=complex)
    for part in set_partitions(len(folded)):
        coef = 1.0
        term = np.ones(vals.shape[0], dtype=complex)
        for block in part:
            coef *= (-1) ** (len(block) - 1) * math.factorial(len(block) - 1)
            prod = folded[block[0]]
            for s in block[1:]:
                prod = prod * folded[s]
            term = term * prod.sum(axis=1)
        total += coef * term
    scale = max(1.0, float(np.abs(total.real).max(initial=0.0)))
    resid = float(np.abs(total.imag).max(initial=0.0))
    if resid > EVAL_REAL_TOL * scale:
        raise ConsistencyError(f"integral has imaginary residue {resid:.3e}")
    out = total.real.copy()
    return out if smp.batched else float(out[0])


def evaluate_sum(smp: SpectralSample, kernels) -> np.ndarray | float:
    """Sum of integrals, merging kernels that share a colour list first."""
    groups: dict = {}
    for k in kernels:
        if k.colours in groups:
            groups[k.colours] = groups[k.colours] + k
        else:
            groups[k.colours] = k
    total = 0.0
    for k in groups.values():
        total = total + evaluate(smp, k)
    if not groups:
        total = np.zeros(smp.replicas) if smp.batched else 0.0
    return total


def analytic_covariance(f: SimpleKernel, h: SimpleKernel, G: MatrixSpectralMeasure) -> float:
    """``E I_n(f) I_n'(h)``: the permutation sum for equal orders, zero otherwise."""
    _same(f, h)
    if f.order != h.order:
        return 0.0
    n = f.order
    if n == 0:
        return float((f.values * h.values.conj()).real)
    total = 0.0 + 0.0j
    for pi in itertools.permutations(range(n)):
        hp = permute_kernel(h, pi)
        acc = f.values * hp.values.conj()
        for s in range(n):
            g = G.entry(f.colours[s], hp.colours[s])
            acc = np.tensordot(acc, g, axes=([0], [0]))
        total += complex(acc)
    return float(total.real)


def second_moment_bound(f: SimpleKernel, G: MatrixSpectralMeasure) -> float:
    return math.factorial(f.order) * f.norm2(G)
