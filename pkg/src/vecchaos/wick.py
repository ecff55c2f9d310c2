"""Hermite and Wick polynomials of jointly Gaussian variables, Ito's formula, shifts.

Polynomials live in :class:`GaussianExpression`: a map from exponent tuples
to real coefficients together with the covariance of the underlying centred
Gaussian variables.  Two independent routes give Wick products:

* :func:`wick_project` -- brute-force orthogonal projection using exact
  Gaussian moments as the inner product (the reference);
* :func:`wick_expand` -- rewrite in orthonormal coordinates and replace
  powers by Hermite polynomials (the fast path).

Both return expressions over the same variables; :func:`canonical` maps an
expression to orthonormal coordinates, where the representation is unique.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .chaos import SimpleKernel, evaluate_tensor
from .errors import VecChaosError
from .sampler import SpectralSample, check_hermitian, one_fold_values
from .spectral import MatrixSpectralMeasure

DEFAULT_MAX_DEGREE = 8
RANK_TOL = 1e-10


# -- Hermite polynomials ------------------------------------------------------

def hermite(n: int, x):
    """Monic Hermite polynomial ``H_n`` by the three-term recursion."""
    if int(n) != n or n < 0:
        raise VecChaosError(f"Hermite order must be a nonnegative integer, got {n}")
    x = np.asarray(x, dtype=float)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    for k in range(1, int(n) + 1):
        prev, cur = cur, x * cur - (k - 1) * prev
    return cur if cur.ndim else float(cur)


@lru_cache(maxsize=None)
def hermite_coefficients(n: int) -> tuple:
    """Power-basis coefficients ``(c_0, ..., c_n)`` of ``H_n``."""
    prev, cur = [0.0], [1.0]
    for k in range(1, n + 1):
        nxt = [0.0] + list(cur)
        for i, c in enumerate(prev):
            nxt[i] -= (k - 1) * c
        prev, cur = cur, nxt
    return tuple(cur)


# -- polynomial algebra -------------------------------------------------------

class GaussianExpression:
    """Real polynomial in centred jointly Gaussian variables with covariance ``cov``."""

    def __init__(self, coeffs: dict, cov, max_degree: int = DEFAULT_MAX_DEGREE):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise VecChaosError("covariance must be a square matrix")
        m = cov.shape[0]
        clean = {}
        for e, c in coeffs.items():
            e = tuple(int(x) for x in e)
            if len(e) != m or any(x < 0 for x in e):
                raise VecChaosError(f"bad exponent {e} for {m} variables")
            if not np.isfinite(c):
                raise VecChaosError("coefficients must be finite")
            if c != 0.0:
                clean[e] = clean.get(e, 0.0) + float(c)
        deg = max((sum(e) for e in clean), default=0)
        if deg > max_degree:
            raise VecChaosError(f"degree {deg} exceeds the configured maximum {max_degree}")
        self.coeffs = clean
        self.cov = cov
        self.max_degree = max_degree

    @property
    def nvars(self) -> int:
        return self.cov.shape[0]

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=0)

    def _like(self, coeffs, max_degree=None):
        return GaussianExpression(coeffs, self.cov, max_degree or self.max_degree)

    def _compatible(self, other):
        if other.cov.shape != self.cov.shape or not np.array_equal(other.cov, self.cov):
            raise VecChaosError("expressions are over different Gaussian variables")

    def __add__(self, other):
        if not isinstance(other, GaussianExpression):
            other = constant(float(other), self.cov)
        self._compatible(other)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0.0) + c
        return self._like(out, max(self.max_degree, other.max_degree))

    __radd__ = __add__

    def __neg__(self):
        return self._like({e: -c for e, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, GaussianExpression) else -float(other))

    def __mul__(self, other):
        if not isinstance(other, GaussianExpression):
            return self._like({e: c * float(other) for e, c in self.coeffs.items()})
        self._compatible(other)
        out: dict = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return self._like(out, max(self.max_degree, other.max_degree, self.degree + other.degree))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = constant(1.0, self.cov, self.max_degree)
        for _ in range(int(k)):
            out = out * self
        return out

    def evaluate(self, x) -> np.ndarray:
        """Value at points ``x`` of shape ``(..., nvars)``."""
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for e, c in self.coeffs.items():
            term = np.full(x.shape[:-1], c)
            for i, p in enumerate(e):
                if p:
                    term = term * x[..., i] ** p
            total = total + term
        return total

    def linear_coefficients(self) -> np.ndarray:
        """Coefficient vector of a purely linear expression."""
        if any(sum(e) != 1 for e in self.coeffs):
            raise VecChaosError("expression is not linear")
        a = np.zeros(self.nvars)
        for e, c in self.coeffs.items():
            a[e.index(1)] = c
        return a

    def coefficient_norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.coeffs.values()))

    def __repr__(self):
        return f"GaussianExpression(nvars={self.nvars}, degree={self.degree}, terms={len(self.coeffs)})"


def constant(c: float, cov, max_degree: int = DEFAULT_MAX_DEGREE) -> GaussianExpression:
    m = np.asarray(cov).shape[0]
    return GaussianExpression({(0,) * m: float(c)}, cov, max_degree)


def variables(cov, max_degree: int = DEFAULT_MAX_DEGREE) -> list[GaussianExpression]:
    cov = np.asarray(cov, dtype=float)
    m = cov.shape[0]
    return [GaussianExpression({tuple(int(i == j) for i in range(m)): 1.0}, cov, max_degree)
            for j in range(m)]


def linear(coeffs, cov, max_degree: int = DEFAULT_MAX_DEGREE) -> GaussianExpression:
    coeffs = np.asarray(coeffs, dtype=float)
    xs = variables(cov, max_degree)
    out = constant(0.0, cov, max_degree)
    for a, x in zip(coeffs, xs):
        if a:
            out = out + x * a
    return out


def monomials(m: int, max_deg: int):
    """Exponent tuples in m variables with total degree <= max_deg, graded order."""
    out = []
    for deg in range(max_deg + 1):
        for combo in itertools.combinations_with_replacement(range(m), deg):
            e = [0] * m
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


# -- Gaussian moments -----------------------------------------------------------

_MOMENT_TABLES: dict = {}


def _moment_table(cov: np.ndarray):
    key = (cov.shape, cov.tobytes())
    if key in _MOMENT_TABLES:
        return _MOMENT_TABLES[key]
    if len(_MOMENT_TABLES) > 256:
        _MOMENT_TABLES.clear()
    cov_t = cov.copy()

    @lru_cache(maxsize=None)
    def mom(e: tuple) -> float:
        deg = sum(e)
        if deg == 0:
            return 1.0
        if deg % 2:
            return 0.0
        i = next(k for k, p in enumerate(e) if p)
        rest = list(e)
        rest[i] -= 1
        total = 0.0
        for j, p in enumerate(rest):
            if p and cov_t[i, j] != 0.0:
                nxt = list(rest)
                nxt[j] -= 1
                total += cov_t[i, j] * p * mom(tuple(nxt))
        return total

    _MOMENT_TABLES[key] = mom
    return mom


def gaussian_moment(expr: GaussianExpression) -> float:
    """Exact expectation under the centred Gaussian law with covariance ``expr.cov``.

    Uses ``E[x_i M] = sum_j C_ij E[d M / d x_j]`` on each monomial.
    """
    if expr.degree > expr.max_degree:
        raise VecChaosError("degree overflow")
    mom = _moment_table(expr.cov)
    return float(sum(c * mom(e) for e, c in expr.coeffs.items()))


# -- substitution and canonical form -------------------------------------------

def substitute(expr: GaussianExpression, B: np.ndarray, new_cov, max_degree=None) -> GaussianExpression:
    """Rewrite ``expr`` through ``x = B y``; ``B`` has shape ``(nvars, len(y))``."""
    B = np.asarray(B, dtype=float)
    new_cov = np.asarray(new_cov, dtype=float)
    md = max_degree or expr.max_degree
    ys = variables(new_cov, md)
    lin = []
    for i in range(B.shape[0]):
        acc = constant(0.0, new_cov, md)
        for j, b in enumerate(B[i]):
            if b:
                acc = acc + ys[j] * float(b)
        lin.append(acc)
    out = constant(0.0, new_cov, md)
    for e, c in expr.coeffs.items():
        term = constant(c, new_cov, md)
        for i, p in enumerate(e):
            for _ in range(p):
                term = term * lin[i]
        out = out + term
    return out


def orthonormal_basis(cov, tol: float = RANK_TOL):
    """``(B, W)`` with ``x = B eta`` for iid standard ``eta`` and ``eta = W x``.

    Directions with eigenvalue below ``tol * max(1, lambda_max)`` are dropped.
    """
    cov = np.asarray(cov, dtype=float)
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    keep = w > tol * max(1.0, float(w.max(initial=0.0)))
    w, V = w[keep], V[:, keep]
    B = V * np.sqrt(w)
    W = (V / np.sqrt(w)).T
    return B, W


def canonical(expr: GaussianExpression) -> GaussianExpression:
    """The same random variable written in orthonormal coordinates (unique form)."""
    B, _ = orthonormal_basis(expr.cov)
    return substitute(expr, B, np.eye(B.shape[1]))


def coefficient_distance(a: GaussianExpression, b: GaussianExpression) -> float:
    """Coefficient-norm distance after mapping both to orthonormal coordinates."""
    a._compatible(b)
    return canonical(a - b).coefficient_norm()


# -- Wick products ---------------------------------------------------------------

def _u_space(Us):
    Us = list(Us)
    if not Us:
        raise VecChaosError("need at least one variable")
    cov = Us[0].cov
    for u in Us[1:]:
        u._compatible(Us[0])
    A = np.stack([u.linear_coefficients() for u in Us])
    return A, A @ cov @ A.T


def wick_project_polynomial(P: GaussianExpression, tol: float = RANK_TOL) -> GaussianExpression:
    """Orthogonal projection of a homogeneous ``P`` onto the complement of lower degrees.

    The Gram system is solved over monomials in iid standard coordinates; over
    the original, possibly strongly correlated, variables it is too badly
    conditioned for a 1e-10 comparison.
    """
    n = P.degree
    if any(sum(e) != n for e in P.coeffs):
        raise VecChaosError("Wick polynomials are defined for homogeneous polynomials")
    md = max(P.max_degree, 2 * n)
    B, W = orthonormal_basis(P.cov, tol)
    r = B.shape[1]
    eye = np.eye(r)
    Q = substitute(GaussianExpression(P.coeffs, P.cov, md), B, eye, md)
    basis = [GaussianExpression({e: 1.0}, eye, md) for e in monomials(r, n - 1)]
    if n == 0 or not basis:
        return GaussianExpression(P.coeffs, P.cov, md)
    gram = np.array([[gaussian_moment(a * b) for b in basis] for a in basis])
    rhs = np.array([gaussian_moment(a * Q) for a in basis])
    c = np.linalg.solve(gram, rhs)
    out = Q
    for ci, b in zip(c, basis):
        if ci != 0.0:
            out = out - b * float(ci)
    return substitute(out, W, P.cov, md)


def _product_in_u_space(n: int, cov_u, md) -> GaussianExpression:
    return GaussianExpression({(1,) * n: 1.0}, cov_u, md)


def wick_project(*Us: GaussianExpression, tol: float = RANK_TOL) -> GaussianExpression:
    """``:U_1 ... U_n:`` by brute-force projection.

    The result is a polynomial in ``n`` new variables standing for the ``U``'s,
    with their covariance ``A C A^T``.
    """
    _, cov_u = _u_space(Us)
    n = len(Us)
    return wick_project_polynomial(_product_in_u_space(n, cov_u, max(DEFAULT_MAX_DEGREE, 2 * n)), tol)


def _hermite_replace(expr: GaussianExpression) -> GaussianExpression:
    """Replace each ``prod eta_p^{l_p}`` by ``prod H_{l_p}(eta_p)`` (orthonormal variables)."""
    out: dict = {}
    for e, c in expr.coeffs.items():
        factors = [hermite_coefficients(p) for p in e]
        for powers in itertools.product(*[range(len(f)) for f in factors]):
            coef = c
            for f, q in zip(factors, powers):
                coef *= f[q]
                if coef == 0.0:
                    break
            if coef != 0.0:
                out[powers] = out.get(powers, 0.0) + coef
    return GaussianExpression(out, expr.cov, expr.max_degree)


def wick_expand_polynomial(P: GaussianExpression, tol: float = RANK_TOL) -> GaussianExpression:
    """Closed-form Wick polynomial of a homogeneous ``P`` via orthonormal Hermite products."""
    n = P.degree
    if any(sum(e) != n for e in P.coeffs):
        raise VecChaosError("Wick polynomials are defined for homogeneous polynomials")
    B, W = orthonormal_basis(P.cov, tol)
    r = B.shape[1]
    eta = substitute(P, B, np.eye(r))
    wick_eta = _hermite_replace(eta)
    return substitute(wick_eta, W, P.cov, P.max_degree)


def wick_expand(*Us: GaussianExpression, tol: float = RANK_TOL) -> GaussianExpression:
    """``:U_1 ... U_n:`` by the Hermite route, in the same variables as :func:`wick_project`."""
    _, cov_u = _u_space(Us)
    n = len(Us)
    return wick_expand_polynomial(_product_in_u_space(n, cov_u, max(DEFAULT_MAX_DEGREE, 2 * n)), tol)


def wick_of_subset(cov_u, subset, md=None) -> GaussianExpression:
    """``:prod_{s in subset} V_s:`` over variables ``V`` with covariance ``cov_u``."""
    m = np.asarray(cov_u).shape[0]
    e = [0] * m
    for s in subset:
        e[s] += 1
    md = md or max(DEFAULT_MAX_DEGREE, 2 * m)
    return wick_expand_polynomial(GaussianExpression({tuple(e): 1.0}, cov_u, md))


def wick_recursion_check(*Us: GaussianExpression) -> float:
    """Coefficient-norm defect of ``:U_1..U_n: U_{n+1} = :U_1..U_{n+1}: + sum_s :..^U_s..: E U_s U_{n+1}``."""
    if len(Us) < 2:
        raise VecChaosError("need at least two variables")
    _, cov_u = _u_space(Us)
    m = len(Us)
    n = m - 1
    md = max(DEFAULT_MAX_DEGREE, 2 * m)
    V = variables(cov_u, md)
    lhs = wick_of_subset(cov_u, range(n), md) * V[n]
    rhs = wick_of_subset(cov_u, range(m), md)
    for s in range(n):
        rest = [t for t in range(n) if t != s]
        rhs = rhs + wick_of_subset(cov_u, rest, md) * float(cov_u[s, n])
    return coefficient_distance(lhs, rhs)


def orthogonality_defect(W: GaussianExpression) -> float:
    """Largest ``|E[W Q]|`` over monomials ``Q`` of degree below ``deg W``."""
    n = W.degree
    md = max(W.max_degree, 2 * n)
    W = GaussianExpression(W.coeffs, W.cov, md)
    worst = 0.0
    for e in monomials(W.nvars, n - 1):
        worst = max(worst, abs(gaussian_moment(W * GaussianExpression({e: 1.0}, W.cov, md))))
    return worst


# -- spectral representation ---------------------------------------------------------

def base_covariance(G: MatrixSpectralMeasure) -> np.ndarray:
    """Covariance of the real coordinates ``(Re Z_j(k), Im Z_j(k))`` over positive cells.

    Coordinates are ordered cell-major: for each positive cell the d real
    parts followed by the d imaginary parts.
    """
    n, d = G.system.n_pairs, G.dim_field
    C = np.zeros((2 * n * d, 2 * n * d))
    for p in range(n):
        g = G.masses[p]
        blk = 0.5 * np.block([[g.real, -g.imag], [g.imag, g.real]])
        s = 2 * d * p
        C[s:s + 2 * d, s:s + 2 * d] = blk
    return C


def base_coordinates(smp: SpectralSample) -> np.ndarray:
    """Sampled base coordinates in the order of :func:`base_covariance`."""
    n = smp.system.n_pairs
    z = smp.values[..., :n, :]
    parts = np.concatenate([z.real, z.imag], axis=-1)
    return parts.reshape(*parts.shape[:-2], -1)


def one_fold_expression(G: MatrixSpectralMeasure, phi, j: int, cov=None,
                        max_degree: int = DEFAULT_MAX_DEGREE) -> GaussianExpression:
    """``int phi dZ_j`` as a linear expression in the base coordinates."""
    phi = check_hermitian(phi, G.system)
    n, d = G.system.n_pairs, G.dim_field
    a = np.zeros(2 * n * d)
    for p in range(n):
        s = 2 * d * p
        a[s + j - 1] = 2.0 * phi[p].real
        a[s + d + j - 1] = -2.0 * phi[p].imag
    cov = base_covariance(G) if cov is None else cov
    return linear(a, cov, max_degree)


def one_fold_gram(G: MatrixSpectralMeasure, phis, colours) -> np.ndarray:
    """``E U_s U_t = sum_k phi_s(k) conj(phi_t(k)) G_{j_s j_t}(Delta_k)``."""
    n = len(phis)
    C = np.empty((n, n))
    for s in range(n):
        for t in range(n):
            C[s, t] = float(np.sum(phis[s] * np.conj(phis[t]) * G.entry(colours[s], colours[t])).real)
    return 0.5 * (C + C.T)


def wick_in_variables(cov_u, exponent=None) -> GaussianExpression:
    """Wick product of the variables with covariance ``cov_u`` (each once by default)."""
    m = np.asarray(cov_u).shape[0]
    e = (1,) * m if exponent is None else tuple(exponent)
    md = max(DEFAULT_MAX_DEGREE, 2 * sum(e))
    return wick_expand_polynomial(GaussianExpression({e: 1.0}, cov_u, md))


def ito_both_sides(phis, colours, smp: SpectralSample):
    """``(lhs, rhs)``: the Wick product of one-fold integrals, and the n-fold integral.

    The left side substitutes the sampled ``U_s`` into the Wick polynomial;
    the right side integrates the tensor-product kernel, whose diagonal
    tuples are removed.  They agree only as the grid is refined.
    """
    phis = [check_hermitian(p, smp.system) for p in phis]
    colours = tuple(int(c) for c in colours)
    G = smp.measure
    cov_u = one_fold_gram(G, phis, colours)
    W = wick_in_variables(cov_u)
    U = np.stack([one_fold_values(smp, p, j).real for p, j in zip(phis, colours)], axis=-1)
    lhs = W.evaluate(U)
    rhs = evaluate_tensor(smp, phis, colours)
    if not smp.batched:
        return float(lhs), float(rhs)
    return lhs, rhs


# -- shifts ---------------------------------------------------------------------------

def shift_sample(smp: SpectralSample, u) -> SpectralSample:
    """``Z_j(Delta_k) -> exp(i<u, u_k>) Z_j(Delta_k)``."""
    u = tuple(int(x) for x in np.atleast_1d(u))
    if len(u) != smp.system.dim:
        raise VecChaosError("shift must have one entry per axis")
    new = tuple(a + b for a, b in zip(smp.shift, u))
    return SpectralSample(smp.measure, smp.base, new, smp.seed, smp.first_replica)


def shift_phases(system, u) -> np.ndarray:
    u = np.asarray(np.atleast_1d(u), dtype=float)
    n = system.n_pairs
    ph = np.exp(1j * (system.representatives[:n] @ u))
    return np.concatenate([ph, ph.conj()])


def shift_kernel(f: SimpleKernel, u) -> SimpleKernel:
    """Multiply ``f`` by ``exp(i<u, u_{k_1} + ... + u_{k_n}>)``."""
    ph = shift_phases(f.system, u)
    vals = f.values
    for ax in range(f.order):
        shape = [1] * f.order
        shape[ax] = -1
        vals = vals * ph.reshape(shape)
    return SimpleKernel(f.system, f.colours, vals, zero_diagonal=False, check=False)
