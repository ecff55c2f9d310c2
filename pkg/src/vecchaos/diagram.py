"""Coloured diagrams and the product formula for two multiple integrals.

Vertices are numbered from 1 in both rows.  A diagram with edges
``(v_1, w_1), ..., (v_r, w_r)`` (sorted by ``v``) contracts slot ``v_k`` of the
first kernel against slot ``w_k`` of the second; the second kernel is read at
the negated cell and the pair is weighted by ``G_{j_{v_k}, j'_{w_k}}``.  Free
variables come out in the order (open first-row slots ascending, open
second-row slots ascending).
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass

import numpy as np

from .chaos import SimpleKernel, _same, weighted_norm2
from .errors import VecChaosError
from .spectral import MatrixSpectralMeasure


@dataclass(frozen=True)
class Diagram:
    n: int
    m: int
    edges: tuple  # ((v, w), ...) sorted by v

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise VecChaosError("row sizes must be nonnegative")
        edges = tuple(sorted((int(v), int(w)) for v, w in self.edges))
        vs = [v for v, _ in edges]
        ws = [w for _, w in edges]
        if len(set(vs)) != len(vs) or len(set(ws)) != len(ws):
            raise VecChaosError(f"edges {edges} are not a partial matching")
        if any(not 1 <= v <= self.n for v in vs) or any(not 1 <= w <= self.m for w in ws):
            raise VecChaosError(f"edges {edges} reference missing vertices")
        object.__setattr__(self, "edges", edges)

    @property
    def size(self) -> int:
        return len(self.edges)

    @property
    def open_row1(self) -> tuple:
        used = {v for v, _ in self.edges}
        return tuple(v for v in range(1, self.n + 1) if v not in used)

    @property
    def open_row2(self) -> tuple:
        used = {w for _, w in self.edges}
        return tuple(w for w in range(1, self.m + 1) if w not in used)

    @property
    def matched(self) -> tuple:
        return self.edges

    @property
    def output_order(self) -> int:
        return self.n + self.m - 2 * self.size

    def output_colours(self, colours1, colours2) -> tuple:
        return tuple(colours1[v - 1] for v in self.open_row1) + tuple(
            colours2[w - 1] for w in self.open_row2)

    def contraction_measures(self, colours1, colours2) -> tuple:
        """Colour pairs ``(j_{v_k}, j'_{w_k})`` of the measures integrating each edge."""
        return tuple((colours1[v - 1], colours2[w - 1]) for v, w in self.edges)


def diagram_count(n: int, m: int) -> int:
    return sum(math.comb(n, r) * math.comb(m, r) * math.factorial(r) for r in range(min(n, m) + 1))


def enumerate_diagrams(n: int, m: int) -> list[Diagram]:
    """Every partial matching between rows of sizes n and m, fewest edges first."""
    if n < 1 or m < 1:
        raise VecChaosError("row sizes must be >= 1")
    out = []
    for r in range(min(n, m) + 1):
        for vs in itertools.combinations(range(1, n + 1), r):
            for ws in itertools.permutations(range(1, m + 1), r):
                out.append(Diagram(n, m, tuple(zip(vs, ws))))
    return out


def contract_values(h1: SimpleKernel, h2: SimpleKernel, gamma: Diagram,
                    G: MatrixSpectralMeasure) -> tuple[tuple, np.ndarray]:
    """Contraction before diagonal removal: ``(colours, values)``."""
    _same(h1, h2)
    if (gamma.n, gamma.m) != (h1.order, h2.order):
        raise VecChaosError(f"diagram shape {(gamma.n, gamma.m)} does not match kernel orders")
    neg = h1.system.negation
    letters = iter(string.ascii_letters)
    sub1 = [next(letters) for _ in range(h1.order)]
    sub2 = [next(letters) for _ in range(h2.order)]
    v2 = h2.values
    operands, subs = [h1.values], None
    weights = []
    for v, w in gamma.edges:
        sub2[w - 1] = sub1[v - 1]
        v2 = np.take(v2, neg, axis=w - 1)
        weights.append((G.entry(h1.colours[v - 1], h2.colours[w - 1]), sub1[v - 1]))
    out_sub = [sub1[v - 1] for v in gamma.open_row1] + [sub2[w - 1] for w in gamma.open_row2]
    operands.append(v2)
    subs = ["".join(sub1), "".join(sub2)]
    for g, s in weights:
        operands.append(g)
        subs.append(s)
    expr = ",".join(subs) + "->" + "".join(out_sub)
    vals = np.einsum(expr, *operands, optimize=True)
    return gamma.output_colours(h1.colours, h2.colours), np.asarray(vals, dtype=complex)


def contract(h1: SimpleKernel, h2: SimpleKernel, gamma: Diagram, G: MatrixSpectralMeasure,
             zero_diagonal: bool = True) -> SimpleKernel:
    colours, vals = contract_values(h1, h2, gamma, G)
    return SimpleKernel(h1.system, colours, vals, zero_diagonal=zero_diagonal, tol=1e-10)


def contraction_norm_ratio(h1, h2, gamma, G) -> tuple[float, float]:
    """``(||h_gamma||, ||h1|| * ||h2||)`` with ``h_gamma`` taken before diagonal removal."""
    colours, vals = contract_values(h1, h2, gamma, G)
    lhs = math.sqrt(max(weighted_norm2(vals, colours, G), 0.0))
    rhs = math.sqrt(h1.norm2(G) * h2.norm2(G))
    return lhs, rhs


def product_expansion(h1: SimpleKernel, h2: SimpleKernel, G: MatrixSpectralMeasure):
    """``[(diagram, kernel), ...]`` whose integrals sum to ``I_n(h1) I_m(h2)``."""
    return [(g, contract(h1, h2, g, G)) for g in enumerate_diagrams(h1.order, h2.order)]


def tensor_contraction_factors(phis1, colours1, phis2, colours2, gamma: Diagram,
                               G: MatrixSpectralMeasure):
    """Factored ``h_gamma`` when both kernels are diagonal-free tensor products.

    Returns ``(phis, colours, weights)`` such that
    ``evaluate_tensor(smp, phis, colours, weights)`` equals
    ``evaluate(smp, contract(h1, h2, gamma, G))``: open slots keep their
    factors in output order, and edge ``(v, w)`` becomes the cell weight
    ``phi_v(k) psi_w(-k) G_{j_v, j'_w}(Delta_k)``.
    """
    if (gamma.n, gamma.m) != (len(phis1), len(phis2)):
        raise VecChaosError("diagram shape does not match the number of factors")
    neg = G.system.negation
    phis = [phis1[v - 1] for v in gamma.open_row1] + [phis2[w - 1] for w in gamma.open_row2]
    colours = gamma.output_colours(tuple(colours1), tuple(colours2))
    weights = [np.asarray(phis1[v - 1]) * np.asarray(phis2[w - 1])[neg]
               * G.entry(colours1[v - 1], colours2[w - 1]) for v, w in gamma.edges]
    return phis, colours, weights


def corollary_expansion(h1: SimpleKernel, phi: SimpleKernel, G: MatrixSpectralMeasure):
    """Product with a one-fold integral, computed without the diagram machinery.

    Term 0 is the tensor product; term p (1-based) moves slot p of ``h1`` to
    the last position and integrates it against ``conj(phi) G_{j_p, j'}``.
    """
    _same(h1, phi)
    if phi.order != 1:
        raise VecChaosError("phi must be a one-variable kernel")
    n = h1.order
    jq = phi.colours[0]
    terms = [SimpleKernel(h1.system, h1.colours + (jq,),
                          np.multiply.outer(h1.values, phi.values))]
    for p in range(1, n + 1):
        moved = np.moveaxis(h1.values, p - 1, -1)
        w = phi.values.conj() * G.entry(h1.colours[p - 1], jq)
        vals = np.tensordot(moved, w, axes=([-1], [0]))
        cols = h1.colours[: p - 1] + h1.colours[p:]
        terms.append(SimpleKernel(h1.system, cols, vals, tol=1e-10))
    return terms
