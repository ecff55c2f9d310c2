"""Wick polynomials of correlated Gaussians and the multivariate Ito formula.

Two independent constructions of :U_1 U_2 U_3: agree to rounding.  The Wick
product of one-fold integrals is then compared, sample by sample, with the
triple integral of the tensor-product kernel.
"""
import numpy as np

from vecchaos import (data_path, gaussian_moment, hermite, ito_both_sides, load_measure, sample,
                      wick_expand, wick_project)
from vecchaos.suites import split_measure
from vecchaos.wick import variables

print("H_4(x) at x = 0, 1, 2:", hermite(4, np.array([0.0, 1.0, 2.0])))

cov = np.array([[1.0, 0.6, 0.2], [0.6, 1.0, -0.3], [0.2, -0.3, 1.0]])
x1, x2, x3 = variables(cov)
a, b = wick_expand(x1, x2, x3), wick_project(x1, x2, x3)
print("expand - project, max coefficient gap:",
      max(abs(a.coeffs.get(e, 0) - b.coeffs.get(e, 0)) for e in set(a.coeffs) | set(b.coeffs)))
print("mean of the Wick polynomial:", gaussian_moment(a))

G = split_measure(load_measure(data_path("example_measure.json")), 16)
x = G.system.representatives[:, 0]
phis = [np.exp(-0.5 * x * x + 1j * w * x) for w in (0.2, 0.7, -0.4)]
lhs, rhs = ito_both_sides(phis, (1, 2, 1), sample(G, rng_seed=5, replicas=5))
print("\n:U1 U2 U3: vs triple integral on five replicas on 256 cells (the gap is the zeroed diagonal):")
for l, r in zip(lhs, rhs):
    print(f"  {l:+.4f}  {r:+.4f}")
