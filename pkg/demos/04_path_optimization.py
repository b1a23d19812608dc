"""
Shortening the path between two marginals
=========================================

The kinetic cost of a path on the simplex is int E|b|^2 dt. For a shift
coupling the straight edge is optimal with cost |m|^2; starting from a
wiggly Fourier path, gradient descent on the coefficients walks back to it.
"""

import numpy as np

from mmflow import AffineMap, MongeProblem, PathOptConfig, SimplexPath, optimize_path, transport_cost
from mmflow.pathopt import alpha_table

m = np.array([2.0, 1.0])
prob = MongeProblem((AffineMap.shift(m),))
coupling = prob.coupling()

cfg = PathOptConfig(mc_samples=256, time_nodes=32, steps=150, lr=0.03)
print("straight edge cost:", transport_cost(prob, SimplexPath.linear_edge(0, 1, 1), coupling, cfg).value)

rng = np.random.default_rng(4)
wiggly = SimplexPath.fourier(0, 1, 1, N=4, coeffs=rng.normal(0, 0.3, (2, 4)))
best, trace = optimize_path(prob, wiggly, coupling, cfg)
for s in (0, 10, 50, 150):
    print(f"step {s:3d}  cost {trace[s, 0]:.4f}")

print("\nalpha_1(t) before and after")
before = alpha_table(wiggly, n=6).splitlines()[1:]
after = alpha_table(best, n=6).splitlines()[1:]
for b, a in zip(before, after):
    t, _, b1 = b.split(",")
    print(f"t={float(t):.1f}  {float(b1):.3f} -> {float(a.split(',')[2]):.3f}")

# for the standard-normal pair the straight-edge cost is 2 - pi/2
from mmflow import GaussianProblem

std = GaussianProblem(([0.0], [0.0]), ([[1.0]], [[1.0]]))
est = transport_cost(std, SimplexPath.linear_edge(0, 1, 1), std.coupling(), PathOptConfig(mc_samples=8192))
print(f"\nstandard normals: {est.value:.4f} +- {est.stderr:.4f}  (exact {2 - np.pi / 2:.4f})")
