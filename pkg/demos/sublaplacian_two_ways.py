"""
The sub-Laplacian two ways
==========================

Evaluate the Heisenberg sub-Laplacian of a few test functions with the
local second-order formula and with the Monte Carlo average of second
derivatives along geodesics leaving the point in random unit horizontal
directions. The two should agree within a few standard errors.
"""
import numpy as np

from subriemannian_walk import ExpressionField, HeisenbergModel, builtin_field
from subriemannian_walk import sublaplacian_local, sublaplacian_sphere_avg

rng = np.random.default_rng(0)
h = HeisenbergModel(lam=1.0)
q = np.array([0.3, -1.2, 0.7])

fields = [builtin_field("x_sq", 3), builtin_field("z", 3), builtin_field("norm_sq", 3),
          ExpressionField("sin(x1)*x3 + exp(-x2^2)", 3)]

print(f"{'f':<28} {'local':>10} {'sphere avg':>12} {'stderr':>9}")
for f in fields:
    local = float(sublaplacian_local(h, f, q))
    mc = sublaplacian_sphere_avg(h, f, q, 200_000, rng)
    print(f"{f.name:<28} {local:10.5f} {mc.value:12.5f} {mc.stderr:9.5f}")

# the vertical metric scale does not enter: compare lambda = 1 and lambda = 7
f = fields[-1]
print("lambda 1 vs 7:", float(sublaplacian_local(h, f, q)), float(sublaplacian_local(HeisenbergModel(7.0), f, q)))
