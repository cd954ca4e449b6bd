"""
Scaled walks approach the diffusion
===================================

Run the geodesic random walk on the Heisenberg group for decreasing step
scales and compare E[x^2] at diffusion time 1 with an Euler-Maruyama
simulation of horizontal Brownian motion.

Each leg starts with zero vertical momentum, which the flow conserves, so
the (x, y) shadow of a leg is a straight segment. That makes E[x^2] the
same as for a planar random flight: eps^2 (T - 1 + exp(-T)) with
T = t / eps^2, a bias of about eps^2 below t.

Takes a few seconds per row at the default path count.
"""
import math
import sys

from subriemannian_walk import HeisenbergModel, builtin_field, convergence_sweep, heisenberg_sde_oracle

n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
t = 1.0

oracle = heisenberg_sde_oracle(t=t, n_paths=n_paths, dt=1e-2, seed=1)
ref, ref_se = oracle.value("E[x^2]"), oracle.stderr("E[x^2]")
print(f"SDE reference E[x^2] = {ref:.4f} +- {ref_se:.4f}   (Var z = {oracle.value('Var[z]'):.4f}, exact 0.25)")

table = convergence_sweep(HeisenbergModel(), builtin_field("x_sq", 3), [0.0, 0.0, 0.0], t,
                          [0.4, 0.2, 0.1], n_paths, seed=2, reference=ref, reference_stderr=ref_se)
for row, dev in zip(table.rows, table.deviations()):
    T = t / row.epsilon**2
    bias = 1 - row.epsilon**2 * (T - 1 + math.exp(-T))
    print(f"eps {row.epsilon:<5} E[x^2] {row.estimate:.4f} +- {row.stderr:.4f}   "
          f"|dev| {dev:.4f}   predicted bias {bias:.4f}")
