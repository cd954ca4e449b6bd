"""
Heisenberg geodesics
====================

Integrate the Hamiltonian flow with RK4 and compare with the closed form.
A geodesic with vertical momentum 2 pi closes up after unit time and
lifts by the enclosed area, 1 / (4 pi).
"""
import math

import numpy as np

from subriemannian_walk import HeisenbergModel, PhaseState, flow, heisenberg_flow_exact

h = HeisenbergModel()
start = PhaseState([0.0, 0.0, 0.0], [1.0, 0.0, 2 * math.pi])

res = flow(h, start, 1.0, 1e-3, trace=True)
exact = heisenberg_flow_exact(start, 1.0)
print("RK4 end point   ", res.final.q)
print("closed form     ", exact.q)
print("expected height ", 1 / (4 * math.pi))
print("energy drift    ", res.energy_drift)

# sup-norm gap to the closed form along the whole trace
gap = max(np.max(np.abs(s.q - heisenberg_flow_exact(start, t).q)) for t, s in res.trace)
print("max gap on trace", gap)

# at the origin a purely vertical covector is invisible to the cometric: no motion
still = heisenberg_flow_exact(PhaseState([0.0, 0.0, 0.0], [0.0, 0.0, 5.0]), 10.0)
print("vertical momentum only ->", still.q)
