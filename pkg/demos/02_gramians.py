"""
Gramians and minimum-energy steering
====================================

The controllability gramian W(a, b) decides whether every state can be
steered to zero on [a, b], and its inverse prices the cheapest input.
"""

import math

import numpy as np

from nucc import Propagator, kalman_cc, nucc_bounded_b
from nucc.gramians import (check_gramian_identity, energy_report, gramian_K, gramian_W,
                           min_energy_input, simulate)

p = Propagator(kalman_cc())

# closed form for Kalman's example
for t, sigma in [(1, 0.5), (2, 1.0), (3, 2.0)]:
    W = gramian_W(p, t, t + sigma).matrix[0, 0]
    ref = math.exp(2 * (sigma - 1) * t + (sigma - 1) ** 2) - math.exp(-2 * t + 1)
    print(f"W({t}, {t + sigma}) = {W:.10g}  closed form {ref:.10g}")

# W and K are linked through the transition matrix
print("identity residual on [1, 2]:", check_gramian_identity(p, 1.0, 2.0))
print("K(1, 2) =", gramian_K(p, 1.0, 2.0).matrix[0, 0])

# steer x0 = 1 to zero on [1, 2] with the least input energy
u = min_energy_input(p, 1.0, 2.0, [1.0])
t, x = simulate(p, u, [1.0], 1.0, 2.0)
rep = energy_report(u, gramian_W(p, 1.0, 2.0), [1.0])
print(f"\nx(2) = {x[-1, 0]:.2e}, energy {rep.energy_sq:.6f} = 1/(1 - e^-1) = {1 / (1 - math.exp(-1)):.6f}")
print("eigenvalue bounds on the energy hold:", rep.within_bounds)

# a two-state system with a diagonal nonuniform plant
q = Propagator(nucc_bounded_b(lam0=[-0.2, -0.3], a=[-0.1, -0.15], n=2))
x0 = np.array([1.0, -2.0])
W = gramian_W(q, 2.0, 3.5)
u = min_energy_input(q, 2.0, 3.5, x0, W=W)
_, x = simulate(q, u, x0, 2.0, 3.5)
print("\n2-state: |x(tf)| =", np.linalg.norm(x[-1]), " energy =", energy_report(u, W, x0).energy_sq)
