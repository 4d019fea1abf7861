"""
Transition matrices of time-varying systems
===========================================

The catalog holds four systems. Each has a closed-form transition matrix,
which we compare with the numerical integrator.
"""

import math

import numpy as np

from nucc import Propagator, barreira, custom, kalman_cc, lti_scalar
from nucc.systems import catalog_entries

for e in catalog_entries():
    print(f"{e.id:<15} {e.origin}")

# Kalman's example x' = -t x has Phi(t, s) = exp((s^2 - t^2) / 2)
num = Propagator(kalman_cc(), analytic=False)
print("\nPhi(2, 1) numeric:", num.transition(2.0, 1.0)[0, 0], " exact:", math.exp(-1.5))

# far from the initial time the numbers leave floating-point range; the
# log-norm is tracked separately and stays accurate
print("ln||Phi(1, 30)|| =", num.log_norm(1.0, 30.0), " exact:", (30 ** 2 - 1) / 2)

# the oscillating plant x' = (lam0 + a t sin t) x grows nonuniformly: the
# same window length costs more the later it starts
p = Propagator(barreira(-2.0, -1.0))
for s in (0.0, 10.0, 20.0, 30.0):
    worst = max(p.log_norm(s + d, s) for d in np.linspace(0.1, 3.0, 30))
    print(f"s={s:4.0f}  max ln||Phi(s+d, s)|| over d<=3: {worst:7.3f}")

# user systems are built from expressions in t
osc = custom(2, 1, [["0", "1"], ["-1", "-0.1*t"]], [["0"], ["1"]], (0.0, 20.0))
P = Propagator(osc)
print("\ncocycle error:", np.linalg.norm(P.transition(5, 3) @ P.transition(3, 1) - P.transition(5, 1)))

lti = Propagator(lti_scalar(-0.5, 1.0))
print("lti Phi(4, 0) =", lti.transition(4.0, 0.0)[0, 0], " exact:", math.exp(-2.0))
