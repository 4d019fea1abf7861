"""
Shifted Riccati equation and feedback gain
==========================================

S' + (A + L I)^T S + S (A + L I) - S B B^T S = -I is integrated backward
from S(t1) = 0, pushing t1 out until S stops changing. The gain
F = B^T S / 2 is the feedback that stabilizes the system.
"""

import math

import numpy as np

from nucc import Propagator, lti_scalar, nucc_bounded_b
from nucc.classify import certify_controllability, check_nonuniform_kalman, fit_bounded_growth
from nucc.riccati import feedback_gain, s_sandwich, solve_riccati

# constant system: S is the positive root of 2 L S - S^2 + 1 = 0
for L in (1.0, 2.0, 5.0):
    rs = solve_riccati(lti_scalar(0.0, 1.0), L, (0.0, 5.0))
    print(f"L={L}: S={rs.S[0, 0, 0]:.10f}  L+sqrt(L^2+1)={L + math.sqrt(L * L + 1):.10f}"
          f"  terminal times tried: {len(rs.t1_sequence)}")

# time-varying system
sysd = nucc_bounded_b()
rs = solve_riccati(sysd, 7.5, (0.0, 20.0))
gain = feedback_gain(rs, sysd)
lo, hi = rs.eig_extremes()
print(f"\nnucc_bounded_b, L=7.5: residual {rs.residual(sysd):.1e}, "
      f"S in [{lo.min():.3f}, {hi.max():.3f}], F(0)={gain.F[0, 0, 0]:.3f}")

# S is squeezed between two matrices built from shifted gramians
grid = np.arange(0.0, 40.01, 0.5)
prop = Propagator(sysd)
fit = fit_bounded_growth(prop, grid, grid)
cert = certify_controllability(prop, grid, [0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
                               nk=check_nonuniform_kalman(prop, grid, grid))
for t in (0.0, 5.0, 10.0):
    out = s_sandwich(prop, cert, 7.5, t, rs=rs, fit=fit)
    print(f"t={t:4.1f}  1/D={1 / out['D'][0][0]:.3f} <= S={out['S'][0][0]:.3f} <= E={out['E'][0][0]:.3f}"
          f"  holds: {out['pass']}")
