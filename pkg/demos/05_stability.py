"""
Closed-loop decay and dichotomy spectra
=======================================

With the Riccati gain the closed loop A - B F decays at a rate close to
L, up to a nonuniformity e^{eps t0}. The decay is fitted as an envelope,
cross-checked with the Lyapunov function H = <S x, x>, and located in the
dichotomy spectrum.
"""

import numpy as np

from nucc import Propagator, barreira, lti_scalar, nucc_bounded_b
from nucc.classify import certify_controllability, check_nonuniform_kalman, fit_bounded_growth
from nucc.stability import (check_corollary_spectrum, estimate_spectrum, lyapunov_check,
                            verify_theorem_T2)

sysd = nucc_bounded_b()
grid = np.arange(0.0, 40.01, 0.5)
prop = Propagator(sysd)
fit = fit_bounded_growth(prop, grid, grid)
cert = certify_controllability(prop, grid, [0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
                               nk=check_nonuniform_kalman(prop, grid, grid))

# L defaults to 2.5 (theta2 + 2 theta1) + 1, above the required threshold
rep = verify_theorem_T2(sysd, cert, fit)
c = rep.certificate
print(f"theta1={rep.theta1:.3f} theta2={rep.theta2:.3f} L={rep.L:.3f}")
print(f"fitted ||Phi(t,t0)|| <= {c.M:.3f} e^({c.epsilon:.4f} t0) e^(-{c.lam:.3f} (t-t0)) "
      f"on {c.horizon}")
print(f"needs lam >= {rep.required_lambda:.3f}, eps <= {rep.allowed_epsilon:.3f}: "
      f"{'PASS' if rep.passed else 'FAIL'}")

ly = lyapunov_check(rep.riccati, rep.gain, sysd, n_traj=10, seed=42)
print("Lyapunov check:", ly["envelopes"]["hypothesis"], "| decay along trajectories:",
      ly["trajectories"]["pass"])

# the closed-loop spectrum sits below -L + theta2 + 2 theta1
cor = check_corollary_spectrum(rep)
print(f"closed-loop spectrum top {cor['spectrum_top']:.3f} vs bound {cor['bound']:.3f}")

# spectra of plants: a point for constant systems, an interval for oscillating ones
g = np.round(np.arange(-2.0, 0.001, 0.05), 10)
print("\nlti A=-1 brackets:", estimate_spectrum(Propagator(lti_scalar(-1.0)), g, (0, 20)).brackets)
g = np.round(np.arange(-4.0, 1.001, 0.05), 10)
for mode in ("nonuniform", "uniform"):
    est = estimate_spectrum(Propagator(barreira()), g, (0, 20), mode=mode)
    print(f"barreira {mode:>10}: intervals {est.intervals}")
