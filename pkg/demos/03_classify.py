"""
Uniform, nonuniform, or neither
===============================

Gramian eigenvalues are sampled over initial times t and windows sigma.
Their envelopes decide between uniform complete controllability (UCC),
the nonuniform version (NUCC), and plain controllability (CC_only).
"""

import numpy as np

from nucc import Propagator, kalman_cc, lti_scalar, nucc_bounded_b
from nucc.classify import (certify_controllability, check_nonuniform_kalman, fit_bounded_growth,
                           trifecta_check)

sigmas = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
cases = [("lti_scalar", lti_scalar(0.0, 1.0), np.arange(0.0, 40.01, 0.5)),
         ("nucc_bounded_b", nucc_bounded_b(), np.arange(0.0, 40.01, 0.5)),
         ("kalman_cc", kalman_cc(), np.arange(1.0, 11.01, 0.25))]

for name, sysd, grid in cases:
    prop = Propagator(sysd)
    fit = fit_bounded_growth(prop, grid, grid)
    nk = check_nonuniform_kalman(prop, grid, grid)
    cert = certify_controllability(prop, grid, sigmas, nk=nk)
    print(f"\n{name}: {cert.verdict}")
    print(f"  growth  K0={fit.K0:.3f} a={fit.a:.3f} eta={fit.eta:.3f}")
    print(f"  exponents mu0={cert.mu0:.3f} mu1={cert.mu1:.3f}")
    if cert.verdict == "CC_only":
        # the witnesses explain why no uniform or nonuniform bound exists
        w = nk.witness["contradiction"]
        print("  contradiction margins:", [round(float(r["margin"]), 3) for r in w["rows"]])
        for d in cert.witnesses["ucc_divergence"]:
            print(f"  {d['quantity']} keeps growing:", [round(v, 1) for v in d["sequence"]])
    else:
        tri = trifecta_check(cert, nk, prop)
        print("  any two fitted properties imply the third:", tri["consistent"])
