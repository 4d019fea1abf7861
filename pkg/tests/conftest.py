import numpy as np
import pytest

from nucc import Propagator, kalman_cc, lti_scalar, nucc_bounded_b
from nucc.classify import certify_controllability, check_nonuniform_kalman, fit_bounded_growth

SIGMAS = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
T_GRID = np.arange(0.0, 40.01, 0.5)
KALMAN_GRID = np.arange(1.0, 11.01, 0.25)


def _classified(sysd, grid):
    prop = Propagator(sysd)
    fit = fit_bounded_growth(prop, grid, grid)
    nk = check_nonuniform_kalman(prop, grid, grid)
    cert = certify_controllability(prop, grid, SIGMAS, nk=nk)
    return {"system": sysd, "prop": prop, "fit": fit, "nk": nk, "cert": cert}


@pytest.fixture(scope="session")
def lti_case():
    return _classified(lti_scalar(0.0, 1.0), T_GRID)


@pytest.fixture(scope="session")
def nucc_case():
    return _classified(nucc_bounded_b(), T_GRID)


@pytest.fixture(scope="session")
def nucc2_case():
    return _classified(nucc_bounded_b(lam0=[-0.2, -0.3], a=[-0.1, -0.15], n=2), T_GRID)


@pytest.fixture(scope="session")
def kalman_case():
    return _classified(kalman_cc(), KALMAN_GRID)
