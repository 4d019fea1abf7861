import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nucc import Propagator, barreira, custom, lti_scalar, nucc_bounded_b
from nucc.errors import ConvergenceError, PreconditionError, StiffnessError
from nucc.gramians import gramian_W
from nucc.riccati import (_backward, check_shifted_band, feedback_gain, gamma_bounds,
                          riccati_rhs, s_sandwich, shifted_gramian, solve_riccati, y_integral)


def lti_S(A, B, L):
    # constant root of 2 (A + L) S - B^2 S^2 + 1 = 0
    x = A + L
    return (x + math.sqrt(x * x + B * B)) / (B * B)


# --- oracles ----------------------------------------------------------------

@pytest.mark.parametrize("L", [1.0, 2.0, 5.0])
def test_lti_oracle(L):
    rs = solve_riccati(lti_scalar(0.0, 1.0), L, (0.0, 5.0))
    np.testing.assert_allclose(rs.S[:, 0, 0], L + math.sqrt(L * L + 1), rtol=1e-6)
    assert rs.convergence_gap <= rs.tol
    assert rs.residual(lti_scalar(0.0, 1.0)) <= 1e-6


@settings(max_examples=10, deadline=None)
@given(A=st.floats(-1, 1), B=st.floats(0.5, 2), L=st.floats(0.5, 3))
def test_lti_general_oracle(A, B, L):
    rs = solve_riccati(lti_scalar(A, B), L, (0.0, 2.0))
    np.testing.assert_allclose(rs.S[:, 0, 0], lti_S(A, B, L), rtol=1e-6)


def test_gain_oracle():
    sysd = lti_scalar(0.0, 1.0)
    g = feedback_gain(solve_riccati(sysd, 1.0, (0.0, 3.0)), sysd)
    np.testing.assert_allclose(g.F[:, 0, 0], (1 + math.sqrt(2)) / 2, rtol=1e-6)
    assert g.F_at(1.234)[0, 0] == pytest.approx((1 + math.sqrt(2)) / 2, rel=1e-6)


def test_gain_is_half_BtS(nucc2_case):
    sysd = nucc2_case["system"]
    rs = solve_riccati(sysd, 3.0, (0.0, 4.0))
    g = feedback_gain(rs, sysd)
    for k in (0, 100, len(rs.t_grid) - 1):
        t = rs.t_grid[k]
        np.testing.assert_array_equal(g.F[k], 0.5 * sysd.b_fun(t).T @ rs.S[k])


def test_zero_input_zero_gain():
    # B = 0 leaves S' + 2 (A + L) S = -1, whose limit is -1 / (2 (A + L)) when A + L < 0
    sysd = custom(1, 1, [["-3"]], [["0"]], (0.0, 100.0))
    rs = solve_riccati(sysd, 1.0, (0.0, 3.0))
    np.testing.assert_allclose(rs.S[:, 0, 0], 0.25, rtol=1e-8)
    assert np.all(feedback_gain(rs, sysd).F == 0)


def test_residual_nucc():
    sysd = nucc_bounded_b()
    rs = solve_riccati(sysd, 7.5, (0.0, 20.0))
    assert rs.residual(sysd) <= 1e-4
    lo, _ = rs.eig_extremes()
    assert np.all(lo > 0)


def test_rhs_symmetric(nucc2_case):
    sysd = nucc2_case["system"]
    S = np.array([[2.0, 0.3], [0.1, 1.0]])
    R = riccati_rhs(sysd, 1.0, 2.0, S)
    np.testing.assert_array_equal(R, R.T)


def test_monotone_in_t1():
    # the terminal-zero solution grows with the terminal time
    sysd = nucc_bounded_b(lam0=[-0.2, -0.3], a=[-0.1, -0.15], n=2)
    grid = np.linspace(0.0, 5.0, 51)
    prev = None
    for t1 in (6.0, 7.0, 9.0, 12.0):
        S, _ = _backward(sysd, 2.0, t1, grid, 1e-11, 1e-12, 1e12)
        if prev is not None:
            assert np.linalg.eigvalsh(S - prev)[:, 0].min() >= -1e-8
        prev = S


# --- failures ---------------------------------------------------------------

def test_nonpositive_L():
    with pytest.raises(PreconditionError):
        solve_riccati(lti_scalar(), 0.0, (0.0, 1.0))


def test_convergence_error_short_domain():
    with pytest.raises(ConvergenceError):
        solve_riccati(lti_scalar(0.0, 1.0, t_max=3.0), 1.0, (0.0, 2.0))


def test_stiffness_error():
    sysd = custom(1, 1, [["20"]], [["0"]], (0.0, 100.0))
    with pytest.raises(StiffnessError):
        solve_riccati(sysd, 1.0, (0.0, 5.0))


def test_csv_export(tmp_path, nucc2_case):
    sysd = nucc2_case["system"]
    rs = solve_riccati(sysd, 2.0, (0.0, 1.0), dt=0.1)
    rs.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,S11,S12,S21,S22" and len(lines) == 12
    feedback_gain(rs, sysd).to_csv(tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "t,F11,F12,F21,F22"
    d = rs.to_dict()
    assert d["n_grid"] == 11 and d["eig_min_S"] > 0


# --- shifted integrals ------------------------------------------------------

def test_shifted_gramian_limit():
    p = Propagator(nucc_bounded_b())
    W0 = gramian_W(p, 2.0, 3.0).matrix
    W = shifted_gramian(p, 1e-8, 2.0, 1.0).matrix
    np.testing.assert_allclose(W, W0, rtol=1e-7)


@pytest.mark.parametrize("ell", [0.5, 1.0, 3.0])
def test_shifted_gramian_lti(ell):
    p = Propagator(lti_scalar(0.0, 1.0))
    for sigma in (0.5, 2.0):
        G = shifted_gramian(p, ell, 1.0, sigma)
        assert G.matrix[0, 0] == pytest.approx(-math.expm1(-2 * ell * sigma) / (2 * ell),
                                               rel=1e-9)


def test_shifted_band_nucc(nucc_case):
    rep = check_shifted_band(nucc_case["prop"], nucc_case["cert"], 1.0)
    assert rep["pass"] and rep["checked"] > 0


def test_y_integral_oracles():
    p = Propagator(lti_scalar(0.0, 1.0))
    for sigma in (0.5, 1.0, 3.0):
        Y0, band = y_integral(p, 0.0, 2.0, sigma)
        assert band is None
        assert Y0.matrix[0, 0] == pytest.approx(sigma, rel=1e-10)
        Y1, _ = y_integral(p, 1.0, 2.0, sigma)
        assert Y1.matrix[0, 0] == pytest.approx(math.expm1(2 * sigma) / 2, rel=1e-9)
    with pytest.raises(PreconditionError):
        y_integral(p, -1.0, 0.0, 1.0)


def test_y_band_barreira_plant(nucc_case):
    p = Propagator(barreira(-0.2, -0.1))
    fit = nucc_case["fit"]
    for t in (0.0, 3.0, 10.0, 25.0):
        for sigma in (0.5, 2.0, 8.0):
            _, band = y_integral(p, 0.5, t, sigma, fit=fit)
            assert band["pass"], (t, sigma, band)


def test_gamma_bounds_limits():
    class Fit:
        a, eta, K0 = 0.0, 0.0, 2.0
    g1, g2 = gamma_bounds(Fit, 0.0, 3.0)
    assert g1 == pytest.approx(3.0 / 4) and g2 == pytest.approx(12.0)
    g1, g2 = gamma_bounds(Fit, 1e-9, 3.0)
    assert g1 == pytest.approx(3.0 / 4, rel=1e-6) and g2 == pytest.approx(12.0, rel=1e-6)


# --- sandwich ---------------------------------------------------------------

@pytest.mark.parametrize("case", ["lti_case", "nucc_case", "nucc2_case"])
def test_sandwich(case, request):
    c = request.getfixturevalue(case)
    L = 4.0
    rs = solve_riccati(c["system"], L, (0.0, 3.0))
    for t in (0.0, 1.0, 2.0):
        out = s_sandwich(c["prop"], c["cert"], L, t, rs=rs, fit=c["fit"])
        assert out["lower_ok"] and out["upper_ok"], out
        assert out["theta_lower_ok"] and out["theta_upper_ok"]


def test_sandwich_all_certificate_points(nucc_case):
    cert, prop = nucc_case["cert"], nucc_case["prop"]
    L = 7.5
    rs = solve_riccati(prop.system, L, (0.0, 20.0))
    for t in cert.t_grid[cert.t_grid <= 20.0]:
        assert s_sandwich(prop, cert, L, t, rs=rs, fit=nucc_case["fit"])["pass"], t


def test_sandwich_lti_constant(lti_case):
    L = 2.0
    out = s_sandwich(lti_case["prop"], lti_case["cert"], L, 5.0)
    assert out["S"][0][0] == pytest.approx(L + math.sqrt(L * L + 1), rel=1e-6)
    assert out["pass"]


def test_half_shift_upper_bound_fails(lti_case):
    # E built from the L/2-shifted integrals sits below S = L + sqrt(L^2 + 1) for short windows
    L = 4.0
    half = s_sandwich(lti_case["prop"], lti_case["cert"], L, 1.0, sigma=0.25, shift="half")
    full = s_sandwich(lti_case["prop"], lti_case["cert"], L, 1.0, sigma=0.25)
    assert half["lower_ok"] and not half["upper_ok"]
    assert full["pass"] and full["ell"] == L
    with pytest.raises(ValueError):
        s_sandwich(lti_case["prop"], lti_case["cert"], L, 1.0, shift="double")


def test_sandwich_zero_input(lti_case):
    sysd = custom(1, 1, [["0"]], [["0"]], (0.0, 100.0))
    with pytest.raises(PreconditionError):
        s_sandwich(Propagator(sysd), lti_case["cert"], 1.0, 1.0)
