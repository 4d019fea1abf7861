import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nucc import Propagator, barreira, lti_scalar, nucc_bounded_b, shifted
from nucc.errors import PreconditionError, UnsupportedProjectorError
from nucc.riccati import GainSchedule, RiccatiSolution, feedback_gain, solve_riccati
from nucc.stability import (check_corollary_spectrum, closed_loop_propagator, estimate_spectrum,
                            fit_stability, log_norm_table, lyapunov_check, theta_constants,
                            verify_theorem_T2)

R2 = (1 + math.sqrt(2)) / 2
GRID = np.arange(0.0, 20.01, 0.5)


def gamma_grid(lo, hi, step=0.05):
    return np.round(np.arange(lo, hi + step / 2, step), 10)


@pytest.fixture(scope="module")
def lti_loop():
    sysd = lti_scalar(0.0, 1.0)
    rs = solve_riccati(sysd, 1.0, (0.0, 20.0))
    gain = feedback_gain(rs, sysd)
    return sysd, rs, gain, closed_loop_propagator(sysd, gain)


@pytest.fixture(scope="module")
def t2_nucc(nucc_case):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        return verify_theorem_T2(nucc_case["system"], nucc_case["cert"], nucc_case["fit"])


# --- closed loop ------------------------------------------------------------

def test_zero_gain_is_plant():
    sysd = barreira(b=1.0)
    t = np.linspace(0.0, 10.0, 11)
    rs = RiccatiSolution(1.0, t, np.zeros((11, 1, 1)), [], 0.0, [], 1e-9)
    gain = GainSchedule(t, np.zeros((11, 1, 1)), rs, sysd)
    hat = closed_loop_propagator(sysd, gain)
    plant = Propagator(sysd, analytic=False)
    for a, b in [(3.0, 1.0), (7.5, 2.0), (0.0, 9.0)]:
        assert hat.transition(a, b)[0, 0] == pytest.approx(plant.transition(a, b)[0, 0], rel=1e-8)


def test_lti_closed_loop_oracle(lti_loop):
    *_, hat = lti_loop
    for t, s in [(1.0, 0.0), (7.0, 3.0), (2.0, 5.0)]:
        assert hat.transition(t, s)[0, 0] == pytest.approx(math.exp(-R2 * (t - s)), rel=1e-6)


def test_nucc_closed_loop_finite():
    sysd = nucc_bounded_b()
    gain = feedback_gain(solve_riccati(sysd, 2.0, (0.0, 10.0)), sysd)
    hat = closed_loop_propagator(sysd, gain)
    T = log_norm_table(hat, np.linspace(0.0, 10.0, 11))
    assert np.all(np.isfinite(T))


def test_gain_range_checked():
    sysd = lti_scalar(0.0, 1.0)
    gain = feedback_gain(solve_riccati(sysd, 1.0, (0.0, 5.0)), sysd)
    with pytest.raises(PreconditionError):
        closed_loop_propagator(lti_scalar(0.0, 1.0, t_min=1.0), gain)


def test_log_norm_table_paths():
    # analytic, scalar numeric and matrix numeric tables agree
    g = np.linspace(0.0, 6.0, 7)
    sysd = nucc_bounded_b(lam0=[-0.2, -0.3], a=[-0.1, -0.15], n=2)
    ana = log_norm_table(Propagator(sysd), g)
    num = log_norm_table(Propagator(sysd, analytic=False), g)
    np.testing.assert_allclose(num, ana, atol=1e-6)
    b = barreira()
    np.testing.assert_allclose(log_norm_table(Propagator(b, analytic=False), g),
                               log_norm_table(Propagator(b), g), atol=1e-6)


# --- stability fits ---------------------------------------------------------

def test_fit_lti_closed_loop(lti_loop):
    *_, hat = lti_loop
    c = fit_stability(hat, GRID)
    assert c.lam == pytest.approx(R2, rel=1e-4)
    assert c.epsilon <= 1e-6
    assert c.M == pytest.approx(1.0, abs=1e-4)
    assert c.accepted and c.max_violation <= 0


def test_fit_kalman_plant_grows_with_grid():
    from nucc import kalman_cc
    p = Propagator(kalman_cc())
    lams = []
    for hi in (3.0, 5.0):
        c = fit_stability(p, np.arange(1.0, hi + 0.01, 0.25))
        assert c.accepted and c.epsilon <= 1e-6
        assert c.horizon == (1.0, hi)
        lams.append(c.lam)
    assert 0 < lams[0] < lams[1]


def test_fit_expanding_unstable():
    c = fit_stability(Propagator(lti_scalar(1.0, 1.0)), GRID)
    assert c.verdict == "unstable" and not c.accepted
    assert c.lam == pytest.approx(-1.0, abs=1e-6)
    assert c.notes


def test_fit_grid_validation():
    with pytest.raises(PreconditionError):
        fit_stability(Propagator(lti_scalar()), [1.0])


@settings(max_examples=15, deadline=None)
@given(A=st.floats(-3, 1), w=st.floats(0, 0.8), hi=st.floats(5, 20), uniform=st.booleans())
def test_certificate_invariants(A, w, hi, uniform):
    # scalar A + w t sin t: envelope is valid, accepted certificates have eps < lam
    from nucc import custom
    sysd = custom(1, 1, [[f"{A!r} + {w!r}*t*sin(t)"]], [["1"]], (0.0, 25.0))
    c = fit_stability(Propagator(sysd), np.linspace(0.0, hi, 21), uniform=uniform)
    assert c.max_violation <= 0
    if c.accepted:
        assert 0 <= c.epsilon < c.lam
    if uniform:
        assert c.epsilon == 0


# --- closed-loop decay ------------------------------------------------------

@pytest.mark.parametrize("L", [1.0, 2.0, 5.0])
def test_T2_lti(lti_case, L):
    with pytest.warns(UserWarning, match="uniform limit"):
        rep = verify_theorem_T2(lti_case["system"], lti_case["cert"], lti_case["fit"], L=L)
    assert rep.theta1 == 0 and rep.theta2 == 0
    assert rep.passed
    rate = (L + math.sqrt(L * L + 1)) / 2
    assert rep.certificate.lam == pytest.approx(rate, rel=1e-4)
    assert rep.certificate.lam >= L
    assert rep.warnings


def test_T2_nucc(t2_nucc):
    rep = t2_nucc
    assert rep.passed
    assert rep.L == pytest.approx(2.5 * (rep.theta2 + 2 * rep.theta1) + 1)
    assert rep.certificate.lam >= 0.9 * (rep.L - rep.theta1)
    assert rep.certificate.epsilon <= 1.1 * (rep.theta1 + rep.theta2)
    assert not rep.warnings
    d = rep.to_dict()
    assert d["pass"] and d["certificate"]["claim"] == "consistent with on the horizon"


def test_T2_threshold(nucc_case):
    th1, th2 = theta_constants(nucc_case["cert"], nucc_case["fit"])
    with pytest.raises(PreconditionError) as info:
        verify_theorem_T2(nucc_case["system"], nucc_case["cert"], nucc_case["fit"],
                          L=th2 + 2 * th1)
    assert info.value.threshold == pytest.approx(2 * (th2 + 2 * th1))


def test_T2_needs_nucc(kalman_case):
    with pytest.raises(PreconditionError):
        verify_theorem_T2(kalman_case["system"], kalman_case["cert"], kalman_case["fit"], L=5.0)


def test_T2_implies_corollary(t2_nucc):
    out = check_corollary_spectrum(t2_nucc)
    assert out["pass"]
    assert out["stable_above_bound"]
    assert out["spectrum_top"] <= out["bound"] + 0.1


# --- Lyapunov function ------------------------------------------------------

def test_lyapunov_lti(lti_loop):
    sysd, rs, gain, _ = lti_loop
    out = lyapunov_check(rs, gain, sysd, slack=0.0)
    assert out["pass"]
    assert out["envelopes"]["hypothesis"] == "met"
    # H = S x^2 decays at exactly twice the closed-loop rate, which exceeds L
    assert out["trajectories"]["max_log_excess"] <= 0
    assert 2 * R2 >= rs.L


def test_lyapunov_zero_trajectory(lti_loop):
    sysd, rs, gain, _ = lti_loop
    out = lyapunov_check(rs, gain, sysd, trajectories=[[0.0]])
    assert out["trajectories"]["pass"]


@pytest.mark.parametrize("case", ["nucc_case", "nucc2_case"])
def test_lyapunov_nucc(case, request):
    sysd = request.getfixturevalue(case)["system"]
    rs = solve_riccati(sysd, 6.0, (0.0, 20.0))
    out = lyapunov_check(rs, feedback_gain(rs, sysd), sysd, n_traj=10, seed=3)
    assert out["pass"]
    assert out["riccati_inequality"]["max_relative_eig"] <= 1e-4


def test_lyapunov_hypothesis_unmet():
    # with a tiny L the fitted S envelopes break L > 2 (phi2 + 2 phi1); this is
    # reported as an unmet hypothesis while the decay of H itself still holds
    sysd = nucc_bounded_b(lam0=-0.3, a=-0.25)
    rs = solve_riccati(sysd, 0.05, (0.0, 40.0))
    out = lyapunov_check(rs, feedback_gain(rs, sysd), sysd, n_traj=2)
    assert out["envelopes"]["hypothesis"] == "hypothesis unmet"
    assert out["trajectories"]["pass"]


# --- spectrum ---------------------------------------------------------------

def test_spectrum_lti():
    est = estimate_spectrum(Propagator(lti_scalar(-1.0, 1.0)), gamma_grid(-2, 0), (0.0, 20.0))
    assert est.contains(-1.0)
    a, b = est.bracket_containing(-1.0)
    assert b - a <= 0.1 + 1e-12
    for a, b in est.intervals:
        assert b - a <= 0.1 + 1e-12
    # below the spectrum the shifted system A - gamma expands, above it contracts
    assert est.verdicts[0] == "dichotomy" and est.kinds[0] == "unstable"
    assert est.kinds[-1] == "stable"


def test_spectrum_barreira_bounded():
    p = Propagator(barreira())
    hz = (0.0, 20.0)
    est = estimate_spectrum(p, gamma_grid(-6, 3), hz)
    assert len(est.intervals) == 1
    lo, hi = est.intervals[0]
    assert lo > -6 and hi < 3
    tg = np.linspace(*hz, 201)
    ex = [p.log_norm(b, a) / (b - a) for a in tg for b in tg if b - a >= 2 * math.pi]
    assert min(ex) - 0.05 <= lo and hi <= max(ex) + 0.05


@pytest.mark.parametrize("base", [lti_scalar(-1.0, 1.0), barreira(), nucc_bounded_b()],
                         ids=["lti_scalar", "barreira", "nucc_bounded_b"])
@settings(max_examples=3, deadline=None)
@given(c=st.floats(-1, 1))
def test_spectrum_shift_equivariance(base, c):
    g = gamma_grid(-2.5, 0.5, 0.1)
    hz = (0.0, 10.0)
    e0 = estimate_spectrum(Propagator(base), g, hz, n_time=21)
    e1 = estimate_spectrum(Propagator(shifted(base, c)), g + c, hz, n_time=21)
    assert len(e0.intervals) == len(e1.intervals)
    for (a0, b0), (a1, b1) in zip(e0.intervals, e1.intervals):
        assert abs(a1 - c - a0) <= 0.1 + 1e-9 and abs(b1 - c - b0) <= 0.1 + 1e-9


def test_spectrum_uniform_mode_wider():
    p = Propagator(barreira())
    g = gamma_grid(-4, 1)
    nu = estimate_spectrum(p, g, (0.0, 20.0))
    un = estimate_spectrum(p, g, (0.0, 20.0), mode="uniform")
    assert un.intervals[0][0] <= nu.intervals[0][0] and un.intervals[0][1] >= nu.intervals[0][1]


def test_spectrum_matrix_needs_projector_flag(nucc2_case):
    with pytest.raises(UnsupportedProjectorError):
        estimate_spectrum(nucc2_case["prop"], gamma_grid(-1, 0), (0.0, 10.0))
    est = estimate_spectrum(nucc2_case["prop"], gamma_grid(-1, 0), (0.0, 10.0),
                            full_projector=True)
    assert len(est.kinds) == 21


def test_spectrum_threads_and_csv(tmp_path):
    p = Propagator(barreira())
    g = gamma_grid(-2, 0, 0.1)
    a = estimate_spectrum(p, g, (0.0, 10.0), n_time=21)
    b = estimate_spectrum(p, g, (0.0, 10.0), n_time=21, threads=4)
    assert a.to_dict() == b.to_dict()
    a.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "gamma,verdict,kind,stable_rate,unstable_rate" and len(lines) == 22
    with pytest.raises(ValueError):
        estimate_spectrum(p, g, (0.0, 10.0), mode="sideways")
