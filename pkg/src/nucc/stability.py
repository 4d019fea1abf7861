"""Closed-loop stability certificates, Lyapunov checks and dichotomy spectra.

All certificates are finite-horizon: an envelope that dominates the
samples on ``[t_a, t_b]`` is *consistent with* the asymptotic statement,
it does not prove it. Each certificate records its horizon.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import linprog

from .classify import GrowthFit, NUCCCertificate, envelope_lp
from .errors import PreconditionError, UnsupportedProjectorError
from .riccati import GainSchedule, RiccatiSolution, feedback_gain, solve_riccati
from .systems import Propagator, SystemDef

__all__ = [
    "StabilityCertificate", "SpectrumEstimate", "T2Report", "closed_loop_propagator",
    "log_norm_table", "fit_stability", "theta_constants", "verify_theorem_T2",
    "check_corollary_spectrum", "lyapunov_check", "estimate_spectrum",
]

RATE_MARGIN = 1e-6


def closed_loop_propagator(sys: SystemDef, gain: GainSchedule, **kwargs) -> Propagator:
    """Propagator of ``A_hat(t) = A(t) - B(t) F(t)`` on the gain's time range.

    Off-grid gains come from the dense Riccati solution. Keyword arguments
    are passed to :class:`Propagator`.
    """
    lo, hi = float(gain.t_grid[0]), float(gain.t_grid[-1])
    dlo, dhi = sys.domain
    if lo < dlo - 1e-12 or hi > dhi + 1e-12:
        raise PreconditionError(f"gain range [{lo}, {hi}] outside system domain {sys.domain}")

    def a_hat(t):
        return sys.a_fun(t) - sys.b_fun(t) @ gain.F_at(t)

    hat = SystemDef(sys.state_dim, sys.input_dim, None, None, (lo, hi), catalog=None,
                    params={"closed_loop_of": sys.catalog, "L": gain.source.L},
                    a_fun=a_hat, b_fun=sys.b_fun)
    return Propagator(hat, **kwargs)


def log_norm_table(prop: Propagator, grid) -> np.ndarray:
    """``T[i, j] = ln ||Phi(grid[j], grid[i])||`` for all grid pairs.

    Scalar systems use cumulative log-increments (exact in both directions).
    Matrix systems without a closed form chain one-step transition matrices
    with renormalization.
    """
    g = np.asarray(grid, dtype=float)
    m = len(g)
    sysd = prop.system
    if prop.use_analytic and sysd.log_phi is not None:
        T = np.zeros((m, m))
        for i in range(m):
            for j in range(m):
                if i != j:
                    T[i, j] = prop.log_norm(g[j], g[i])
        return T
    if prop.n == 1:
        inc = np.array([prop.log_norm(g[k + 1], g[k]) for k in range(m - 1)])
        G = np.concatenate([[0.0], np.cumsum(inc)])
        return G[None, :] - G[:, None]
    fwd = [prop.transition(g[k + 1], g[k]) for k in range(m - 1)]
    bwd = [prop.transition(g[k], g[k + 1]) for k in range(m - 1)]
    T = np.zeros((m, m))
    for i in range(m):
        X, acc = np.eye(prop.n), 0.0
        for j in range(i + 1, m):
            X = fwd[j - 1] @ X
            c = np.linalg.norm(X, 2)
            acc += math.log(c)
            X /= c
            T[i, j] = acc
        X, acc = np.eye(prop.n), 0.0
        for j in range(i - 1, -1, -1):
            X = bwd[j] @ X
            c = np.linalg.norm(X, 2)
            acc += math.log(c)
            X /= c
            T[i, j] = acc
    return T


# ---------------------------------------------------------------------------
# envelope fits

def _lp(cost, A_ub, b_ub, bounds):
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    return res.x if res.status == 0 else None


def _staged_fit(t0, d, y, uniform: bool = False, band: float = 0.05):
    """Fit ``y <= c + eps * t0 - lam * d`` in stages.

    Stage 1 finds the tightest envelope (least total height ``H*``).
    Among envelopes with total height at most ``(1 + band) H*`` the later
    stages minimize ``eps``, then maximize ``lam``, then minimize ``c``.
    Returns ``(c, eps, lam)`` with ``c`` shifted so every sample is dominated.
    """
    t0, d, y = (np.asarray(v, dtype=float) for v in (t0, d, y))
    X = np.column_stack([np.ones_like(t0), t0, -d])
    bounds = [(0, None), (0, 0) if uniform else (0, None), (None, None)]
    x = envelope_lp(X, y, bounds)
    colsum = X.sum(axis=0)
    excess = float(colsum @ x - y.sum())
    cap = y.sum() + excess * (1 + band) + 1e-9 * max(1.0, abs(y).sum())
    A_ub, b_ub = np.vstack([-X, colsum]), np.concatenate([-y, [cap]])
    for cost, fix in (([0, 1, 0], 1), ([0, 0, -1], 2), ([1, 0, 0], None)):
        nxt = _lp(np.array(cost, dtype=float), A_ub, b_ub, bounds)
        if nxt is None:
            break
        x = nxt
        if fix is not None:
            row = np.zeros(3)
            v = x[fix]
            tol = 1e-9 * max(1.0, abs(v))
            if fix == 1:
                row[1] = 1.0
                lim = v + tol
            else:
                row[2] = -1.0
                lim = -(v - tol)
            A_ub, b_ub = np.vstack([A_ub, row]), np.concatenate([b_ub, [lim]])
    c, eps, lam = (float(v) for v in x)
    worst = float(np.max(y - (c + eps * t0 - lam * d)))
    if worst > 0:
        c += worst * (1 + 1e-12)
    return max(c, 0.0), max(eps, 0.0), lam


@dataclass
class StabilityCertificate:
    """``ln ||Phi(t, t0)|| <= ln M + eps t0 - lam (t - t0)`` on ``fit_grid``.

    ``verdict`` is ``"stable"`` when ``lam > 0`` and ``eps < lam``, else
    ``"unstable"``. ``max_violation`` is the largest residual over the grid
    (``<= 0`` by construction).
    """

    M: float
    lam: float
    epsilon: float
    fit_grid: np.ndarray
    max_violation: float
    verdict: str
    horizon: tuple
    uniform: bool = False
    notes: list = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.verdict == "stable"

    def bound(self, t, t0) -> float:
        return self.M * math.exp(self.epsilon * t0 - self.lam * (t - t0))

    def to_dict(self) -> dict:
        return {"M": self.M, "lambda": self.lam, "epsilon": self.epsilon,
                "max_violation": self.max_violation, "verdict": self.verdict,
                "horizon": list(self.horizon), "uniform": self.uniform,
                "n_pairs": int(len(self.fit_grid)), "notes": list(self.notes),
                "claim": "consistent with on the horizon"}


def _pair_data(T, grid, forward=True):
    g = np.asarray(grid, dtype=float)
    I, J = np.nonzero(np.ones_like(T, dtype=bool))
    keep = (J >= I) if forward else (J <= I)
    I, J = I[keep], J[keep]
    # forward: t0 = g[I] (initial), t = g[J]; backward: initial s = g[I], t = g[J] <= s
    t0, t = g[I], g[J]
    d = (t - t0) if forward else (t0 - t)
    return t0, t, d, T[I, J]


def fit_stability(prop_hat: Propagator, grid, uniform: bool = False, band: float = 0.05,
                  table: Optional[np.ndarray] = None) -> StabilityCertificate:
    """Fit a nonuniform exponential stability envelope on ``grid``.

    ``grid`` is a 1-D array of times; all pairs ``t >= t0`` are used. The
    fit is the staged linear program of :func:`_staged_fit`; ``uniform``
    forces ``eps = 0``. A fit with ``lam <= 0`` or ``eps >= lam`` yields
    the ``"unstable"`` verdict rather than an error.
    """
    g = np.unique(np.asarray(grid, dtype=float))
    if g.size < 2 or g[0] < 0:
        raise PreconditionError("stability grid needs at least two nonnegative times")
    T = log_norm_table(prop_hat, g) if table is None else table
    t0, t, d, y = _pair_data(T, g, forward=True)
    c, eps, lam = _staged_fit(t0, d, y, uniform, band)
    viol = float(np.max(y - (c + eps * t0 - lam * d)))
    notes = []
    if lam <= RATE_MARGIN:
        verdict = "unstable"
        notes.append("no envelope with positive decay rate on this grid")
    elif eps >= lam:
        verdict = "unstable"
        notes.append("nonuniformity eps not below decay rate")
    else:
        verdict = "stable"
    return StabilityCertificate(math.exp(c), lam, eps, np.column_stack([t0, t]), viol,
                                verdict, (float(g[0]), float(g[-1])), uniform, notes)


# ---------------------------------------------------------------------------
# Theorem-level pipeline

def theta_constants(cert: NUCCCertificate, fit: GrowthFit) -> tuple[float, float]:
    """``theta1 = mu1 + 4 eta`` and ``theta2 = eta + 2 (mu1 + mu0)``."""
    return cert.mu1 + 4 * fit.eta, fit.eta + 2 * (cert.mu1 + cert.mu0)


@dataclass
class T2Report:
    """Outcome of the closed-loop decay check for a shifted Riccati feedback."""

    L: float
    theta1: float
    theta2: float
    threshold: float
    horizon: tuple
    certificate: StabilityCertificate
    required_lambda: float
    allowed_epsilon: float
    passed: bool
    warnings: list
    riccati: RiccatiSolution = field(repr=False)
    gain: GainSchedule = field(repr=False)
    closed_loop: Propagator = field(repr=False)

    def to_dict(self) -> dict:
        return {"L": self.L, "theta1": self.theta1, "theta2": self.theta2,
                "threshold": self.threshold, "horizon": list(self.horizon),
                "certificate": self.certificate.to_dict(),
                "required_lambda": self.required_lambda,
                "allowed_epsilon": self.allowed_epsilon, "pass": self.passed,
                "warnings": list(self.warnings), "riccati": self.riccati.to_dict()}


def verify_theorem_T2(sys: SystemDef, cert: NUCCCertificate, fit: GrowthFit,
                      L: Optional[float] = None, horizon=(0.0, 20.0), slack: float = 0.1,
                      grid_step: float = 0.5, riccati_tol: float = 1e-9) -> T2Report:
    """Shifted-Riccati feedback and the closed-loop decay check.

    Requires ``L > 2 (theta2 + 2 theta1)``; ``L=None`` picks
    ``2.5 (theta2 + 2 theta1) + 1``. PASS iff the fitted certificate has
    ``lam >= (L - theta1)(1 - slack)`` and ``eps <= (theta1 + theta2)(1 + slack)``.

    Raises
    ------
    PreconditionError
        If the certificate is not NUCC/UCC or ``L`` is at or below the
        threshold (the exception carries the threshold).
    """
    if cert.verdict not in ("NUCC", "UCC"):
        raise PreconditionError(f"system is {cert.verdict}, not NUCC")
    th1, th2 = theta_constants(cert, fit)
    thr = 2 * (th2 + 2 * th1)
    if L is None:
        L = 2.5 * (th2 + 2 * th1) + 1.0
    L = float(L)
    if not L > thr:
        raise PreconditionError(f"L={L:.6g} must exceed 2(theta2 + 2 theta1) = {thr:.6g}",
                                threshold=thr)
    notes = []
    if cert.mu0 == 0 or cert.mu1 == 0:
        msg = "mu0 or mu1 is zero: uniform limit, beyond the strict positivity hypothesis"
        notes.append(msg)
        warnings.warn(msg, stacklevel=2)
    ta, tb = (float(v) for v in horizon)
    rs = solve_riccati(sys, L, (ta, tb), tol=riccati_tol)
    gain = feedback_gain(rs, sys)
    hat = closed_loop_propagator(sys, gain)
    grid = np.arange(ta, tb + grid_step / 2, grid_step)
    sc = fit_stability(hat, grid)
    need_lam = (L - th1) * (1 - slack)
    allow_eps = (th1 + th2) * (1 + slack)
    ok = sc.accepted and sc.lam >= need_lam and sc.epsilon <= allow_eps
    return T2Report(L, th1, th2, thr, (ta, tb), sc, need_lam, allow_eps, bool(ok), notes,
                    rs, gain, hat)


def check_corollary_spectrum(report: T2Report, step: float = 0.05, slack: float = 0.1,
                             gamma_min: Optional[float] = None, threads: int = 1) -> dict:
    """Spectrum of the closed loop versus ``(-inf, -L + theta2 + 2 theta1 + slack]``.

    Every grid ``gamma`` at or above the bound must be a stable dichotomy
    and the highest spectral bracket must end below ``bound + slack``.
    """
    bound = -report.L + report.theta2 + 2 * report.theta1
    lo = gamma_min if gamma_min is not None else -2.0 * report.L - 2.0
    gam = np.round(np.arange(lo, bound + 1.0 + step / 2, step), 10)
    ta, tb = report.horizon
    est = estimate_spectrum(report.closed_loop, gam, (ta, tb), mode="nonuniform",
                            full_projector=True, threads=threads)
    above = gam >= bound - 1e-12
    stable_above = all(k == "stable" for k in np.array(est.kinds, dtype=object)[above])
    # brackets enclose every spectral candidate, so their upper ends are conservative
    top = max((b[1] for b in est.brackets), default=-math.inf)
    ok = stable_above and top <= bound + slack
    return {"bound": bound, "spectrum_top": top, "stable_above_bound": bool(stable_above),
            "pass": bool(ok), "estimate": est.to_dict()}


# ---------------------------------------------------------------------------
# Lyapunov function check

def _log_envelope(t, v, upper):
    """``ln v <= c + k t`` (upper, ``k >= 0``) or ``ln v >= c - k t`` (lower)."""
    y = np.log(v)
    if upper:
        c, k = envelope_lp(np.column_stack([np.ones_like(t), t]), y,
                           [(None, None), (0, None)], upper=True, shift_col=0)
    else:
        c, k = envelope_lp(np.column_stack([np.ones_like(t), -t]), y,
                           [(None, None), (0, None)], upper=False, shift_col=0)
    return math.exp(c), k / 2.0


def lyapunov_check(rs: RiccatiSolution, gain: GainSchedule, sys: SystemDef,
                   trajectories: Optional[Sequence] = None, n_traj: int = 10, seed: int = 0,
                   stride: int = 10, slack: float = 1e-6, residual_tol: float = 1e-4) -> dict:
    """Lyapunov function ``H(t, x) = <S(t) x, x>`` along closed-loop trajectories.

    1. Envelopes ``C1 e^{-2 phi1 t} <= eig_min S`` and ``eig_max S <= C2 e^{2 phi2 t}``;
       the decay conclusion needs ``L > 2 (phi2 + 2 phi1)``, otherwise the
       hypothesis is reported unmet.
    2. ``H(t) <= e^{-L (t - tau)} H(tau) + slack H(tau)`` for every pair of
       sampled times along each trajectory.
    3. Riccati inequality residual ``S' + U^T S + S U + I + L S`` with
       ``U = A_hat + L/2``, whose largest eigenvalue must stay below
       ``residual_tol`` relative to the size of the terms.

    ``trajectories`` are initial states at ``t_grid[0]``; ``n_traj``
    standard normal states (seeded) are drawn when omitted.
    """
    L = rs.L
    t = rs.t_grid
    n = rs.n
    lo, hi = rs.eig_extremes()
    out = {"L": L, "horizon": [float(t[0]), float(t[-1])]}
    if np.all(lo > 0):
        C1, phi1 = _log_envelope(t, lo, upper=False)
        C2, phi2 = _log_envelope(t, hi, upper=True)
        met = L > 2 * (phi2 + 2 * phi1)
        out["envelopes"] = {"C1": C1, "phi1": phi1, "C2": C2, "phi2": phi2,
                            "hypothesis": "met" if met else "hypothesis unmet"}
    else:
        out["envelopes"] = {"hypothesis": "hypothesis unmet", "reason": "S not positive definite"}

    if trajectories is None:
        rng = np.random.default_rng(seed)
        trajectories = rng.standard_normal((n_traj, n))
    idx = np.arange(0, len(t), max(1, int(stride)))
    if idx[-1] != len(t) - 1:
        idx = np.append(idx, len(t) - 1)
    ts = t[idx]
    Ss = rs.S[idx]
    dt = ts[None, :] - ts[:, None]

    def rhs(tt, x):
        return (sys.a_fun(tt) - sys.b_fun(tt) @ gain.F_at(tt)) @ x

    def log_h(x0):
        # piecewise integration with renormalization keeps ln H accurate
        x, acc, out_h = x0 / np.linalg.norm(x0), math.log(np.linalg.norm(x0)), []
        for k in range(len(ts)):
            if k:
                sol = solve_ivp(rhs, (float(ts[k - 1]), float(ts[k])), x, method="DOP853",
                                rtol=1e-11, atol=1e-14)
                x = sol.y[:, -1]
                nx = np.linalg.norm(x)
                acc += math.log(nx)
                x = x / nx
            out_h.append(2 * acc + math.log(float(x @ Ss[k] @ x)))
        return np.array(out_h)

    allowed = np.log(np.exp(-L * np.clip(dt, 0, None)) + slack)
    worst, traj_ok = -math.inf, True
    for x0 in np.atleast_2d(np.asarray(trajectories, dtype=float)):
        if not np.any(x0):
            continue  # H vanishes identically
        lh = log_h(x0)
        # rows: tau, columns: t; excess of ln H(t) - ln H(tau) over the allowed factor
        gap = np.where(dt > 0, lh[None, :] - lh[:, None] - allowed, -np.inf)
        w = float(np.max(gap))
        worst = max(worst, w)
        traj_ok = traj_ok and w <= 0
    out["trajectories"] = {"count": int(len(np.atleast_2d(trajectories))),
                           "max_log_excess": worst, "pass": bool(traj_ok)}

    dS = rs.derivative()
    rel = 0.0
    for k, tt in enumerate(t):
        U = sys.a_fun(tt) - sys.b_fun(tt) @ gain.F_at(tt) + 0.5 * L * np.eye(n)
        S = rs.S[k]
        R = dS[k] + U.T @ S + S @ U + np.eye(n) + L * S
        R = 0.5 * (R + R.T)
        scale = 1.0 + 2 * np.linalg.norm(U.T @ S, 2) + L * np.linalg.norm(S, 2)
        rel = max(rel, float(np.linalg.eigvalsh(R)[-1]) / scale)
    out["riccati_inequality"] = {"max_relative_eig": rel, "pass": bool(rel <= residual_tol)}
    out["pass"] = bool(traj_ok and rel <= residual_tol)
    return out


# ---------------------------------------------------------------------------
# dichotomy spectrum

@dataclass
class SpectrumEstimate:
    """Per-``gamma`` dichotomy verdicts for the shifted system ``A - gamma I``.

    ``kinds`` records ``"stable"`` (identity projector), ``"unstable"`` (zero
    projector), ``"none"`` or ``"both"``; ``verdicts`` maps them to
    ``dichotomy``/``no-dichotomy``/``inconclusive``. ``intervals`` are the
    maximal runs of grid points without a single dichotomy verdict
    (no-dichotomy or inconclusive; both tests passing only happens on a
    finite horizon and marks a spectral candidate), and ``brackets`` widen each
    spectral region to the neighbouring dichotomy points (a direct
    unstable-to-stable switch yields a bracket between two grid points).
    """

    gamma_grid: np.ndarray
    verdicts: list
    kinds: list
    intervals: list
    brackets: list
    mode: str
    horizon: tuple
    rates: np.ndarray = field(repr=False, default=None)

    def contains(self, x: float) -> bool:
        return any(a - 1e-12 <= x <= b + 1e-12 for a, b in self.intervals)

    def bracket_containing(self, x: float):
        for a, b in self.brackets:
            if a - 1e-12 <= x <= b + 1e-12:
                return (a, b)
        return None

    def to_dict(self) -> dict:
        return {"gamma_grid": [float(g) for g in self.gamma_grid], "verdicts": list(self.verdicts),
                "kinds": list(self.kinds), "intervals": [list(iv) for iv in self.intervals],
                "brackets": [list(b) for b in self.brackets], "mode": self.mode,
                "horizon": list(self.horizon)}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gamma", "verdict", "kind", "stable_rate", "unstable_rate"])
            for k, gm in enumerate(self.gamma_grid):
                r = self.rates[k] if self.rates is not None else (math.nan, math.nan)
                w.writerow([repr(float(gm)), self.verdicts[k], self.kinds[k],
                            repr(float(r[0])), repr(float(r[1]))])


_VERDICT = {"stable": "dichotomy", "unstable": "dichotomy", "none": "no-dichotomy",
            "both": "inconclusive"}


def estimate_spectrum(prop: Propagator, gamma_grid, horizon, mode: str = "nonuniform",
                      n_time: int = 41, full_projector: bool = False,
                      threads: int = 1) -> SpectrumEstimate:
    """Classify each shift ``gamma`` by envelope fits of ``ln ||Phi|| - gamma (t - s)``.

    The stable test fits ``c + eps s - lam (t - s)`` for ``t >= s``
    (identity projector), the unstable test fits ``c + eps s - lam (s - t)``
    for ``t <= s`` (zero projector). A test passes when ``lam > 1e-6``.
    ``mode="uniform"`` forces ``eps = 0``.

    Raises
    ------
    UnsupportedProjectorError
        For matrix systems unless ``full_projector=True`` declares that only
        the identity/zero projector tests are wanted.
    """
    if mode not in ("uniform", "nonuniform"):
        raise ValueError("mode must be 'uniform' or 'nonuniform'")
    if prop.n > 1 and not full_projector:
        raise UnsupportedProjectorError(
            "matrix systems may need a nontrivial dichotomy projector; "
            "pass full_projector=True to run the identity/zero projector tests only")
    gam = np.asarray(gamma_grid, dtype=float)
    ta, tb = (float(v) for v in horizon)
    tg = np.linspace(ta, tb, int(n_time))
    T = log_norm_table(prop, tg)
    uniform = mode == "uniform"
    fw = _pair_data(T, tg, forward=True)
    bw = _pair_data(T, tg, forward=False)

    def one(gm):
        s0, _, d, y = fw
        _, _, lam_s = _staged_fit(s0, d, y - gm * d, uniform)
        s1, _, d1, y1 = bw
        # backward: ln||Phi(t,s)|| - gamma (t - s) = y + gamma d
        _, _, lam_u = _staged_fit(s1, d1, y1 + gm * d1, uniform)
        return lam_s, lam_u

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rates = list(ex.map(one, gam))
    else:
        rates = [one(gm) for gm in gam]
    rates = np.array(rates)
    kinds = []
    for ls, lu in rates:
        st, un = ls > RATE_MARGIN, lu > RATE_MARGIN
        kinds.append("both" if st and un else "stable" if st else "unstable" if un else "none")
    verdicts = [_VERDICT[k] for k in kinds]
    intervals, brackets = [], []
    k = 0
    m = len(gam)
    while k < m:
        if kinds[k] in ("none", "both"):
            j = k
            while j + 1 < m and kinds[j + 1] in ("none", "both"):
                j += 1
            intervals.append((float(gam[k]), float(gam[j])))
            brackets.append((float(gam[max(k - 1, 0)]), float(gam[min(j + 1, m - 1)])))
            k = j + 1
        else:
            if k + 1 < m and kinds[k] == "unstable" and kinds[k + 1] == "stable":
                brackets.append((float(gam[k]), float(gam[k + 1])))
            k += 1
    return SpectrumEstimate(gam, verdicts, kinds, intervals, brackets, mode, (ta, tb), rates)
