"""Shifted Riccati equation, feedback gain and the D/E sandwich bounds.

The Riccati equation with shift ``L > 0`` is

    S' + (A + L I)^T S + S (A + L I) - S B B^T S = -I,

and ``S_L(t)`` is the limit, as ``t1 -> inf``, of the solution with terminal
value ``S(t1) = 0``. The feedback ``u = -F x`` uses ``F = B^T S_L / 2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from .classify import GrowthFit, NUCCCertificate
from .errors import ConvergenceError, PreconditionError, StiffnessError
from .gramians import GramianResult, weighted_gramian
from .systems import Propagator, SystemDef

__all__ = [
    "RiccatiSolution", "GainSchedule", "riccati_rhs", "solve_riccati", "feedback_gain",
    "shifted_gramian", "check_shifted_band", "y_integral", "gamma_bounds", "s_sandwich",
]


def riccati_rhs(sys: SystemDef, L: float, t: float, S: np.ndarray) -> np.ndarray:
    """``dS/dt`` from the shifted Riccati equation, symmetrized."""
    n = sys.state_dim
    As = sys.a_fun(t) + L * np.eye(n)
    B = sys.b_fun(t)
    SB = S @ B
    R = -(As.T @ S + S @ As - SB @ SB.T + np.eye(n))
    return 0.5 * (R + R.T)


@dataclass
class RiccatiSolution:
    """Samples of ``S_L`` on ``t_grid`` plus convergence metadata.

    ``S`` has shape ``(len(t_grid), n, n)``. Off-grid values come from the
    dense output of the final backward integration (``S_at``).
    """

    L: float
    t_grid: np.ndarray
    S: np.ndarray
    t1_sequence: list
    convergence_gap: float
    gap_history: list
    tol: float
    _dense: Optional[Callable] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.S.shape[1]

    def S_at(self, t) -> np.ndarray:
        if self._dense is None:
            return np.array([[np.interp(t, self.t_grid, self.S[:, i, j])
                              for j in range(self.n)] for i in range(self.n)])
        M = self._dense(t).reshape(self.n, self.n)
        return 0.5 * (M + M.T)

    def derivative(self, h: float = 1e-4) -> np.ndarray:
        """``S'`` on ``t_grid`` by central differences of the dense solution.

        Without a dense solution the grid samples are differenced instead.
        """
        if self._dense is None:
            return np.gradient(self.S, self.t_grid, axis=0, edge_order=2)
        n = self.n
        up = self._dense(self.t_grid + h).T.reshape(-1, n, n)
        dn = self._dense(self.t_grid - h).T.reshape(-1, n, n)
        d = (up - dn) / (2 * h)
        return 0.5 * (d + np.transpose(d, (0, 2, 1)))

    def residual(self, sys: SystemDef) -> float:
        """Relative residual of the Riccati equation with ``S'`` by central differences."""
        dS = self.derivative()
        worst = 0.0
        n = self.n
        for k, t in enumerate(self.t_grid):
            S = self.S[k]
            As = sys.a_fun(t) + self.L * np.eye(n)
            SB = S @ sys.b_fun(t)
            scale = (np.linalg.norm(As.T @ S, 2) * 2 + np.linalg.norm(SB @ SB.T, 2) + 1.0)
            r = dS[k] - riccati_rhs(sys, self.L, t, S)
            worst = max(worst, np.linalg.norm(r, 2) / scale)
        return float(worst)

    def eig_extremes(self) -> tuple[np.ndarray, np.ndarray]:
        ev = np.linalg.eigvalsh(self.S)
        return ev[:, 0], ev[:, -1]

    def to_dict(self) -> dict:
        lo, hi = self.eig_extremes()
        return {"L": self.L, "t_range": [float(self.t_grid[0]), float(self.t_grid[-1])],
                "n_grid": int(len(self.t_grid)), "t1_sequence": list(self.t1_sequence),
                "convergence_gap": self.convergence_gap, "gap_history": list(self.gap_history),
                "tol": self.tol, "eig_min_S": float(lo.min()), "eig_max_S": float(hi.max())}

    def to_csv(self, path):
        n = self.n
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"S{i + 1}{j + 1}" for i in range(n) for j in range(n)])
            for t, S in zip(self.t_grid, self.S):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in S.ravel()])


def _backward(sys, L, t1, t_grid, rtol, atol, blowup):
    n = sys.state_dim

    def rhs(t, y):
        return riccati_rhs(sys, L, t, y.reshape(n, n)).ravel()

    def big(t, y):
        return float(np.max(np.abs(y))) - blowup

    big.terminal = True
    sol = solve_ivp(rhs, (t1, float(t_grid[0])), np.zeros(n * n), method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True, events=big)
    if sol.status == 1:
        raise StiffnessError(
            f"Riccati solution exceeded {blowup:.1e} near t={sol.t_events[0][0]:.4g}; "
            "try a smaller L or a finer tolerance")
    if sol.status != 0:
        raise StiffnessError(f"backward Riccati integration failed: {sol.message}")
    S = sol.sol(t_grid).T.reshape(len(t_grid), n, n)
    S = 0.5 * (S + np.transpose(S, (0, 2, 1)))
    return S, sol.sol


def solve_riccati(sys: SystemDef, L: float, t_range, tol: float = 1e-9,
                  t1_step: float = 1.0, max_steps: int = 200, dt: float = 0.01,
                  rtol: float = 1e-11, atol: float = 1e-12,
                  blowup: float = 1e12) -> RiccatiSolution:
    """Solve the shifted Riccati equation on ``t_range`` as a limit in ``t1``.

    Terminal times ``t1 = T + k * t1_step`` with ``T = t_range[1] + t1_step``
    are tried until successive grid solutions differ by at most ``tol``
    (max norm, relative to ``max(1, max |S|)``).

    Raises
    ------
    ConvergenceError
        If the terminal-time budget (``max_steps`` or the domain end) runs out.
    StiffnessError
        If the backward integration blows up.
    """
    if not L > 0:
        raise PreconditionError("L must be positive")
    ta, tb = (float(v) for v in t_range)
    sys.check_time(ta)
    sys.check_time(tb)
    m = max(int(round((tb - ta) / dt)) + 1, 3)
    t_grid = np.linspace(ta, tb, m)
    hi = sys.domain[1]
    prev = None
    t1s, gaps = [], []
    t1 = tb + t1_step
    for _ in range(max_steps):
        if t1 > hi + 1e-12:
            break
        S, dense = _backward(sys, L, t1, t_grid, rtol, atol, blowup)
        t1s.append(t1)
        if prev is not None:
            gap = float(np.max(np.abs(S - prev)) / max(1.0, float(np.max(np.abs(S)))))
            gaps.append(gap)
            if gap <= tol:
                return RiccatiSolution(float(L), t_grid, S, t1s, gap, gaps, tol, dense)
        prev = S
        t1 += t1_step
    raise ConvergenceError(gaps[-1] if gaps else math.inf,
                           f"Riccati limit not reached by t1={t1s[-1] if t1s else t1:.4g} "
                           f"(last gap {gaps[-1] if gaps else math.inf:.3g})")


@dataclass
class GainSchedule:
    """``F(t) = B(t)^T S_L(t) / 2`` on the Riccati grid.

    Off-grid values use the dense Riccati solution (``F_at``).
    """

    t_grid: np.ndarray
    F: np.ndarray
    source: RiccatiSolution
    system: SystemDef

    def F_at(self, t) -> np.ndarray:
        return 0.5 * self.system.b_fun(t).T @ self.source.S_at(t)

    def to_csv(self, path):
        p, n = self.F.shape[1:]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"F{i + 1}{j + 1}" for i in range(p) for j in range(n)])
            for t, F in zip(self.t_grid, self.F):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in F.ravel()])


def feedback_gain(rs: RiccatiSolution, sys: SystemDef) -> GainSchedule:
    """Gain ``F = B^T S / 2`` evaluated exactly at the grid points."""
    F = np.array([0.5 * sys.b_fun(t).T @ S for t, S in zip(rs.t_grid, rs.S)])
    return GainSchedule(rs.t_grid, F, rs, sys)


# ---------------------------------------------------------------------------
# auxiliary integrals

def shifted_gramian(prop: Propagator, ell: float, t, sigma, tol: float = 1e-9) -> GramianResult:
    """``W_ell(t, t+sigma) = int exp(2 ell (t-s)) Phi(t,s) B B^T Phi(t,s)^T ds``."""
    return weighted_gramian(prop, float(t), t, float(t) + float(sigma), tol, ell=ell,
                            kind="W_ell")


def _sigma_index(cert: NUCCCertificate, sigma) -> int:
    idx = np.flatnonzero(np.isclose(cert.sigma_grid, sigma, rtol=1e-12, atol=1e-12))
    if idx.size == 0:
        raise PreconditionError(f"sigma={sigma} is not on the certificate grid")
    return int(idx[0])


def check_shifted_band(prop: Propagator, cert: NUCCCertificate, ell: float,
                       slack: float = 10.0, tol: float = 1e-9) -> dict:
    """Check ``alpha0 e^{-2 ell sigma} e^{-2 mu0 t} <= W_ell <= alpha1 e^{2 mu1 t}`` on the grid."""
    viol, count = [], 0
    m = cert.mask()
    for i, t in enumerate(cert.t_grid):
        for j, s in enumerate(cert.sigma_grid):
            if not m[i, j]:
                continue
            count += 1
            G = shifted_gramian(prop, ell, t, s, tol)
            lo = cert.alpha0[j] * math.exp(-2 * ell * s - 2 * cert.mu0 * t)
            hi = cert.alpha1[j] * math.exp(2 * cert.mu1 * t)
            if G.eig_min < lo / slack or G.eig_max > hi * slack:
                viol.append({"t": float(t), "sigma": float(s), "eig": [G.eig_min, G.eig_max],
                             "band": [lo, hi]})
    return {"pass": not viol, "violations": viol, "checked": count}


def gamma_bounds(fit: GrowthFit, ell: float, sigma: float) -> tuple[float, float]:
    """``(gamma1, gamma2)`` for the shifted integral of ``Phi^T Phi``.

    ``gamma1 = [1 - e^{-2(a+ell) sigma}] / (K0^2 2 (a+ell+eta))`` and
    ``gamma2 = K0^2 [e^{2(a+ell) sigma} - 1] / (2 (a+ell))``, with the
    ``a + ell -> 0`` limits taken where needed.
    """
    x = fit.a + ell
    K2 = fit.K0 ** 2
    if x + fit.eta == 0:
        g1 = sigma / K2
    else:
        g1 = -math.expm1(-2 * x * sigma) / (K2 * 2 * (x + fit.eta))
    g2 = K2 * (math.expm1(2 * x * sigma) / (2 * x) if x != 0 else sigma)
    return g1, g2


def y_integral(prop: Propagator, ell: float, t, sigma, tol: float = 1e-9,
               fit: Optional[GrowthFit] = None, slack: float = 10.0):
    """``Y_ell(t, t+sigma) = int Phi_{A+ell I}(s,t)^T Phi_{A+ell I}(s,t) ds``.

    Returns ``(GramianResult, band)``; ``band`` is ``None`` without a growth
    fit, else a dict checking ``gamma1 e^{-2 eta t} <= eig <= gamma2 e^{2 eta t}``.
    """
    if ell < 0:
        raise PreconditionError("ell must be nonnegative")
    t, sigma = float(t), float(sigma)
    phi = prop.flow_from(t, t + sigma)

    def integrand(s):
        P = phi(s) * math.exp(ell * (s - t))
        return P.T @ P

    res, err, info = quad_vec(integrand, t, t + sigma, epsabs=tol * 1e-3, epsrel=tol,
                              norm="max", full_output=True)
    M = 0.5 * (res + res.T)
    ev = np.linalg.eigvalsh(M)
    Y = GramianResult("Y_ell", (t, t + sigma), M, float(ev[0]), float(ev[-1]), float(err))
    band = None
    if fit is not None:
        g1, g2 = gamma_bounds(fit, ell, sigma)
        lo, hi = g1 * math.exp(-2 * fit.eta * t), g2 * math.exp(2 * fit.eta * t)
        band = {"gamma1": g1, "gamma2": g2, "lower": lo, "upper": hi,
                "pass": bool(Y.eig_min >= lo / slack and Y.eig_max <= hi * slack)}
    return Y, band


def s_sandwich(prop: Propagator, cert: NUCCCertificate, L: float, t, sigma=None,
               rs: Optional[RiccatiSolution] = None, fit: Optional[GrowthFit] = None,
               slack: float = 10.0, tol: float = 1e-9, shift: str = "full") -> dict:
    """Check ``D^{-1}(t) <= S_L(t) <= E(t)`` with ``t_c = t + sigma``.

    ``D = Y^{-1} + tr(W)(1 + tr Y / lmin Y)^2 I`` and
    ``E = W^{-1} + tr(Y)(1 + tr W / lmin W)^2 I`` where ``W = W_ell`` and
    ``Y = Y_ell`` are the shifted integrals on ``[t, t + sigma]``. ``sigma``
    defaults to the smallest certificate window at least ``sigma0`` at the
    nearest certificate time.

    ``shift="full"`` (default) takes ``ell = L``, the shift carried by the
    Riccati equation. ``shift="half"`` takes ``ell = L/2``; with that choice
    the upper half ``S <= E`` fails for short windows once ``L`` is large,
    so it is kept only for comparison.

    With a growth fit the explicit bounds ``lmin D^{-1} >= 1/Dhat(t)`` and
    ``lmax S <= Ehat(t)`` in terms of ``theta1 = mu1 + 4 eta`` and
    ``theta2 = eta + 2(mu1 + mu0)`` are checked too (with ``slack``).

    Raises
    ------
    PreconditionError
        If the shifted gramian is singular or ``sigma < sigma0(t)``.
    """
    t = float(t)
    k = int(np.argmin(np.abs(cert.t_grid - t)))
    if sigma is None:
        ok = np.flatnonzero(cert.sigma_grid >= cert.sigma0[k] - 1e-12)
        if not np.isfinite(cert.sigma0[k]) or ok.size == 0:
            raise PreconditionError(f"no certified window at t={t}")
        sigma = cert.sigma_grid[ok[0]]
    sigma = float(sigma)
    sysd = prop.system
    n = sysd.state_dim
    if shift not in ("half", "full"):
        raise ValueError("shift must be 'half' or 'full'")
    ell = L / 2.0 if shift == "half" else float(L)
    W = shifted_gramian(prop, ell, t, sigma, tol)
    if not W.invertible:
        raise PreconditionError(
            f"shifted gramian singular on [{t}, {t + sigma}] (eig_min={W.eig_min:.3g})")
    Y, _ = y_integral(prop, ell, t, sigma, tol)
    trW, trY = float(np.trace(W.matrix)), float(np.trace(Y.matrix))
    D = np.linalg.inv(Y.matrix) + trW * (1 + trY / Y.eig_min) ** 2 * np.eye(n)
    E = np.linalg.inv(W.matrix) + trY * (1 + trW / W.eig_min) ** 2 * np.eye(n)
    if rs is None:
        rs = solve_riccati(sysd, L, (t, t + 1.0))
    S = rs.S_at(t)
    Dinv = np.linalg.inv(D)
    scale = max(np.linalg.norm(S, 2), 1.0)
    low_ok = bool(np.linalg.eigvalsh(S - Dinv)[0] >= -1e-9 * scale)
    up_ok = bool(np.linalg.eigvalsh(E - S)[0] >= -1e-9 * scale)
    out = {"t": t, "sigma": sigma, "ell": ell, "D": D.tolist(), "E": E.tolist(), "S": S.tolist(),
           "lower_ok": low_ok, "upper_ok": up_ok, "pass": low_ok and up_ok}
    if fit is not None:
        j = _sigma_index(cert, sigma)
        if sigma < cert.sigma0[k] - 1e-12:
            raise PreconditionError("sigma below sigma0(t)")
        a0, a1 = float(cert.alpha0[j]), float(cert.alpha1[j])
        eta = fit.eta
        th1 = cert.mu1 + 4 * eta
        th2 = eta + 2 * (cert.mu1 + cert.mu0)
        g1, g2 = gamma_bounds(fit, ell, sigma)
        e1, e2 = math.exp(2 * th1 * t), math.exp(2 * th2 * t)
        Dhat = max(1 / g1, n * a1) * (e1 + e1 * (1 + n * g2 * math.exp(th1 * t) / g1) ** 2)
        w = math.exp(2 * ell * sigma)
        Ehat = max(w / a0, n * g2) * (e2 + e2 * (1 + n * a1 * w * e2 / a0) ** 2)
        lmin_Dinv = float(np.linalg.eigvalsh(Dinv)[0])
        lmax_S = float(np.linalg.eigvalsh(S)[-1])
        out.update({"theta1": th1, "theta2": th2, "Dhat": Dhat, "Ehat": Ehat,
                    "theta_lower_ok": bool(lmin_Dinv * slack >= 1 / Dhat),
                    "theta_upper_ok": bool(lmax_S <= slack * Ehat)})
        out["pass"] = out["pass"] and out["theta_lower_ok"] and out["theta_upper_ok"]
    return out
