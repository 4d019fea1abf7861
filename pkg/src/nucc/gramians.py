"""Controllability gramians, minimum-energy inputs and energy accounting.

``W(a, b) = int_a^b Phi(a, s) B B^T Phi(a, s)^T ds`` and
``K(a, b) = int_a^b Phi(b, s) B B^T Phi(b, s)^T ds`` are computed with
adaptive Gauss-Kronrod quadrature (``scipy.integrate.quad_vec``) over an
integrand evaluated through a :class:`~nucc.systems.Propagator`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from .errors import AccuracyError, NotControllableError, SpecError
from .systems import Propagator

__all__ = [
    "GramianResult", "EnergyReport", "InputSchedule",
    "gramian_W", "gramian_K", "weighted_gramian", "check_gramian_identity",
    "min_energy_input", "simulate", "energy_report", "INVERTIBILITY_RATIO",
]

INVERTIBILITY_RATIO = 1e-12


@dataclass(frozen=True)
class GramianResult:
    """A symmetric positive semidefinite gramian on ``interval``."""

    kind: str
    interval: tuple
    matrix: np.ndarray
    eig_min: float
    eig_max: float
    quadrature_error_estimate: float

    @property
    def invertible(self) -> bool:
        return self.eig_max > 0 and self.eig_min > INVERTIBILITY_RATIO * self.eig_max

    def to_dict(self) -> dict:
        return {"kind": self.kind, "interval": list(self.interval),
                "matrix": self.matrix.tolist(), "eig_min": self.eig_min,
                "eig_max": self.eig_max,
                "quadrature_error_estimate": self.quadrature_error_estimate}


def _integrate_matrix(f, a, b, tol, limit=2000):
    """Adaptive GK21 quadrature of a matrix-valued integrand."""
    res, err, info = quad_vec(f, a, b, epsabs=tol * 1e-3, epsrel=tol, norm="max",
                              limit=limit, full_output=True)
    scale = max(float(np.max(np.abs(res))), 1e-300)
    if not info.success and err > tol * scale:
        raise AccuracyError(err, tol * scale)
    return res, float(err)


def _result(kind, a, b, M, err) -> GramianResult:
    M = 0.5 * (M + M.T)
    eig = np.linalg.eigvalsh(M)
    return GramianResult(kind, (float(a), float(b)), M, float(eig[0]), float(eig[-1]), err)


def weighted_gramian(prop: Propagator, anchor, a, b, tol=1e-9, ell=0.0, kind="W") -> GramianResult:
    """``int_a^b exp(2 ell (anchor - s)) Phi(anchor, s) B B^T Phi(anchor, s)^T ds``.

    ``anchor = a`` gives ``W``, ``anchor = b`` gives ``K`` and ``ell > 0``
    the exponentially weighted gramian of ``A + ell I``.
    """
    sysd = prop.system
    a, b = sysd.check_time(a), sysd.check_time(b)
    if not a < b:
        raise SpecError(f"gramian interval requires a < b, got ({a}, {b})")
    phi = prop.flow_to(anchor, b if anchor == a else a)

    def integrand(s):
        G = phi(s) @ sysd.b_fun(s)
        if ell:
            G = G * math.exp(ell * (anchor - s))
        return G @ G.T

    M, err = _integrate_matrix(integrand, a, b, tol)
    return _result(kind, a, b, M, err)


def gramian_W(prop: Propagator, a, b, tol: float = 1e-9) -> GramianResult:
    """Controllability gramian ``W(a, b)`` anchored at the initial time."""
    return weighted_gramian(prop, float(a), a, b, tol, kind="W")


def gramian_K(prop: Propagator, a, b, tol: float = 1e-9) -> GramianResult:
    """Reachability-type gramian ``K(a, b)`` anchored at the final time."""
    return weighted_gramian(prop, float(b), a, b, tol, kind="K")


def check_gramian_identity(prop: Propagator, a, b, tol: float = 1e-9) -> float:
    """Relative residual of ``K(a,b) - Phi(b,a) W(a,b) Phi(b,a)^T``."""
    W = gramian_W(prop, a, b, tol).matrix
    K = gramian_K(prop, a, b, tol).matrix
    P = prop.transition(b, a)
    R = K - P @ W @ P.T
    return float(np.linalg.norm(R, 2) / max(np.linalg.norm(K, 2), 1e-300))


# ---------------------------------------------------------------------------
# minimum-energy transfer

@dataclass
class InputSchedule:
    """Input ``u(t)`` on ``[t0, tf]``.

    ``values`` holds ``u`` at ``t_grid`` (shape ``(len(t_grid), p)``).
    When ``fn`` is present it is the exact formula and is used for
    off-grid queries; otherwise values are linearly interpolated.
    """

    t_grid: np.ndarray
    values: np.ndarray
    fn: Optional[Callable[[float], np.ndarray]] = None

    @property
    def interval(self):
        return float(self.t_grid[0]), float(self.t_grid[-1])

    def __call__(self, t) -> np.ndarray:
        if self.fn is not None:
            return np.asarray(self.fn(t), dtype=float)
        return np.array([np.interp(t, self.t_grid, col) for col in self.values.T])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"u{i + 1}" for i in range(self.values.shape[1])])
            for t, row in zip(self.t_grid, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def min_energy_input(prop: Propagator, t0, tf, x0, n_grid: int = 401,
                     W: Optional[GramianResult] = None, tol: float = 1e-10) -> InputSchedule:
    """Minimum-energy input steering ``x0`` at ``t0`` to the origin at ``tf``.

    ``u*(t) = -B(t)^T Phi(t0, t)^T W(t0, tf)^{-1} x0``.

    Raises
    ------
    NotControllableError
        If ``W(t0, tf)`` is numerically singular.
    """
    sysd = prop.system
    x0 = np.asarray(x0, dtype=float).reshape(sysd.state_dim)
    if W is None:
        W = gramian_W(prop, t0, tf, tol)
    if not W.invertible:
        raise NotControllableError(
            f"W({t0}, {tf}) singular: eig_min={W.eig_min:.3g}, eig_max={W.eig_max:.3g}")
    coef = np.linalg.solve(W.matrix, x0)
    phi = prop.flow_to(float(t0), float(tf))

    def fn(t):
        return -(sysd.b_fun(t).T @ (phi(t).T @ coef))

    grid = np.linspace(float(t0), float(tf), n_grid)
    values = np.array([fn(t) for t in grid]).reshape(n_grid, sysd.input_dim)
    return InputSchedule(grid, values, fn)


def simulate(prop: Propagator, u: Optional[InputSchedule], x0, t0, tf, t_eval=None,
             rtol: float = 1e-11, atol: float = 1e-14):
    """Integrate ``x' = A x + B u`` from ``x0`` at ``t0`` to ``tf``.

    Returns ``(t, x)`` with ``x`` of shape ``(len(t), n)``.
    """
    sysd = prop.system
    x0 = np.asarray(x0, dtype=float).reshape(sysd.state_dim)
    scale = max(float(np.max(np.abs(x0))), 1e-300)

    def rhs(t, x):
        dx = sysd.a_fun(t) @ x
        if u is not None:
            dx = dx + sysd.b_fun(t) @ u(t)
        return dx

    if not np.any(x0) and u is None:
        t = np.array([t0, tf]) if t_eval is None else np.asarray(t_eval)
        return t, np.zeros((len(t), sysd.state_dim))
    sol = solve_ivp(rhs, (float(t0), float(tf)), x0, method="DOP853", rtol=rtol,
                    atol=atol * scale, t_eval=t_eval)
    return sol.t, sol.y.T


@dataclass(frozen=True)
class EnergyReport:
    """Control energy ``E^2(u) = int u^T u dt`` with gramian-eigenvalue bounds."""

    energy_sq: float
    lower_bound: float
    upper_bound: float
    x0: np.ndarray
    formula_energy_sq: float

    @property
    def within_bounds(self) -> bool:
        slack = 1e-8 * max(abs(self.upper_bound), 1e-300)
        return self.lower_bound - slack <= self.energy_sq <= self.upper_bound + slack

    def to_dict(self) -> dict:
        return {"energy_sq": self.energy_sq, "lower_bound": self.lower_bound,
                "upper_bound": self.upper_bound, "x0": self.x0.tolist(),
                "formula_energy_sq": self.formula_energy_sq}


def energy_report(u: InputSchedule, W: GramianResult, x0) -> EnergyReport:
    """Energy of ``u`` and the bounds ``|x0|^2/lmax(W) <= E^2 <= |x0|^2/lmin(W)``.

    The bounds hold for the minimum-energy input, for which
    ``E^2 = x0^T W^{-1} x0``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    a, b = W.interval
    ua, ub = u.interval
    if abs(ua - a) > 1e-9 * max(1, abs(a)) or abs(ub - b) > 1e-9 * max(1, abs(b)):
        raise SpecError(f"input interval {u.interval} does not match gramian interval {W.interval}")
    if u.fn is not None:
        e2, _ = quad_vec(lambda t: float(np.dot(u(t), u(t))), a, b, epsabs=0.0, epsrel=1e-12)
        e2 = float(e2)
    else:
        from scipy.integrate import simpson
        e2 = float(simpson(np.sum(u.values ** 2, axis=1), x=u.t_grid))
    nx2 = float(x0 @ x0)
    if nx2 == 0.0:
        return EnergyReport(e2, 0.0, 0.0, x0, 0.0)
    lo = nx2 / W.eig_max if W.eig_max > 0 else math.inf
    hi = nx2 / W.eig_min if W.eig_min > 0 else math.inf
    formula = float(x0 @ np.linalg.solve(W.matrix, x0)) if W.invertible else math.inf
    return EnergyReport(e2, lo, hi, x0, formula)
