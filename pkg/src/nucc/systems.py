"""Linear time-varying systems and their transition matrices.

A system is the pair ``x' = A(t) x + B(t) u`` on a finite time interval.
Coefficients come from the built-in catalog, from per-entry expression
strings, or from uniformly spaced samples with linear interpolation.
:class:`Propagator` evaluates the transition matrix ``Phi(t, s)`` either
from a closed form (catalog entries) or by adaptive Runge-Kutta
integration of ``dX/dt = A(t) X``, ``X(s) = I``.
"""

from __future__ import annotations

import ast
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import DomainError, GrowthOverflowError, SpecError

__all__ = [
    "SystemDef", "Propagator", "CatalogEntry", "CATALOG", "compile_expression",
    "evaluate", "transition", "log_norm_transition", "from_catalog",
    "kalman_cc", "barreira", "nucc_bounded_b", "lti_scalar", "custom",
    "shifted", "catalog_entries",
]

OVERFLOW_CAP = 1e300

# ---------------------------------------------------------------------------
# expressions

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
_CONSTS = {"pi": math.pi, "e": math.e}
_OPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.UAdd, ast.USub)


def _check_node(node, src):
    if isinstance(node, (ast.Expression, ast.Load) + _OPS):
        return
    if isinstance(node, (ast.BinOp, ast.UnaryOp)):
        return
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise SpecError(f"non-numeric constant in expression {src!r}")
        return
    if isinstance(node, ast.Name):
        if node.id == "t" or node.id in _CONSTS or node.id in _FUNCS:
            return
        raise SpecError(f"unknown name {node.id!r} in expression {src!r}")
    if isinstance(node, ast.Call):
        if (not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS
                or node.keywords or len(node.args) != 1):
            raise SpecError(f"unsupported call in expression {src!r}")
        return
    raise SpecError(f"unsupported syntax {type(node).__name__} in expression {src!r}")


def compile_expression(src) -> Callable[[float], float]:
    """Compile a scalar expression in ``t`` into a callable.

    The grammar allows numbers, ``t``, ``pi``, ``e``, the operators
    ``+ - * / **`` and the functions ``sin``, ``cos``, ``exp``, ``sqrt``.
    Plain numbers are accepted as constants.

    Raises
    ------
    SpecError
        If the expression is malformed or uses anything else.
    """
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        value = float(src)
        return lambda t: value
    if not isinstance(src, str):
        raise SpecError(f"expression must be a string or number, got {type(src).__name__}")
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise SpecError(f"cannot parse expression {src!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        _check_node(node, src)
    # names in a Call position must be functions, bare names must not be
    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            node.func._is_func = True
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id in _FUNCS and not getattr(node, "_is_func", False):
            raise SpecError(f"function {node.id!r} used without call in {src!r}")
    code = compile(tree, "<expr>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def f(t):
        return float(eval(code, env, {"t": float(t)}))

    return f


def _sampled_function(spec: Mapping, shape) -> Callable[[float], np.ndarray]:
    try:
        samples = np.asarray(spec["samples"], dtype=float)
        t0 = float(spec.get("t0", 0.0))
        dt = float(spec["dt"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"bad sampled spec: {exc}") from None
    if samples.ndim == 1 and shape == (1, 1):
        samples = samples.reshape(-1, 1, 1)
    if samples.ndim != 3 or samples.shape[1:] != tuple(shape):
        raise SpecError(f"samples must have shape (m, {shape[0]}, {shape[1]})")
    if dt <= 0:
        raise SpecError("sample spacing must be positive")
    if samples.shape[0] < 2:
        raise SpecError("at least 2 samples are required")
    m = samples.shape[0]

    def f(t):
        k = (t - t0) / dt
        i = min(max(int(math.floor(k)), 0), m - 2)
        w = k - i
        return (1.0 - w) * samples[i] + w * samples[i + 1]

    f.span = (t0, t0 + (m - 1) * dt)
    return f


def _matrix_function(spec, shape) -> Callable[[float], np.ndarray]:
    rows, cols = shape
    if isinstance(spec, Mapping):
        if "samples" in spec:
            return _sampled_function(spec, shape)
        raise SpecError("matrix spec mapping must contain 'samples'")
    if isinstance(spec, (str, int, float)) and not isinstance(spec, bool):
        spec = [[spec]]
    if (not isinstance(spec, Sequence) or len(spec) != rows
            or any(not isinstance(r, Sequence) or isinstance(r, str) or len(r) != cols
                   for r in spec)):
        raise SpecError(f"expression matrix must be a {rows}x{cols} nested list")
    entries = [[compile_expression(e) for e in row] for row in spec]

    def f(t):
        return np.array([[g(t) for g in row] for row in entries], dtype=float)

    return f


# ---------------------------------------------------------------------------
# system definition

@dataclass(frozen=True, eq=False)
class SystemDef:
    """Time-varying pair ``(A(t), B(t))`` on ``domain = (t_min, t_max)``.

    Parameters
    ----------
    state_dim, input_dim : int
        ``n`` and ``p``.
    a_spec, b_spec
        Expression matrices, sampled specs, or a catalog marker.
    domain : tuple of float
        Finite interval inside ``[0, inf)``.
    catalog : str, optional
        Catalog id when built from the catalog.
    params : mapping
        Catalog parameters (informational and used for serialization).
    a_fun, b_fun : callable, optional
        Precompiled coefficient functions; compiled from the specs if omitted.
    phi, log_phi : callable, optional
        Closed-form ``Phi(t, s)`` and ``ln ||Phi(t, s)||``.
    """

    state_dim: int
    input_dim: int
    a_spec: Any
    b_spec: Any
    domain: tuple
    catalog: Optional[str] = None
    params: Mapping[str, Any] = field(default_factory=dict)
    a_fun: Optional[Callable] = field(default=None, repr=False)
    b_fun: Optional[Callable] = field(default=None, repr=False)
    phi: Optional[Callable] = field(default=None, repr=False)
    log_phi: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        n, p = self.state_dim, self.input_dim
        if not (isinstance(n, (int, np.integer)) and n > 0):
            raise SpecError("state_dim must be a positive integer")
        if not (isinstance(p, (int, np.integer)) and p > 0):
            raise SpecError("input_dim must be a positive integer")
        try:
            lo, hi = (float(v) for v in self.domain)
        except (TypeError, ValueError):
            raise SpecError("domain must be a pair of numbers") from None
        if not (0.0 <= lo < hi < math.inf):
            raise SpecError(f"domain must satisfy 0 <= t_min < t_max < inf, got {self.domain}")
        object.__setattr__(self, "domain", (lo, hi))
        object.__setattr__(self, "params", dict(self.params))
        if self.a_fun is None:
            object.__setattr__(self, "a_fun", _matrix_function(self.a_spec, (n, n)))
        if self.b_fun is None:
            object.__setattr__(self, "b_fun", _matrix_function(self.b_spec, (n, p)))
        for fun in (self.a_fun, self.b_fun):
            span = getattr(fun, "span", None)
            if span is not None and (lo < span[0] - 1e-12 or hi > span[1] + 1e-12):
                raise SpecError(f"domain {self.domain} exceeds sample span {span}")

    @property
    def analytic(self) -> bool:
        """True when a closed-form transition matrix is attached."""
        return self.phi is not None

    def check_time(self, t) -> float:
        lo, hi = self.domain
        t = float(t)
        slack = 1e-10 * max(1.0, abs(hi))
        if not (lo - slack <= t <= hi + slack):
            raise DomainError(f"t={t} outside domain [{lo}, {hi}]")
        return t

    def A(self, t) -> np.ndarray:
        return np.asarray(self.a_fun(self.check_time(t)), dtype=float).reshape(
            self.state_dim, self.state_dim)

    def B(self, t) -> np.ndarray:
        return np.asarray(self.b_fun(self.check_time(t)), dtype=float).reshape(
            self.state_dim, self.input_dim)

    def to_dict(self) -> dict:
        """JSON-ready description; raises for systems built from raw callables."""
        if self.catalog is not None and self.catalog != "custom":
            return {"catalog": self.catalog, "params": dict(self.params),
                    "domain": list(self.domain)}
        if callable(self.a_spec) or callable(self.b_spec) or self.a_spec is None:
            raise SpecError("system built from callables cannot be serialized")
        return {"state_dim": int(self.state_dim), "input_dim": int(self.input_dim),
                "a_spec": self.a_spec, "b_spec": self.b_spec,
                "domain": list(self.domain)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SystemDef":
        """Build from the JSON system-spec format (see README)."""
        if not isinstance(d, Mapping):
            raise SpecError("system spec must be a JSON object")
        cat = d.get("catalog")
        if cat is not None and cat != "custom":
            params = dict(d.get("params", {}))
            if "domain" in d:
                params["t_min"], params["t_max"] = (float(v) for v in d["domain"])
            return from_catalog(cat, **params)
        missing = {"state_dim", "input_dim", "a_spec", "b_spec", "domain"} - set(d)
        if missing:
            raise SpecError(f"system spec missing fields: {sorted(missing)}")
        return custom(d["state_dim"], d["input_dim"], d["a_spec"], d["b_spec"], d["domain"])


def evaluate(sys: SystemDef, t) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A(t), B(t))``."""
    return sys.A(t), sys.B(t)


# ---------------------------------------------------------------------------
# catalog

def kalman_cc(t_min: float = 1.0, t_max: float = 100.0) -> SystemDef:
    """``x' = -t x + sqrt(2(t-1)) exp(-t+1/2) u`` for ``t >= 1``.

    Completely controllable but not uniformly so, and not NUCC.
    Closed form ``Phi(t, s) = exp((s^2 - t^2)/2)``.
    """
    if t_min < 1.0:
        raise SpecError("kalman_cc is defined for t >= 1")
    return SystemDef(
        1, 1, {"catalog": "kalman_cc"}, {"catalog": "kalman_cc"}, (t_min, t_max),
        catalog="kalman_cc", params={"t_min": t_min, "t_max": t_max},
        a_fun=lambda t: np.array([[-t]]),
        b_fun=lambda t: np.array([[math.sqrt(max(2.0 * (t - 1.0), 0.0)) * math.exp(-t + 0.5)]]),
        phi=lambda t, s: np.array([[math.exp((s * s - t * t) / 2.0)]]),
        log_phi=lambda t, s: (s * s - t * t) / 2.0,
    )


def _barreira_exponent(lam0, a, t, s):
    # integral of lam0 + a r sin r from s to t
    return lam0 * (t - s) + a * ((math.sin(t) - t * math.cos(t)) - (math.sin(s) - s * math.cos(s)))


def barreira(lam0: float = -2.0, a: float = -1.0, b: float = 0.0,
             t_min: float = 0.0, t_max: float = 100.0) -> SystemDef:
    """Scalar plant ``x' = (lam0 + a t sin t) x`` with ``lam0 < a < 0``.

    Nonuniform bounded growth with ``|Phi(t, s)| <= exp(2|a| s) exp((|lam0| + 2|a|)|t - s|)``.
    ``b`` is a constant input gain; the default 0 gives the bare plant.
    """
    if not (lam0 < a < 0):
        raise SpecError(f"barreira requires lam0 < a < 0, got lam0={lam0}, a={a}")
    return SystemDef(
        1, 1, {"catalog": "barreira"}, {"catalog": "barreira"}, (t_min, t_max),
        catalog="barreira",
        params={"lam0": lam0, "a": a, "b": b, "t_min": t_min, "t_max": t_max},
        a_fun=lambda t: np.array([[lam0 + a * t * math.sin(t)]]),
        b_fun=lambda t: np.array([[float(b)]]),
        phi=lambda t, s: np.array([[math.exp(_barreira_exponent(lam0, a, t, s))]]),
        log_phi=lambda t, s: _barreira_exponent(lam0, a, t, s),
    )


def nucc_bounded_b(lam0=-0.2, a=-0.1, b: float = 1.0, beta: float = 0.0, n: int = 1,
                   t_min: float = 0.0, t_max: float = 100.0) -> SystemDef:
    """Barreira-type plant with ``B(t) = b exp(beta t) I``.

    For ``n > 1`` the plant is diagonal with per-coordinate ``lam0[i]`` and
    ``a[i]``. The bounded-growth constants ``K0, a_growth, eta`` and the input
    bounds ``b0 exp(-beta0 t) <= |B^T x|/|x| <= b1 exp(beta1 t)`` are stored in
    ``params``; ``sigma0`` is constant for this construction.
    """
    lam = np.broadcast_to(np.asarray(lam0, dtype=float), (n,)).copy()
    aa = np.broadcast_to(np.asarray(a, dtype=float), (n,)).copy()
    for l_i, a_i in zip(lam, aa):
        if not (l_i < a_i < 0):
            raise SpecError(f"nucc_bounded_b requires lam0 < a < 0, got {l_i}, {a_i}")
    if b <= 0:
        raise SpecError("nucc_bounded_b requires b > 0")
    eta = float(np.max(2.0 * np.abs(aa)))
    params = {
        "lam0": lam0 if np.ndim(lam0) == 0 else list(map(float, lam)),
        "a": a if np.ndim(a) == 0 else list(map(float, aa)),
        "b": b, "beta": beta, "n": n, "t_min": t_min, "t_max": t_max,
        # bounded-growth and input-bound constants of the construction
        "K0": 1.0, "a_growth": float(np.max(np.abs(lam) + 2.0 * np.abs(aa))), "eta": eta,
        "b0": float(b), "b1": float(b), "beta0": max(-beta, 0.0), "beta1": max(beta, 0.0),
    }

    def expo(t, s):
        return np.array([_barreira_exponent(l_i, a_i, t, s) for l_i, a_i in zip(lam, aa)])

    def log_phi(t, s):
        return float(np.max(expo(t, s)))

    return SystemDef(
        n, n, {"catalog": "nucc_bounded_b"}, {"catalog": "nucc_bounded_b"}, (t_min, t_max),
        catalog="nucc_bounded_b", params=params,
        a_fun=lambda t: np.diag(lam + aa * t * math.sin(t)),
        b_fun=lambda t: b * math.exp(beta * t) * np.eye(n),
        phi=lambda t, s: np.diag(np.exp(expo(t, s))),
        log_phi=log_phi,
    )


def lti_scalar(A: float = 0.0, B: float = 1.0, t_min: float = 0.0,
               t_max: float = 100.0) -> SystemDef:
    """Constant scalar system ``x' = A x + B u``."""
    A, B = float(A), float(B)
    return SystemDef(
        1, 1, {"catalog": "lti_scalar"}, {"catalog": "lti_scalar"}, (t_min, t_max),
        catalog="lti_scalar", params={"A": A, "B": B, "t_min": t_min, "t_max": t_max},
        a_fun=lambda t: np.array([[A]]),
        b_fun=lambda t: np.array([[B]]),
        phi=lambda t, s: np.array([[math.exp(A * (t - s))]]),
        log_phi=lambda t, s: A * (t - s),
    )


def custom(state_dim: int, input_dim: int, a_spec, b_spec, domain) -> SystemDef:
    """System from expression or sampled specs; no closed-form transition."""
    return SystemDef(int(state_dim), int(input_dim), a_spec, b_spec, tuple(domain),
                     catalog="custom")


def shifted(sys: SystemDef, c: float) -> SystemDef:
    """The system with ``A`` replaced by ``A + c I``.

    The closed form, when present, picks up the factor ``exp(c (t - s))``.
    """
    n = sys.state_dim
    phi = log_phi = None
    if sys.phi is not None:
        phi = lambda t, s: sys.phi(t, s) * math.exp(c * (t - s))  # noqa: E731
    if sys.log_phi is not None:
        log_phi = lambda t, s: sys.log_phi(t, s) + c * (t - s)  # noqa: E731
    return SystemDef(
        n, sys.input_dim, None, None, sys.domain, catalog=None,
        params={"base": sys.catalog, "shift": c},
        a_fun=lambda t: sys.a_fun(t) + c * np.eye(n), b_fun=sys.b_fun,
        phi=phi, log_phi=log_phi,
    )


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    factory: Callable[..., SystemDef]
    params: tuple
    origin: str
    analytic: bool = True


CATALOG = {
    "kalman_cc": CatalogEntry(
        "kalman_cc", kalman_cc, ("t_min", "t_max"),
        "Kalman example: controllable but neither UCC nor NUCC"),
    "barreira": CatalogEntry(
        "barreira", barreira, ("lam0", "a", "b", "t_min", "t_max"),
        "scalar plant with nonuniform bounded growth"),
    "nucc_bounded_b": CatalogEntry(
        "nucc_bounded_b", nucc_bounded_b, ("lam0", "a", "b", "beta", "n", "t_min", "t_max"),
        "NUCC construction: nonuniform plant with bounded input gain"),
    "lti_scalar": CatalogEntry(
        "lti_scalar", lti_scalar, ("A", "B", "t_min", "t_max"),
        "constant scalar system (uniform reference case)"),
}


def catalog_entries(filter: Optional[str] = None) -> list[CatalogEntry]:
    """Catalog entries whose id contains ``filter`` (all when ``None``)."""
    return [e for k, e in CATALOG.items() if filter is None or filter in k]


def from_catalog(id: str, **params) -> SystemDef:
    """Instantiate a catalog entry by id."""
    if id not in CATALOG:
        raise SpecError(f"unknown catalog id {id!r}; known: {sorted(CATALOG)}")
    entry = CATALOG[id]
    bad = set(params) - set(entry.params)
    if bad:
        raise SpecError(f"unknown parameters for {id}: {sorted(bad)}")
    return entry.factory(**params)


# ---------------------------------------------------------------------------
# propagation

class Propagator:
    """Transition-matrix evaluator for a :class:`SystemDef`.

    Parameters
    ----------
    system : SystemDef
    rtol, atol : float
        Integrator tolerances (DOP853, an embedded 8(5,3) Runge-Kutta pair).
    analytic : bool
        Use the system's closed form when one is attached.
    cap : float
        Overflow cap on ``max |X_ij|`` during integration.
    renorm_step : float
        Chunk length for renormalized log-norm propagation of matrix systems.

    Notes
    -----
    The value cache is guarded by a lock, so one instance may be shared
    between threads.
    """

    def __init__(self, system: SystemDef, rtol: float = 1e-9, atol: float = 1e-12,
                 analytic: bool = True, cap: float = OVERFLOW_CAP, renorm_step: float = 1.0,
                 method: str = "DOP853", cache_size: int = 200_000):
        self.system = system
        self.integrator_tol = (float(rtol), float(atol))
        self.use_analytic = bool(analytic) and system.phi is not None
        self.cap = float(cap)
        self.renorm_step = float(renorm_step)
        self.method = method
        self._cache: dict = {}
        self._flows: dict = {}
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.system.state_dim

    # -- integration helpers ------------------------------------------------
    def _rhs_left(self, t, y):
        n = self.n
        return (self.system.a_fun(t) @ y.reshape(n, n)).ravel()

    def _rhs_right(self, s, y):
        n = self.n
        return -(y.reshape(n, n) @ self.system.a_fun(s)).ravel()

    def _integrate(self, rhs, t0, t1, y0, dense=False):
        log_cap = math.log(self.cap)

        def blowup(t, y):
            return math.log(float(np.max(np.abs(y))) + 1e-300) - log_cap

        blowup.terminal = True
        blowup.direction = 1
        rtol, atol = self.integrator_tol
        sol = solve_ivp(rhs, (t0, t1), y0, method=self.method, rtol=rtol, atol=atol,
                        dense_output=dense, events=blowup)
        if sol.status == 1:
            raise GrowthOverflowError(sol.t_events[0][0], self.cap)
        if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
            raise GrowthOverflowError(sol.t[-1], self.cap)
        return sol

    def _remember(self, key, value):
        with self._lock:
            if len(self._cache) >= self._cache_size:
                self._cache.clear()
            self._cache[key] = value

    # -- public API ----------------------------------------------------------
    def transition(self, t, s) -> np.ndarray:
        """``Phi(t, s)``; raises :class:`GrowthOverflowError` past the cap."""
        sysd = self.system
        t, s = sysd.check_time(t), sysd.check_time(s)
        n = self.n
        if t == s:
            return np.eye(n)
        key = ("phi", t, s)
        hit = self._cache.get(key)
        if hit is not None:
            return hit.copy()
        if self.use_analytic:
            if sysd.log_phi is not None and sysd.log_phi(t, s) > math.log(self.cap):
                raise GrowthOverflowError(t, self.cap)
            X = np.asarray(sysd.phi(t, s), dtype=float).reshape(n, n)
        else:
            Xn, logscale = self._renorm(t, s)
            if logscale + math.log(np.max(np.abs(Xn))) > math.log(self.cap):
                raise GrowthOverflowError(t, self.cap)
            X = Xn * math.exp(logscale)
        if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > self.cap:
            raise GrowthOverflowError(t, self.cap)
        self._remember(key, X)
        return X.copy()

    def log_norm(self, t, s) -> float:
        """``ln ||Phi(t, s)||_2`` without forming overflowing matrices."""
        sysd = self.system
        t, s = sysd.check_time(t), sysd.check_time(s)
        if t == s:
            return 0.0
        key = ("log", t, s)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self.use_analytic and sysd.log_phi is not None:
            val = float(sysd.log_phi(t, s))
        elif self.n == 1:
            # scalar: ln|Phi(t, s)| is the integral of A
            f = lambda r: float(sysd.a_fun(r)[0, 0])  # noqa: E731
            val, _ = quad(f, s, t, epsabs=1e-13, epsrel=1e-13, limit=500)
        else:
            val = self._log_norm_renorm(t, s)
        self._remember(key, val)
        return val

    def _renorm(self, t, s):
        """``(X, c)`` with ``Phi(t, s) = exp(c) X`` and ``||X|| = 1``.

        Integrates chunk by chunk from a normalized matrix, so the absolute
        integrator tolerance acts relative to the current norm.
        """
        n = self.n
        X = np.eye(n)
        logscale = 0.0
        cur = s
        direction = 1.0 if t > s else -1.0
        h = self.renorm_step
        while (t - cur) * direction > 0:
            nxt = cur + direction * min(h, abs(t - cur))
            try:
                sol = self._integrate(self._rhs_left, cur, nxt, X.ravel())
            except GrowthOverflowError:
                h /= 4.0
                if h < 1e-10:
                    raise
                continue
            X = sol.y[:, -1].reshape(n, n)
            c = np.linalg.norm(X, 2)
            X = X / c
            logscale += math.log(c)
            cur = nxt
        return X, logscale

    def _log_norm_renorm(self, t, s) -> float:
        return self._renorm(t, s)[1]

    def flow_from(self, s, t_end) -> Callable[[float], np.ndarray]:
        """Callable ``t -> Phi(t, s)`` for ``t`` between ``s`` and ``t_end``."""
        sysd = self.system
        s, t_end = sysd.check_time(s), sysd.check_time(t_end)
        n = self.n
        if self.use_analytic:
            return lambda t: np.asarray(sysd.phi(t, s), dtype=float).reshape(n, n)
        key = ("from", s, t_end)
        sol = self._flows.get(key)
        if sol is None:
            if s == t_end:
                return lambda t: np.eye(n)
            sol = self._integrate(self._rhs_left, s, t_end, np.eye(n).ravel(), dense=True).sol
            with self._lock:
                self._flows[key] = sol
        return lambda t: sol(t).reshape(n, n)

    def flow_to(self, t, s_end) -> Callable[[float], np.ndarray]:
        """Callable ``s -> Phi(t, s)`` for ``s`` between ``t`` and ``s_end``.

        Integrates ``dZ/ds = -Z A(s)``, ``Z(t) = I``.
        """
        sysd = self.system
        t, s_end = sysd.check_time(t), sysd.check_time(s_end)
        n = self.n
        if self.use_analytic:
            return lambda s: np.asarray(sysd.phi(t, s), dtype=float).reshape(n, n)
        key = ("to", t, s_end)
        sol = self._flows.get(key)
        if sol is None:
            if t == s_end:
                return lambda s: np.eye(n)
            sol = self._integrate(self._rhs_right, t, s_end, np.eye(n).ravel(), dense=True).sol
            with self._lock:
                self._flows[key] = sol
        return lambda s: sol(s).reshape(n, n)


def transition(prop: Propagator, t, s) -> np.ndarray:
    """``Phi(t, s)`` from a propagator."""
    return prop.transition(t, s)


def log_norm_transition(prop: Propagator, t, s) -> float:
    """``ln ||Phi(t, s)||`` from a propagator."""
    return prop.log_norm(t, s)
