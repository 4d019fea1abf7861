"""Scenario runner: ``nucc run``, ``nucc catalog`` and ``nucc quickcheck``.

A scenario is a JSON file::

    {
      "system": {"catalog": "lti_scalar", "params": {"A": 0, "B": 1}},
      "pipeline": ["classify", "riccati", "stabilize"],
      "stage_params": {"riccati": {"L": 1.0}},
      "output_dir": "out/lti",
      "seed": 42
    }

Each stage writes JSON (and CSV time series where relevant) into the
output directory; ``report.json`` lists stage statuses and artifacts and
``timings.csv`` holds wall-clock times. Exit codes: 0 when every stage
passes, 1 on a stage failure, 2 on an invalid scenario.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import classify, gramians, riccati, stability
from .errors import NUCCError, SpecError
from .systems import Propagator, SystemDef, catalog_entries

STAGES = ("transition_check", "gramian", "classify", "min_energy", "riccati",
          "stabilize", "spectrum", "energy")
REQUIRES = {"energy": ("min_energy",), "stabilize": ("classify",)}

_GRID = {"type": "object", "required": ["start", "stop", "step"],
         "properties": {"start": {"type": "number"}, "stop": {"type": "number"},
                        "step": {"type": "number", "exclusiveMinimum": 0}},
         "additionalProperties": False}
_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

STAGE_SCHEMAS = {
    "transition_check": {"n_triples": {"type": "integer", "minimum": 1}, "window": _PAIR,
                         "analytic": {"type": "boolean"}, "tol": _POS},
    "gramian": {"t0": _NUM, "tf": _NUM, "tol": _POS},
    "classify": {"t_grid": _GRID, "sigma_grid": {"type": "array", "items": _POS, "minItems": 2},
                 "tol": _POS, "gram_tol": _POS,
                 "expect": {"enum": ["UCC", "NUCC", "CC_only", "not_CC"]}},
    "min_energy": {"t0": _NUM, "tf": _NUM, "x0": {"type": "array", "items": _NUM},
                   "n_grid": {"type": "integer", "minimum": 3}, "tol": _POS},
    "energy": {},
    "riccati": {"L": _POS, "horizon": _PAIR, "tol": _POS},
    "stabilize": {"L": _POS, "horizon": _PAIR, "grid_step": _POS,
                  "n_traj": {"type": "integer", "minimum": 1}},
    "spectrum": {"gamma": _GRID, "horizon": _PAIR, "mode": {"enum": ["uniform", "nonuniform"]},
                 "target": {"enum": ["plant", "closed_loop"]},
                 "full_projector": {"type": "boolean"}, "n_time": {"type": "integer", "minimum": 3}},
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["system", "pipeline"],
    "properties": {
        "system": {"type": "object"},
        "pipeline": {"type": "array", "items": {"enum": list(STAGES)}, "uniqueItems": True},
        "stage_params": {
            "type": "object",
            "properties": {k: {"type": "object", "properties": v, "additionalProperties": False}
                           for k, v in STAGE_SCHEMAS.items()},
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

# grids that keep the Kalman example inside floating-point range
_CLASSIFY_DEFAULTS = {
    "kalman_cc": {"t_grid": {"start": 1.0, "stop": 11.0, "step": 0.25}},
}


class ScenarioError(Exception):
    """Scenario failed validation (exit code 2)."""


def jsonable(obj):
    """Recursively convert numpy values; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n")


def load_scenario(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    validate_scenario(data)
    return data


def validate_scenario(data) -> None:
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {loc}: {exc.message}") from None
    pipe = data["pipeline"]
    for stage, needs in REQUIRES.items():
        if stage in pipe:
            for dep in needs:
                if dep not in pipe or pipe.index(dep) > pipe.index(stage):
                    raise ScenarioError(f"stage {stage!r} requires {dep!r} earlier in the pipeline")
    sp = data.get("stage_params", {}).get("spectrum", {})
    if "spectrum" in pipe and sp.get("target") == "closed_loop":
        if "stabilize" not in pipe or pipe.index("stabilize") > pipe.index("spectrum"):
            raise ScenarioError("closed-loop spectrum requires 'stabilize' earlier in the pipeline")
    try:
        SystemDef.from_dict(data["system"])
    except (SpecError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid system: {exc}") from None


def scenario_hash(data: dict) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def _arange(g):
    return np.round(np.arange(g["start"], g["stop"] + g["step"] / 2, g["step"]), 12)


# ---------------------------------------------------------------------------
# stages

class Context:
    def __init__(self, system: SystemDef, out: Path, seed: int, tol: Optional[float],
                 threads: int, params: dict):
        self.system = system
        self.prop = Propagator(system)
        self.out = out
        self.seed = seed
        self.tol = tol
        self.threads = threads
        self.params = params
        self.state: dict = {}

    def p(self, stage):
        return self.params.get(stage, {})

    def default_tol(self, stage, fallback):
        return self.p(stage).get("tol", self.tol if self.tol is not None else fallback)

    def window(self, span=10.0):
        lo, hi = self.system.domain
        return lo, min(lo + span, hi)


def stage_transition_check(ctx: Context):
    p = ctx.p("transition_check")
    lo, hi = p.get("window", ctx.window(5.0))
    tol = p.get("tol", 1e-6)
    prop = Propagator(ctx.system, analytic=p.get("analytic", False))
    rng = np.random.default_rng(ctx.seed)
    n = ctx.system.state_dim
    worst = {"cocycle": 0.0, "inverse": 0.0, "identity": 0.0}
    for t, r, s in rng.uniform(lo, hi, size=(p.get("n_triples", 100), 3)):
        Pts = prop.transition(t, s)
        comp = prop.transition(t, r) @ prop.transition(r, s)
        scale = max(np.linalg.norm(prop.transition(t, r), 2) * np.linalg.norm(prop.transition(r, s), 2), 1e-300)
        worst["cocycle"] = max(worst["cocycle"], float(np.linalg.norm(comp - Pts, 2) / scale))
        inv = prop.transition(s, t) @ Pts
        iscale = np.linalg.norm(prop.transition(s, t), 2) * np.linalg.norm(Pts, 2)
        worst["inverse"] = max(worst["inverse"], float(np.linalg.norm(inv - np.eye(n), 2) / iscale))
        worst["identity"] = max(worst["identity"],
                                float(np.linalg.norm(prop.transition(t, t) - np.eye(n), 2)))
    ok = all(v <= tol for v in worst.values())
    dump_json(ctx.out / "transition_check.json", {"window": [lo, hi], "max_errors": worst,
                                                   "tol": tol, "pass": ok})
    return ok, ["transition_check.json"], worst


def stage_gramian(ctx: Context):
    p = ctx.p("gramian")
    lo, _ = ctx.system.domain
    t0 = p.get("t0", lo)
    tf = p.get("tf", t0 + 1.0)
    tol = ctx.default_tol("gramian", 1e-9)
    W = gramians.gramian_W(ctx.prop, t0, tf, tol)
    K = gramians.gramian_K(ctx.prop, t0, tf, tol)
    res = gramians.check_gramian_identity(ctx.prop, t0, tf, tol)
    ctx.state["W"] = W
    ok = res <= 1e-6
    dump_json(ctx.out / "gramian.json", {"W": W.to_dict(), "K": K.to_dict(),
                                          "identity_residual": res, "invertible": W.invertible,
                                          "pass": ok})
    return ok, ["gramian.json"], {"identity_residual": res, "eig_min_W": W.eig_min}


def stage_classify(ctx: Context):
    p = dict(_CLASSIFY_DEFAULTS.get(ctx.system.catalog, {}))
    p.update(ctx.p("classify"))
    lo, hi = ctx.system.domain
    sg = np.asarray(p.get("sigma_grid", [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]), dtype=float)
    g = p.get("t_grid", {"start": lo, "stop": min(lo + 40.0, hi - sg.max()), "step": 0.5})
    tg = _arange(g)
    if tg.size < 10:
        raise SpecError("classify needs at least 10 grid times")
    prop = ctx.prop
    fit = classify.fit_bounded_growth(prop, tg, tg)
    nk = classify.check_nonuniform_kalman(prop, tg, tg)
    cert = classify.certify_controllability(prop, tg, sg, tol=p.get("tol", 1e-8), nk=nk,
                                            threads=ctx.threads,
                                            gram_tol=p.get("gram_tol", ctx.tol or 1e-9))
    tri = classify.trifecta_check(cert, nk, prop)
    ctx.state.update(cert=cert, fit=fit, nk=nk)
    expect = p.get("expect")
    ok = (cert.verdict == expect) if expect else True
    ok = ok and tri["consistent"]
    dump_json(ctx.out / "classify.json", {"certificate": cert.to_dict(), "growth": fit.to_dict(),
                                           "trifecta": tri, "expect": expect, "pass": ok})
    cert.to_csv(ctx.out / "certificate.csv")
    return ok, ["classify.json", "certificate.csv"], {"verdict": cert.verdict, "mu": cert.mu}


def stage_min_energy(ctx: Context):
    p = ctx.p("min_energy")
    lo, _ = ctx.system.domain
    t0 = p.get("t0", lo)
    tf = p.get("tf", t0 + 1.0)
    n = ctx.system.state_dim
    x0 = np.asarray(p.get("x0", [1.0] * n), dtype=float)
    if x0.size != n:
        raise SpecError(f"x0 must have {n} entries")
    tol = ctx.default_tol("min_energy", 1e-10)
    W = gramians.gramian_W(ctx.prop, t0, tf, tol)
    u = gramians.min_energy_input(ctx.prop, t0, tf, x0, n_grid=p.get("n_grid", 401), W=W)
    _, x = gramians.simulate(ctx.prop, u, x0, t0, tf)
    end = float(np.linalg.norm(x[-1]) / max(np.linalg.norm(x0), 1e-300))
    rep = gramians.energy_report(u, W, x0)
    rel = abs(rep.energy_sq - rep.formula_energy_sq) / max(rep.formula_energy_sq, 1e-300)
    ctx.state.update(u=u, W_energy=W, x0=x0)
    ok = end <= 1e-6 and rel <= 1e-6
    dump_json(ctx.out / "min_energy.json", {"t0": t0, "tf": tf, "x0": x0, "endpoint_ratio": end,
                                             "energy_sq": rep.energy_sq,
                                             "formula_energy_sq": rep.formula_energy_sq,
                                             "relative_energy_error": rel, "pass": ok})
    u.to_csv(ctx.out / "input.csv")
    return ok, ["min_energy.json", "input.csv"], {"endpoint_ratio": end, "energy_sq": rep.energy_sq}


def stage_energy(ctx: Context):
    rep = gramians.energy_report(ctx.state["u"], ctx.state["W_energy"], ctx.state["x0"])
    ok = rep.within_bounds
    dump_json(ctx.out / "energy.json", {**rep.to_dict(), "within_bounds": ok, "pass": ok})
    return ok, ["energy.json"], {"energy_sq": rep.energy_sq}


def _riccati_L(ctx: Context):
    L = ctx.p("riccati").get("L", ctx.p("stabilize").get("L"))
    if L is None and "cert" in ctx.state and ctx.state["cert"].verdict in ("NUCC", "UCC"):
        th1, th2 = stability.theta_constants(ctx.state["cert"], ctx.state["fit"])
        L = 2.5 * (th2 + 2 * th1) + 1.0
    return float(L) if L is not None else 1.0


def _horizon(ctx: Context, stage):
    lo, hi = ctx.system.domain
    h = ctx.p(stage).get("horizon")
    return tuple(h) if h is not None else (lo, min(lo + 20.0, hi - 5.0))


def stage_riccati(ctx: Context):
    L = _riccati_L(ctx)
    hz = _horizon(ctx, "riccati")
    rs = riccati.solve_riccati(ctx.system, L, hz, tol=ctx.default_tol("riccati", 1e-9))
    gain = riccati.feedback_gain(rs, ctx.system)
    res = rs.residual(ctx.system)
    lo, _ = rs.eig_extremes()
    ok = res <= 1e-4 and bool(np.all(lo > 0))
    ctx.state.update(rs=rs, gain=gain)
    dump_json(ctx.out / "riccati.json", {**rs.to_dict(), "residual": res, "pass": ok})
    rs.to_csv(ctx.out / "riccati.csv")
    gain.to_csv(ctx.out / "gain.csv")
    return ok, ["riccati.json", "riccati.csv", "gain.csv"], {"L": L, "residual": res}


def stage_stabilize(ctx: Context):
    p = ctx.p("stabilize")
    cert, fit = ctx.state["cert"], ctx.state["fit"]
    L = _riccati_L(ctx)
    hz = p.get("horizon", ctx.p("riccati").get("horizon", _horizon(ctx, "stabilize")))
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        rep = stability.verify_theorem_T2(ctx.system, cert, fit, L=L, horizon=hz,
                                          grid_step=p.get("grid_step", 0.5))
    ly = stability.lyapunov_check(rep.riccati, rep.gain, ctx.system,
                                  n_traj=p.get("n_traj", 10), seed=ctx.seed)
    ctx.state["t2"] = rep
    ok = rep.passed and ly["pass"]
    dump_json(ctx.out / "stabilize.json", {"theorem": rep.to_dict(), "lyapunov": ly, "pass": ok})
    return ok, ["stabilize.json"], {"lambda": rep.certificate.lam,
                                    "epsilon": rep.certificate.epsilon, "L": rep.L}


def stage_spectrum(ctx: Context):
    p = ctx.p("spectrum")
    target = p.get("target", "plant")
    if target == "closed_loop":
        rep = ctx.state["t2"]
        prop, hz = rep.closed_loop, rep.horizon
        default = {"start": -2 * rep.L - 2, "stop": -rep.L + rep.theta2 + 2 * rep.theta1 + 1,
                   "step": 0.05}
    else:
        prop, hz = ctx.prop, _horizon(ctx, "spectrum")
        default = {"start": -5.0, "stop": 5.0, "step": 0.05}
    gam = _arange(p.get("gamma", default))
    est = stability.estimate_spectrum(prop, gam, hz, mode=p.get("mode", "nonuniform"),
                                      n_time=p.get("n_time", 41),
                                      full_projector=p.get("full_projector", False),
                                      threads=ctx.threads)
    out = {"target": target, "estimate": est.to_dict()}
    ok = True
    if target == "closed_loop":
        rep = ctx.state["t2"]
        bound = -rep.L + rep.theta2 + 2 * rep.theta1
        top = max((b[1] for b in est.brackets), default=-math.inf)
        above = [k for g, k in zip(gam, est.kinds) if g >= bound - 1e-12]
        ok = top <= bound + 0.1 and all(k == "stable" for k in above)
        out.update(bound=bound, spectrum_top=top)
    out["pass"] = ok
    dump_json(ctx.out / "spectrum.json", out)
    est.to_csv(ctx.out / "spectrum.csv")
    return ok, ["spectrum.json", "spectrum.csv"], {"intervals": est.intervals,
                                                   "brackets": est.brackets}


RUNNERS = {
    "transition_check": stage_transition_check, "gramian": stage_gramian,
    "classify": stage_classify, "min_energy": stage_min_energy, "energy": stage_energy,
    "riccati": stage_riccati, "stabilize": stage_stabilize, "spectrum": stage_spectrum,
}


def run(scenario: dict, out: Optional[str] = None, seed: Optional[int] = None,
        tol: Optional[float] = None, threads: int = 1) -> dict:
    """Run a validated scenario; returns the run report (also written to disk)."""
    validate_scenario(scenario)
    seed = int(seed if seed is not None else scenario.get("seed", 42))
    outdir = Path(out or scenario.get("output_dir") or "nucc_out")
    outdir.mkdir(parents=True, exist_ok=True)
    system = SystemDef.from_dict(scenario["system"])
    ctx = Context(system, outdir, seed, tol, threads, scenario.get("stage_params", {}))
    stages, timings, failed = [], [], set()
    for name in scenario["pipeline"]:
        entry = {"stage": name}
        blocked = [d for d in REQUIRES.get(name, ()) if d in failed]
        if name == "spectrum" and ctx.p("spectrum").get("target") == "closed_loop" \
                and "stabilize" in failed:
            blocked.append("stabilize")
        if blocked:
            entry.update(status="skipped", reason=f"dependency failed: {', '.join(blocked)}",
                         artifacts=[])
            failed.add(name)
            stages.append(entry)
            timings.append((name, 0.0))
            continue
        t0 = time.perf_counter()
        try:
            ok, files, summary = RUNNERS[name](ctx)
            entry.update(status="pass" if ok else "fail", artifacts=files, summary=summary)
        except (NUCCError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            ok = False
            entry.update(status="fail", artifacts=[], error=f"{type(exc).__name__}: {exc}")
        timings.append((name, time.perf_counter() - t0))
        if not ok:
            failed.add(name)
        stages.append(entry)
    report = {"scenario_hash": scenario_hash(scenario), "seed": seed, "stages": stages,
              "artifacts": sorted(f for s in stages for f in s["artifacts"]) + ["report.json",
                                                                              "timings.csv"],
              "exit_code": 0 if not failed else 1}
    dump_json(outdir / "report.json", report)
    with open(outdir / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "seconds"])
        for name, sec in timings:
            w.writerow([name, f"{sec:.3f}"])
    return report


# ---------------------------------------------------------------------------
# command line

def _threads(arg) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("NUCC_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _print_report(report: dict) -> None:
    for s in report["stages"]:
        extra = s.get("error") or s.get("reason") or json.dumps(jsonable(s.get("summary", {})),
                                                                sort_keys=True)
        print(f"{s['stage']:<17} {s['status']:<8} {extra}")
    print(f"exit code {report['exit_code']}")


def catalog_table(filter: Optional[str] = None) -> str:
    rows = [("id", "parameters", "closed form", "origin")]
    for e in catalog_entries(filter):
        rows.append((e.id, ", ".join(e.params), "yes" if e.analytic else "no", e.origin))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join(f"{r[0]:<{widths[0]}}  {r[1]:<{widths[1]}}  {r[2]:<{widths[2]}}  {r[3]}"
                     for r in rows)


def quickcheck_scenario(cat_id: str) -> dict:
    return {"system": {"catalog": cat_id},
            "pipeline": ["transition_check", "gramian", "classify", "min_energy", "energy"]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nucc", description="Controllability and "
                                     "stabilization checks for linear time-varying systems")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (overrides the scenario)")
        sp.add_argument("--seed", type=int, help="random seed (default: scenario seed or 42)")
        sp.add_argument("--tol", type=float, help="default quadrature/Riccati tolerance")
        sp.add_argument("--threads", type=int, help="worker threads (default: $NUCC_THREADS or 1)")

    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario")
    common(r)
    c = sub.add_parser("catalog", help="list catalog systems")
    c.add_argument("filter", nargs="?")
    q = sub.add_parser("quickcheck", help="run a short default pipeline on a catalog system")
    q.add_argument("catalog_id")
    common(q)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "catalog":
        print(catalog_table(args.filter))
        return 0
    try:
        if args.command == "run":
            scenario = load_scenario(args.scenario)
        else:
            scenario = quickcheck_scenario(args.catalog_id)
            validate_scenario(scenario)
        out = args.out or scenario.get("output_dir") or (
            f"nucc_quickcheck_{args.catalog_id}" if args.command == "quickcheck" else None)
        report = run(scenario, out=out, seed=args.seed, tol=args.tol,
                     threads=_threads(args.threads))
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _print_report(report)
    return report["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
