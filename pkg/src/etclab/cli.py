"""Config-file driven command line front end.

    etclab run <config.json> [--seed N] [--out DIR]
    etclab describe <kind>

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures (Zeno behaviour, overflow).  Every output file is written to a
temporary name and renamed into place, so it is either complete or absent.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import shutil
import sys
import tempfile

import jsonschema
import numpy as np

from . import consistency as mc
from . import datarate as dr
from . import plants as pl
from . import sampling as sa
from . import stc
from . import triggers as trg
from .errors import ConfigError, EtcError, NumericalError
from .simulation import SimConfig, simulate

KINDS = ("simulate", "stc", "analyze", "abstraction", "consistency", "datarate", "figure12")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 1}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": {"anyOf": [_VEC, _NUM]}, "minItems": 1}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}

PLANT_SCHEMA = {
    "oneOf": [
        {"type": "object", "properties": {"catalog": {"type": "string"}}, "required": ["catalog"],
         "additionalProperties": False},
        {"type": "object", "properties": {"A": _MAT, "B": _MAT, "K": _MAT}, "required": ["A", "B", "K"],
         "additionalProperties": False},
    ]
}
_KINF = {"type": "object", "properties": {"scale": _POS, "exponent": _POS}, "additionalProperties": False}
RULE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": sorted(trg.RULE_KINDS)},
        "gamma": _KINF, "alpha": _KINF, "beta": _KINF, "H": _KINF, "W": _KINF,
        "sigma": _NUM, "rho": _NUM, "delta_r": _NUM, "gamma_e": _NUM, "gamma_x": _NUM,
        "p": {"anyOf": [_NUM, {"enum": ["inf", "infinity"]}]},
        "P": _MAT,
    },
    "required": ["kind"],
    "additionalProperties": False,
}


def _params(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_GRID = _params({"min": _POS, "max": _POS, "count": _INT, "spacing": {"enum": ["linear", "log"]}},
                ["min", "max", "count"])

PARAM_SCHEMAS = {
    "simulate": _params({"x0": _VEC, "step": _POS, "event_tolerance": _POS, "zeno_floor": _POS,
                         "horizon": _POS}, ["x0"]),
    "stc": _params({"x0": _VEC, "sigma": _POS, "steps": _INT, "norm_mode": {"enum": ["linear", "quadratic"]},
                    "grid": _GRID}, ["x0", "sigma"]),
    "analyze": _params({"sigma": _POS, "mode": {"enum": ["linear", "quadratic"]},
                        "error": {"enum": ["state", "input"]}, "delta_max": _POS, "directions": _INT,
                        "fixed_point_grid": _INT}, ["sigma"]),
    "abstraction": _params({"sigma": _POS, "mode": {"enum": ["linear", "quadratic"]},
                            "error": {"enum": ["state", "input"]}, "delta_max": _POS, "regions": _INT,
                            "rays_per_region": _INT, "delta_samples": _INT}, ["sigma", "regions"]),
    "consistency": _params({"n": _INT, "mu": {"type": "number", "minimum": 0}, "rho": _POS,
                            "trajectories": _INT, "horizon": _POS, "dt": _POS, "batches": {"type": "integer",
                                                                                           "minimum": 2}},
                           ["n", "mu"]),
    "datarate": _params({"A": _NUM, "B": _NUM, "K": _NUM, "delta_bar": {"type": "number", "minimum": 0},
                         "nu": _POS, "rho0": _POS, "psi": {"type": "number", "minimum": 0}, "v0": _POS,
                         "horizon": _POS, "delay": {"enum": ["zero", "uniform", "max"]},
                         "correction": {"enum": ["worst", "midpoint"]}, "z0": _NUM,
                         "runs": _INT}, ["A", "B", "K", "delta_bar", "nu", "rho0"]),
    "figure12": _params({"trajectories": _INT, "horizon": _POS, "dt": _POS, "path_horizon": _POS,
                         "path_count": _INT}),
}

NEEDS = {"simulate": ("plant", "rule"), "stc": ("plant",), "analyze": ("plant",), "abstraction": ("plant",)}


def config_schema(kind: str | None = None) -> dict:
    experiment = {"enum": list(KINDS)} if kind is None else {"const": kind}
    schema = {
        "type": "object",
        "properties": {
            "experiment": experiment,
            "seed": _SEED,
            "output_dir": {"type": "string"},
            "plant": PLANT_SCHEMA,
            "rule": RULE_SCHEMA,
            "params": {"type": "object"} if kind is None else PARAM_SCHEMAS[kind],
        },
        "required": ["experiment"] + list(NEEDS.get(kind, ())),
        "additionalProperties": False,
    }
    return schema


DESCRIPTIONS = {
    "simulate": "Hybrid sample-and-hold run of a plant under an event-triggering rule; writes the "
                "trajectory, the event log and a gnuplot script.",
    "stc": "Self-triggered sampling: the next instant is the last grid candidate before the relative "
           "condition gamma(|K(I-G(d))x|) >= sigma alpha(|G(d)x|) holds.",
    "analyze": "Inter-event-time map theta(x) of the relative rule on a fan of directions, the planar "
               "eigenstructure classification with its small-sigma limits, and the fixed points of the "
               "angle map.",
    "abstraction": "Conic partition of the plane with sampled inter-event bounds per sector and the "
                   "sector-to-sector transition relation, as CSV and a DOT graph.",
    "consistency": "Monte Carlo of the Wiener-driven integrator with impulsive resets: threshold "
                   "|x|^2 >= rho (default rho* = sqrt(2 mu (n+2))) against periodic resets at the matched "
                   "rate; the state-cost ratio is compared with n/(n+2).",
    "datarate": "Periodic minimum rate sum(Re lambda+)/ln 2, the event-triggered delay-dependent lower "
                "bound, the break-even delay ln(1 + nu (2 rho0 + 1))/A, and a scalar channel simulation.",
    "figure12": "Scalar comparison at matched expected inter-event time 0.5 s: period 0.5 s versus the "
                "threshold |x| = sqrt(0.5) = 0.7071; sample-path bundles and both state costs.",
}


def describe(kind: str) -> str:
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; known: {', '.join(KINDS)}")
    return f"{kind}: {DESCRIPTIONS[kind]}\n\nconfig schema:\n{json.dumps(config_schema(kind), indent=2)}\n"


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    try:
        jsonschema.validate(cfg, config_schema())
        jsonschema.validate(cfg, config_schema(cfg["experiment"]))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


# --- output helpers ------------------------------------------------------------

@contextlib.contextmanager
def atomic_path(path: str):
    """Yield a temporary path next to ``path``; rename it into place on success."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@contextlib.contextmanager
def atomic_open(path: str):
    with atomic_path(path) as tmp, open(tmp, "w", newline="", encoding="utf-8") as fh:
        yield fh


def _write_text(path, text):
    with atomic_open(path) as fh:
        fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


# --- builders ------------------------------------------------------------------

def build_plant(spec: dict):
    if "catalog" in spec:
        return pl.get_plant(spec["catalog"])
    try:
        return pl.LinearPlant(spec["A"], spec["B"], spec["K"])
    except ValueError as exc:
        raise ConfigError(f"plant: {exc}") from exc


def _linear(plant):
    if not isinstance(plant, pl.LinearPlant):
        raise ConfigError("this experiment needs a linear plant")
    return plant


def build_rule(spec: dict):
    try:
        return trg.rule_from_dict(spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"rule: {exc}") from exc


def _guard(fn, *args, **kw):
    """Call a constructor and turn parameter errors into configuration errors."""
    try:
        return fn(*args, **kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, EtcError) and not isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# --- experiments -----------------------------------------------------------------

def _run_simulate(cfg, out, seed):
    plant = build_plant(cfg["plant"])
    rule = build_rule(cfg["rule"])
    p = cfg.get("params", {})
    sim_cfg = _guard(SimConfig, **{k: p[k] for k in ("step", "event_tolerance", "zeno_floor", "horizon")
                                   if k in p})
    x0 = np.array(p["x0"], dtype=float)
    if x0.shape != (plant.n,):
        raise ConfigError(f"params/x0 must have length {plant.n}")
    traj, log = simulate(plant, rule, x0, sim_cfg)
    with atomic_path(os.path.join(out, "trajectory.csv")) as tmp:
        traj.to_csv(tmp)
    with atomic_path(os.path.join(out, "events.csv")) as tmp:
        log.to_csv(tmp)
    xs = " ".join(f"'trajectory.csv' using 1:{i + 2} with lines title 'x_{i + 1}'," for i in range(plant.n))
    _write_text(os.path.join(out, "plot.gp"),
                "set datafile separator ','\nset key autotitle columnhead\n"
                "set multiplot layout 2,1\nset xlabel 't'\n"
                f"plot {xs.rstrip(',')}\n"
                "set ylabel 'h_j'\nplot 'events.csv' using 2:3 with impulses title 'inter-event time'\n"
                "unset multiplot\n")
    h = log.h
    mean_h = float(np.mean(h)) if len(h) else math.nan
    min_h = float(np.min(h)) if len(h) else math.nan
    return f"simulate: {len(log) - 1} events over {sim_cfg.horizon:g} s, mean h {mean_h:.6g}, min h {min_h:.6g}"


def _run_stc(cfg, out, seed):
    plant = _linear(build_plant(cfg["plant"]))
    p = cfg["params"]
    g = p.get("grid")
    grid = _guard(stc.CandidateGrid.from_spec, g["min"], g["max"], g["count"], g.get("spacing", "log")) \
        if g else stc.CandidateGrid.default(10.0)
    times, deltas, states = _guard(stc.stc_run, plant, p["sigma"], p["x0"], grid, p.get("steps", 50),
                                   p.get("norm_mode", "linear"))
    with atomic_open(os.path.join(out, "stc.csv")) as fh:
        fh.write(",".join(["j", "t_j", "delta_j"] + [f"x_{i + 1}" for i in range(plant.n)]) + "\n")
        for j in range(len(times)):
            d = repr(float(deltas[j])) if j < len(deltas) else "nan"
            fh.write(",".join([str(j), repr(float(times[j])), d] + [repr(float(v)) for v in states[j]]) + "\n")
    mean_d = float(np.mean(deltas)) if len(deltas) else math.nan
    return f"stc: {len(deltas)} samples, mean delta {mean_d:.6g}, final |x| {float(np.linalg.norm(states[-1])):.6g}"


def _query(plant, p):
    return _guard(sa.IetQuery, plant, p["sigma"], mode=p.get("mode", "quadratic"),
                  delta_max=p.get("delta_max", 10.0), error=p.get("error", "state"))


def _run_analyze(cfg, out, seed):
    plant = _linear(build_plant(cfg["plant"]))
    p = cfg["params"]
    q = _query(plant, p)
    count = p.get("directions", 180)
    summary = {"sigma": q.sigma, "mode": q.mode, "error": q.error}
    if plant.n == 2:
        phis = np.linspace(0.0, math.pi, count, endpoint=False)
        X = np.vstack([np.cos(phis), np.sin(phis)])
    else:
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((plant.n, count))
        X /= np.linalg.norm(X, axis=0)
        phis = np.full(count, math.nan)
    theta = sa.inter_event_times(q, X)
    with atomic_open(os.path.join(out, "iet.csv")) as fh:
        fh.write(",".join(["phi"] + [f"x_{i + 1}" for i in range(plant.n)] + ["theta"]) + "\n")
        for k in range(count):
            fh.write(",".join([repr(float(phis[k]))] + [repr(float(v)) for v in X[:, k]]
                              + [repr(float(theta[k]))]) + "\n")
    finite = theta[np.isfinite(theta)]
    summary["theta_min"] = float(finite.min()) if finite.size else math.inf
    summary["theta_max"] = float(finite.max()) if finite.size else math.inf
    if plant.n == 2:
        with contextlib.suppress(EtcError):
            pred = sa.classify_planar(plant, q.sigma_linear)
            summary["eigen_class"] = pred.eigen_class
            summary["limits"] = list(pred.limits)
            summary["period"] = pred.period
        scan = sa.find_fixed_points(plant, q, p.get("fixed_point_grid", 360))
        summary["identity_map"] = scan.identity
        summary["fixed_points"] = [{"angle": fp.angle, "multiplier": fp.multiplier, "stable": fp.stable}
                                   for fp in scan.points]
    _write_json(os.path.join(out, "analysis.json"), summary)
    _write_text(os.path.join(out, "plot.gp"),
                "set datafile separator ','\nset xlabel 'phi'\nset ylabel 'theta'\n"
                f"plot 'iet.csv' using 1:{plant.n + 2} with lines title 'theta(phi)'\n")
    fp = summary.get("fixed_points", [])
    return (f"analyze: theta in [{summary['theta_min']:.6g}, {summary['theta_max']:.6g}] over {count} "
            f"directions, {len(fp)} angle-map fixed points")


def _run_abstraction(cfg, out, seed):
    plant = _linear(build_plant(cfg["plant"]))
    p = cfg["params"]
    q = _query(plant, p)
    a = _guard(sa.build_abstraction, plant, q, p["regions"], p.get("rays_per_region", 16),
               p.get("delta_samples", 16))
    with atomic_path(os.path.join(out, "regions.csv")) as tmp:
        a.to_csv(tmp)
    _write_text(os.path.join(out, "abstraction.dot"), sa.export_dot(a))
    return (f"abstraction: {a.n_regions} regions, {len(a.transitions)} transitions, "
            f"h in [{float(np.nanmin(a.h_lo)):.6g}, {float(np.max(a.h_hi)):.6g}]")


def _run_consistency(cfg, out, seed):
    p = cfg["params"]
    model = _guard(mc.IntegratorModel, p["n"], p["mu"])
    if "rho" in p:
        rho = p["rho"]
    elif model.mu > 0:
        rho = mc.optimal_threshold(model.n, model.mu)
    else:
        raise ConfigError("params/rho is required when mu = 0")
    mcfg = _guard(mc.McConfig, p.get("trajectories", 100), p.get("horizon", 100.0), p.get("dt", 1e-4), seed,
                  p.get("batches", 20))
    cmp_ = mc.matched_comparison(model, rho, mcfg)
    with atomic_open(os.path.join(out, "reports.csv")) as fh:
        mc.write_reports_csv([cmp_.etc, cmp_.ttc], fh)
    _write_json(os.path.join(out, "report.json"),
                {"etc": cmp_.etc.to_dict(), "ttc": cmp_.ttc.to_dict(), "ratio": cmp_.ratio,
                 "ci_ratio": cmp_.ci_ratio, "predicted_ratio": cmp_.predicted})
    return (f"consistency: n={model.n} mu={model.mu:g} rho={rho:.4f} Jtilde_etc={cmp_.etc.Jtilde:.4f} "
            f"Jtilde_ttc={cmp_.ttc.Jtilde:.4f} J_etc={cmp_.etc.J:.4f} ratio={cmp_.ratio:.4f} "
            f"+- {cmp_.ci_ratio:.4f} (predicted {cmp_.predicted:.4f})")


def _run_datarate(cfg, out, seed):
    p = cfg["params"]
    ch = _guard(dr.ChannelSpec, p["delta_bar"], p["nu"], p["rho0"], p.get("psi", 0.0), p.get("v0", 1.0))
    rows = []
    reports = []
    for r in range(p.get("runs", 1)):
        rep = _guard(dr.simulate_scalar_channel, p["A"], p["B"], p["K"], ch, horizon=p.get("horizon", 20.0),
                     delay_draw=p.get("delay", "uniform"), seed=seed + r, z0=p.get("z0"),
                     correction=p.get("correction", "worst"))
        reports.append(rep)
        rows.append(dr.sweep_row(p["A"], ch, rep))
    with atomic_open(os.path.join(out, "sweep.csv")) as fh:
        dr.write_sweep_csv(rows, fh)
    ok = all(bool(np.all(r.contraction_holds(ch))) for r in reports)
    rep = reports[0]
    be = f"{rep.breakeven:.6g}" if math.isfinite(rep.breakeven) else "n/a"
    mean_rate = float(np.mean([r.empirical_rate for r in reports]))
    return (f"datarate: r_ttc={rep.r_ttc:.6g} r_etc_bound={rep.r_etc_bound:.6g} breakeven={be} "
            f"empirical_rate={mean_rate:.6g} bits/s over {len(reports)} run(s), contraction "
            f"{'held' if ok else 'VIOLATED'}")


def _run_figure12(cfg, out, seed):
    p = cfg.get("params", {})
    res = _guard(mc.figure12_experiment, seed, trajectories=p.get("trajectories", 50),
                 horizon=p.get("horizon", 100.0), dt=p.get("dt", 1e-4), path_horizon=p.get("path_horizon", 10.0),
                 path_count=p.get("path_count", 5))
    with atomic_open(os.path.join(out, "etc_paths.csv")) as fh:
        res.write_bundle(fh, "etc")
    with atomic_open(os.path.join(out, "ttc_paths.csv")) as fh:
        res.write_bundle(fh, "ttc")
    with atomic_open(os.path.join(out, "reports.csv")) as fh:
        mc.write_reports_csv([res.etc, res.ttc], fh)
    k = res.etc_paths.shape[0]
    cols = ", ".join(f"'{{f}}' using 1:{j + 2} with lines notitle" for j in range(k))
    _write_text(os.path.join(out, "plot.gp"),
                "set datafile separator ','\nset multiplot layout 2,1\nset xlabel 't'\n"
                f"set title 'periodic, h = {res.period:g} s'\n"
                + "plot " + cols.replace("{f}", "ttc_paths.csv") + "\n"
                f"set title 'threshold |x| = {res.threshold:.4f}'\n"
                f"plot {res.threshold!r} lw 2 notitle, {-res.threshold!r} lw 2 notitle, "
                + cols.replace("{f}", "etc_paths.csv") + "\nunset multiplot\n")
    return (f"figure12: threshold +-{res.threshold:.4f} period {res.period:g} s "
            f"Jtilde_etc={res.etc.Jtilde:.4f} Jtilde_ttc={res.ttc.Jtilde:.4f} ratio={res.ratio:.4f} "
            f"etc_rate={res.etc.rate:.4f}/s")


RUNNERS = {"simulate": _run_simulate, "stc": _run_stc, "analyze": _run_analyze, "abstraction": _run_abstraction,
           "consistency": _run_consistency, "datarate": _run_datarate, "figure12": _run_figure12}


def run(config_path: str, seed: int | None = None, out: str | None = None) -> str:
    """Execute one experiment; returns the summary line."""
    cfg = load_config(config_path)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    out = out or cfg.get("output_dir") or "."
    kind = cfg["experiment"]
    # compute into a private directory; publish only after success
    staging = _Staging(out)
    try:
        summary = RUNNERS[kind](cfg, staging.path, seed)
        staging.commit()
    finally:
        staging.cleanup()
    return summary


class _Staging:
    """Private directory collecting outputs; files are renamed into ``out`` on commit."""

    def __init__(self, out):
        self.out = out
        self.path = tempfile.mkdtemp(prefix=".etclab-")

    def commit(self):
        os.makedirs(self.out, exist_ok=True)
        for name in sorted(os.listdir(self.path)):
            with atomic_path(os.path.join(self.out, name)) as tmp:
                shutil.copyfile(os.path.join(self.path, name), tmp)

    def cleanup(self):
        for name in os.listdir(self.path):
            os.unlink(os.path.join(self.path, name))
        os.rmdir(self.path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="etclab", description="Event-based control experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_desc = sub.add_parser("describe", help="print the config schema of an experiment kind")
    p_desc.add_argument("kind")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.command == "describe":
            sys.stdout.write(describe(args.kind))
            return 0
        print(run(args.config, args.seed, args.out))
        return 0
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except EtcError as exc:
        # invalid inputs (ValueError family) are configuration problems
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 3


if __name__ == "__main__":
    sys.exit(main())
