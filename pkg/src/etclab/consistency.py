"""Monte Carlo comparison of threshold-based and periodic impulsive control.

The plant is the ``n``-dimensional integrator ``dx = dv`` driven by a
standard Wiener process ``v``.  Both controllers reset the state to the
origin with an impulse: the event-triggered one whenever ``|x|^2 >= rho``
(checked after every Euler-Maruyama step), the periodic one every ``h``
seconds.  The cost is

    J = Jtilde + mu * rate,   Jtilde = lim (1/T) E int_0^T |x|^2 dt.

Closed forms used as references:

* first-passage time of the ball ``|x|^2 < rho`` from the origin: ``rho / n``;
* ``Jtilde_etc = n rho / (2 (n + 2))`` and ``Jtilde_ttc = n h / 2``, so at a
  matched rate the ratio is ``n / (n + 2)``;
* optimal threshold ``sqrt(2 mu (n + 2))`` with cost ``sqrt(2 n mu) sqrt(n/(n+2))``,
  optimal period ``sqrt(2 mu / n)`` with cost ``sqrt(2 n mu)``.

Randomness comes from one Philox stream per trajectory keyed by
``seed + (trajectory << 64)``.  Results are independent of the worker count
(``ETCLAB_THREADS``) and of the kernel backend.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .errors import ZeroTradeoff

SUBCHUNK_STEPS = 4096
REPORT_FIELDS = ["n", "mu", "rho_or_h", "Jtilde", "rate", "J", "ci_Jtilde", "ci_rate", "N", "T", "dt",
                 "seed"]


@dataclass(frozen=True)
class IntegratorModel:
    n: int = 1
    mu: float = 1.0
    noise_scale: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.mu >= 0:
            raise ValueError("mu must be non-negative")
        if not self.noise_scale >= 0:
            raise ValueError("noise_scale must be non-negative")


@dataclass(frozen=True)
class McConfig:
    trajectories: int = 100
    horizon: float = 100.0
    dt: float = 1e-4
    seed: int = 0
    batches: int = 20

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("need at least one trajectory")
        if not self.dt > 0 or not self.horizon > self.dt:
            raise ValueError("need 0 < dt < horizon")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.batches < 2:
            raise ValueError("need at least two batches")
        if self.steps_per_batch < 1:
            raise ValueError("horizon too short for the batch count")

    @property
    def steps_per_batch(self) -> int:
        return int(round(self.horizon / self.dt / self.batches))

    @property
    def effective_horizon(self) -> float:
        return self.steps_per_batch * self.batches * self.dt

    def advisories(self, mean_interval: float) -> list[str]:
        out = []
        if self.dt > 1e-3 * min(1.0, mean_interval):
            out.append(f"dt = {self.dt:g} exceeds 1e-3 * min(1, E[tau] = {mean_interval:.4g})")
        if self.effective_horizon < 100 * mean_interval:
            out.append(f"horizon {self.effective_horizon:g} shorter than 100 * E[tau]")
        return out


@dataclass(frozen=True)
class McReport:
    n: int
    mu: float
    rho_or_h: float
    Jtilde: float
    rate: float
    J: float
    ci_Jtilde: float
    ci_rate: float
    ci_J: float
    N: int
    T: float
    dt: float
    seed: int
    kind: str = "etc"
    events: int = 0
    warnings: tuple = field(default_factory=tuple)

    @property
    def mean_interval(self) -> float:
        return 1.0 / self.rate if self.rate > 0 else math.inf

    def to_dict(self) -> dict:
        d = asdict(self)
        d["warnings"] = list(self.warnings)
        return d

    def csv_row(self) -> list:
        return [repr(v) if isinstance(v, float) else v for v in (getattr(self, f) for f in REPORT_FIELDS)]


def optimal_threshold(n: int, mu: float) -> float:
    """Cost-minimising threshold on the squared norm."""
    if n < 1:
        raise ValueError("n must be positive")
    if mu == 0:
        raise ZeroTradeoff("mu = 0 makes every threshold optimal in the limit rho -> 0")
    if mu < 0:
        raise ValueError("mu must be non-negative")
    return math.sqrt(2.0 * mu * (n + 2))


def optimal_period(n: int, mu: float) -> float:
    if mu == 0:
        raise ZeroTradeoff("mu = 0 makes every period optimal in the limit h -> 0")
    return math.sqrt(2.0 * mu / n)


def predicted_costs(n: int, mu: float) -> tuple[float, float, float]:
    """Optimal event-triggered cost, optimal periodic cost and their ratio ``n / (n + 2)``."""
    if n < 1 or not mu > 0:
        raise ValueError("need n >= 1 and mu > 0")
    j_ttc = math.sqrt(2.0 * n * mu)
    ratio = n / (n + 2.0)
    return j_ttc * math.sqrt(ratio), j_ttc, ratio


def etc_state_cost(n: int, rho: float) -> float:
    return n * rho / (2.0 * (n + 2))


def ttc_state_cost(n: int, h: float) -> float:
    return n * h / 2.0


def etc_mean_interval(n: int, rho: float) -> float:
    return rho / n


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ETCLAB_THREADS", "1")))
    except ValueError:
        return 1


def _run_group(idx, model, cfg, kind, param):
    n = model.n
    G = len(idx)
    gens = [np.random.Generator(np.random.Philox(key=cfg.seed + (int(j) << 64))) for j in idx]
    X = np.zeros((G, n))
    phase = np.zeros(G, dtype=np.int64)
    scale = model.noise_scale * math.sqrt(cfg.dt)
    spb = cfg.steps_per_batch
    cost = np.zeros((G, cfg.batches))
    events = np.zeros((G, cfg.batches), dtype=np.int64)
    for b in range(cfg.batches):
        cb = np.zeros(G)
        eb = np.zeros(G, dtype=np.int64)
        done = 0
        while done < spb:
            s = min(SUBCHUNK_STEPS, spb - done)
            dW = np.empty((G, s, n))
            for j, g in enumerate(gens):
                dW[j] = g.standard_normal((s, n))
            dW *= scale
            if kind == "etc":
                kernels.etc_segment(dW, X, param, cfg.dt, cb, eb)
            else:
                kernels.ttc_segment(dW, X, param, phase, cfg.dt, cb, eb)
            done += s
        cost[:, b] = cb
        events[:, b] = eb
    return cost, events


def _simulate(model, cfg, kind, param):
    N = cfg.trajectories
    workers = min(_threads(), N)
    bounds = np.linspace(0, N, workers + 1).astype(int)
    groups = [np.arange(bounds[i], bounds[i + 1]) for i in range(workers)]
    if workers == 1:
        parts = [_run_group(groups[0], model, cfg, kind, param)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda g: _run_group(g, model, cfg, kind, param), groups))
    cost = np.concatenate([p[0] for p in parts])
    events = np.concatenate([p[1] for p in parts])
    return cost, events


def _batch_stats(values):
    B = len(values)
    mean = float(np.mean(values))
    half = float(stats.t.ppf(0.975, B - 1) * np.std(values, ddof=1) / math.sqrt(B))
    return mean, half


def _report(model, cfg, kind, param_value, cost, events, exact_rate=None, warnings=()):
    tb = cfg.steps_per_batch * cfg.dt
    denom = cfg.trajectories * tb
    jt_b = cost.sum(axis=0) / denom
    rate_b = events.sum(axis=0) / denom
    jt, ci_jt = _batch_stats(jt_b)
    if exact_rate is None:
        rate, ci_rate = _batch_stats(rate_b)
        j, ci_j = _batch_stats(jt_b + model.mu * rate_b)
    else:
        rate, ci_rate = exact_rate, 0.0
        j, ci_j = jt + model.mu * rate, ci_jt
    return McReport(n=model.n, mu=float(model.mu), rho_or_h=float(param_value), Jtilde=jt, rate=rate,
                    J=j, ci_Jtilde=ci_jt, ci_rate=ci_rate, ci_J=ci_j, N=cfg.trajectories,
                    T=cfg.effective_horizon, dt=cfg.dt, seed=cfg.seed, kind=kind,
                    events=int(events.sum()), warnings=tuple(warnings))


def simulate_etc_integrator(model: IntegratorModel, rho: float, cfg: McConfig) -> McReport:
    """Threshold-triggered resets at ``|x|^2 >= rho``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    warnings = cfg.advisories(etc_mean_interval(model.n, rho))
    if cfg.dt > rho / (100.0 * model.n):
        warnings.insert(0, f"StepTooCoarse: dt = {cfg.dt:g} > rho/(100 n) = {rho / (100 * model.n):.3g}")
    cost, events = _simulate(model, cfg, "etc", float(rho))
    return _report(model, cfg, "etc", rho, cost, events, warnings=warnings)


def simulate_ttc_integrator(model: IntegratorModel, h: float, cfg: McConfig) -> McReport:
    """Periodic resets every ``h`` seconds; ``h`` is rounded to a whole number of steps."""
    if not h > 0:
        raise ValueError("h must be positive")
    steps = max(1, int(round(h / cfg.dt)))
    h_eff = steps * cfg.dt
    warnings = cfg.advisories(h_eff)
    if abs(h_eff - h) > 1e-9 * h:
        warnings.append(f"period rounded from {h:.10g} to {h_eff:.10g}")
    cost, events = _simulate(model, cfg, "ttc", steps)
    return _report(model, cfg, "ttc", h_eff, cost, events, exact_rate=1.0 / h_eff, warnings=warnings)


@dataclass(frozen=True)
class MatchedComparison:
    etc: McReport
    ttc: McReport
    ratio: float
    ci_ratio: float
    predicted: float


def matched_comparison(model: IntegratorModel, rho: float, cfg: McConfig) -> MatchedComparison:
    """Event-triggered run, then a periodic run whose period is the empirical mean inter-event time.

    Both runs use the same random streams.
    """
    etc = simulate_etc_integrator(model, rho, cfg)
    ttc = simulate_ttc_integrator(model, etc.mean_interval, cfg)
    ratio = etc.Jtilde / ttc.Jtilde
    rel = math.hypot(etc.ci_Jtilde / etc.Jtilde, ttc.ci_Jtilde / ttc.Jtilde)
    return MatchedComparison(etc, ttc, ratio, ratio * rel, model.n / (model.n + 2.0))


def richardson_check(model: IntegratorModel, rho: float, cfg: McConfig) -> dict:
    """Rerun at half the step; the estimates should move by less than one CI half-width."""
    coarse = simulate_etc_integrator(model, rho, cfg)
    fine_cfg = McConfig(cfg.trajectories, cfg.horizon, cfg.dt / 2, cfg.seed, cfg.batches)
    fine = simulate_etc_integrator(model, rho, fine_cfg)
    dj = abs(fine.Jtilde - coarse.Jtilde)
    dr = abs(fine.rate - coarse.rate)
    return {"coarse": coarse, "fine": fine, "delta_Jtilde": dj, "delta_rate": dr,
            "ok": dj < max(coarse.ci_Jtilde, fine.ci_Jtilde) and dr < max(coarse.ci_rate, fine.ci_rate)}


# --- sample paths ------------------------------------------------------------

def sample_paths(kind: str, param: float, n: int, horizon: float, dt: float, seed: int,
                 count: int = 5, stride: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Recorded paths ``(t, X)`` with ``X`` of shape ``(count, len(t), n)``.

    Uses the same increments and arithmetic as the kernels: path ``j`` here
    is trajectory ``j`` of a Monte Carlo run with the same seed and step.
    """
    S = int(round(horizon / dt))
    out = np.empty((count, S + 1, n))
    period = max(1, int(round(param / dt))) if kind == "ttc" else 0
    for j in range(count):
        g = np.random.Generator(np.random.Philox(key=seed + (j << 64)))
        dW = np.empty((S, n))
        done = 0
        while done < S:
            s = min(SUBCHUNK_STEPS, S - done)
            dW[done:done + s] = g.standard_normal((s, n))
            done += s
        dW *= math.sqrt(dt)
        path = out[j]
        path[0] = 0.0
        pos = 0
        while pos < S:
            seg = np.cumsum(dW[pos:], axis=0)
            if kind == "etc":
                sq = seg[:, 0] * seg[:, 0]
                for i in range(1, n):
                    sq = sq + seg[:, i] * seg[:, i]
                hit = np.flatnonzero(sq >= param)
                stop = len(seg) if hit.size == 0 else hit[0] + 1
            else:
                stop = min(len(seg), period)
            path[pos + 1:pos + 1 + stop] = seg[:stop]
            if stop < len(seg) or (kind == "ttc" and stop == period):
                path[pos + stop] = 0.0
            pos += stop
    t = np.arange(S + 1) * dt
    return t[::stride], out[:, ::stride]


@dataclass(frozen=True, eq=False)
class Figure12Result:
    threshold: float
    period: float
    etc: McReport
    ttc: McReport
    t: np.ndarray
    etc_paths: np.ndarray
    ttc_paths: np.ndarray

    @property
    def ratio(self) -> float:
        return self.etc.Jtilde / self.ttc.Jtilde

    def write_bundle(self, fh, kind: str) -> None:
        paths = self.etc_paths if kind == "etc" else self.ttc_paths
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{j}" for j in range(paths.shape[0])])
        for k, tk in enumerate(self.t):
            w.writerow([repr(float(tk))] + [repr(float(v)) for v in paths[:, k, 0]])


def figure12_experiment(seed: int = 0, *, trajectories: int = 50, horizon: float = 100.0,
                        dt: float = 1e-4, path_horizon: float = 10.0, path_count: int = 5) -> Figure12Result:
    """Scalar runs with period 0.5 s and threshold ``|x| = sqrt(0.5)``.

    Both have expected inter-sample time 0.5 s; the state-cost ratio should
    be close to 1/3.
    """
    period = 0.5
    rho = period  # E[tau] = rho in one dimension
    model = IntegratorModel(1, 0.0)
    cfg = McConfig(trajectories, horizon, dt, seed)
    etc = simulate_etc_integrator(model, rho, cfg)
    ttc = simulate_ttc_integrator(model, period, cfg)
    t, pe = sample_paths("etc", rho, 1, path_horizon, dt, seed, path_count)
    _, pt = sample_paths("ttc", period, 1, path_horizon, dt, seed, path_count)
    return Figure12Result(math.sqrt(rho), period, etc, ttc, t, pe, pt)


def write_reports_csv(reports, fh) -> None:
    w = csv.writer(fh)
    w.writerow(REPORT_FIELDS)
    for r in reports:
        w.writerow(r.csv_row())
