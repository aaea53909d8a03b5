"""Hybrid sample-and-hold simulation with event localisation.

Flows are integrated with fixed-step RK4.  Inside a step the state is
reconstructed by cubic Hermite interpolation of the step end points, and a
trigger crossing is localised by bisection on that dense output.  The event
is placed at the last bracketed time where the trigger value is still
non-positive, so the rule's invariant holds on the whole closed interval.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import triggers as trg
from .errors import NumericalOverflow, ZenoDetected


@dataclass(frozen=True)
class SimConfig:
    step: float = 1e-3
    event_tolerance: float = 1e-9
    zeno_floor: float = 1e-7
    horizon: float = 10.0

    def __post_init__(self):
        if not 0 < self.event_tolerance < self.step < self.horizon:
            raise ValueError("need 0 < event_tolerance < step < horizon")
        if not self.zeno_floor > 0:
            raise ValueError("zeno_floor must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    uhat: np.ndarray
    e: np.ndarray
    g: np.ndarray | None = None  # raw trigger value per row (not written to CSV)

    def to_csv(self, path):
        n, m = self.x.shape[1], self.uhat.shape[1]
        header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"uhat_{i + 1}" for i in range(m)] \
            + [f"e_{i + 1}" for i in range(m)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self.t)):
                w.writerow([repr(float(self.t[k]))] + [repr(float(v)) for v in self.x[k]]
                           + [repr(float(v)) for v in self.uhat[k]] + [repr(float(v)) for v in self.e[k]])


@dataclass(frozen=True, eq=False)
class EventLog:
    """Sampling instants ``t_j`` (``t_0 = 0``), inter-event times and trigger values.

    ``h[j] = t[j+1] - t[j]``, so ``len(h) == len(t) - 1``.  ``states`` holds
    ``x(t_j)``.  The value logged at ``t_0`` is NaN (no crossing there).
    """

    t: np.ndarray
    h: np.ndarray
    trigger_value: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.t)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "t_j", "h_j", "trigger_value"])
            for j in range(len(self.t)):
                h = repr(float(self.h[j])) if j < len(self.h) else "nan"
                w.writerow([j, repr(float(self.t[j])), h, repr(float(self.trigger_value[j]))])


def _hermite(t0, x0, f0, t1, x1, f1, s):
    h = t1 - t0
    tau = (s - t0) / h
    tau2 = tau * tau
    tau3 = tau2 * tau
    h00 = 2 * tau3 - 3 * tau2 + 1
    h10 = tau3 - 2 * tau2 + tau
    h01 = -2 * tau3 + 3 * tau2
    h11 = tau3 - tau2
    return h00 * x0 + (h10 * h) * f0 + h01 * x1 + (h11 * h) * f1


def simulate(plant, rule, x0, cfg: SimConfig | None = None, *, record=True):
    """Closed-loop sample-and-hold run of ``plant`` under ``rule`` from ``x0``.

    Returns ``(Trajectory, EventLog)``.  ``record=False`` keeps only the
    states at step ends that coincide with events (cheaper for long runs).

    Raises
    ------
    ZenoDetected
        Two consecutive events closer than ``cfg.zeno_floor``.
    NumericalOverflow
        The state became non-finite.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _simulate(plant, rule, x0, cfg, record)


def _simulate(plant, rule, x0, cfg, record):
    cfg = cfg or SimConfig()
    x = np.array(x0, dtype=float)
    if x.shape != (plant.n,):
        raise ValueError(f"x0 must have shape ({plant.n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    kappa = plant.kappa
    value_fn = trg._raw_value
    flow = trg.flow_update

    t = 0.0
    uhat = np.asarray(kappa(x), dtype=float)
    rhs = plant.held_rhs(uhat)
    st = trg.initial_state(rule, x, t)
    ev_t, ev_v, ev_x = [0.0], [math.nan], [x.copy()]
    rows_t, rows_x, rows_u = [t], [x.copy()], [uhat.copy()]
    rows_g = [value_fn(rule, st, x, uhat - kappa(x), t)]
    h = cfg.step
    tol = cfg.event_tolerance
    T = cfg.horizon
    f0 = rhs(x)

    while t < T:
        dt = min(h, T - t)
        if T - (t + dt) < 1e-12 * max(1.0, T):
            dt = T - t
        k1 = f0
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x1 = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x1)):
            raise NumericalOverflow(f"state overflowed at t = {t + dt:.6g}")
        t1 = t + dt
        f1 = rhs(x1)
        e1 = uhat - kappa(x1)
        st1 = flow(rule, st, x1, e1, dt)
        v1 = value_fn(rule, st1, x1, e1, t1)
        if not v1 > 0:
            t, x, f0, st = t1, x1, f1, st1
            if record:
                rows_t.append(t)
                rows_x.append(x)
                rows_u.append(uhat)
                rows_g.append(v1)
            continue

        # crossing inside (t, t1]: bisect on the dense output
        lo, hi = t, t1
        x_lo, st_lo, v_lo = x, st, math.nan
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            xm = _hermite(t, x, f0, t1, x1, f1, mid)
            em = uhat - kappa(xm)
            stm = flow(rule, st, xm, em, mid - t)
            vm = value_fn(rule, stm, xm, em, mid)
            if vm > 0:
                hi = mid
            else:
                lo, x_lo, st_lo, v_lo = mid, xm, stm, vm
        if lo == t:
            v_lo = value_fn(rule, st, x, uhat - kappa(x), t)
        t_ev = lo
        if t_ev - ev_t[-1] < cfg.zeno_floor:
            raise ZenoDetected(ev_t[-1])
        x = x_lo
        uhat = np.asarray(kappa(x), dtype=float)
        rhs = plant.held_rhs(uhat)
        st = trg.jump_update(rule, st_lo, x, t_ev)
        f0 = rhs(x)
        ev_t.append(t_ev)
        ev_v.append(v_lo)
        ev_x.append(x.copy())
        if record:
            g_ev = value_fn(rule, st, x, uhat - kappa(x), t_ev)
            if rows_t[-1] == t_ev:
                rows_x[-1], rows_u[-1], rows_g[-1] = x.copy(), uhat.copy(), g_ev
            else:
                rows_t.append(t_ev)
                rows_x.append(x.copy())
                rows_u.append(uhat.copy())
                rows_g.append(g_ev)
        t = t_ev

    tt = np.array(rows_t)
    xx = np.array(rows_x)
    uu = np.array(rows_u)
    K_of = np.array([kappa(xi) for xi in xx]).reshape(len(tt), -1)
    traj = Trajectory(tt, xx, uu, uu - K_of, np.array(rows_g, dtype=float))
    et = np.array(ev_t)
    log = EventLog(et, np.diff(et), np.array(ev_v), np.array(ev_x))
    return traj, log
