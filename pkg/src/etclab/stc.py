"""Self-triggered sampling for linear plants.

At a sampling instant the next instant is chosen from a finite candidate
grid: the relative-threshold condition

    gamma(|K (I - G(d)) x|) >= sigma * alpha(|G(d) x|)

is evaluated exactly at each candidate ``d`` and the answer is the last
candidate before the first one at which it holds.  Ties count as triggered,
so the result never exceeds the event-triggered inter-event time unless the
condition switches on and off again between two consecutive candidates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateState, NeverTriggers, NoValidCandidate
from .plants import LinearPlant, transition_matrix
from .sampling import IetQuery, inter_event_time
from .triggers import IDENTITY, SQUARE, KinfFn

# relative slack for ties; errs on the side of "triggered"
TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class CandidateGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float).ravel()
        if t.size < 1:
            raise ValueError("candidate grid needs at least one time")
        if not np.all(t > 0) or not np.all(np.diff(t) > 0):
            raise ValueError("candidate times must be positive and strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.times)

    @classmethod
    def from_spec(cls, min: float, max: float, count: int, spacing: str = "log"):
        if spacing == "log":
            return cls(np.geomspace(min, max, count))
        if spacing == "linear":
            return cls(np.linspace(min, max, count))
        raise ValueError(f"spacing must be 'linear' or 'log', got {spacing!r}")

    @classmethod
    def default(cls, horizon: float, zeno_floor: float = 1e-7):
        return cls.from_spec(zeno_floor, horizon, 50, "log")

    def merged(self, other: "CandidateGrid") -> "CandidateGrid":
        return CandidateGrid(np.union1d(self.times, other.times))


def _functions(norm_mode):
    if norm_mode == "linear":
        return IDENTITY, IDENTITY
    if norm_mode == "quadratic":
        return SQUARE, SQUARE
    raise ValueError(f"norm_mode must be 'linear' or 'quadratic', got {norm_mode!r}")


def is_triggered(plant: LinearPlant, sigma: float, x, delta: float, norm_mode="linear",
                 gamma: KinfFn | None = None, alpha: KinfFn | None = None) -> bool:
    g_def, a_def = _functions(norm_mode)
    gamma = gamma or g_def
    alpha = alpha or a_def
    G = transition_matrix(plant, delta)
    Gx = G @ x
    lhs = gamma(float(np.linalg.norm(plant.K @ (x - Gx))))
    rhs = sigma * alpha(float(np.linalg.norm(Gx)))
    return lhs >= rhs - TIE_RTOL * max(abs(lhs), abs(rhs))


def next_sample_relative(plant: LinearPlant, sigma: float, x, grid: CandidateGrid,
                         norm_mode: str = "linear", *, gamma: KinfFn | None = None,
                         alpha: KinfFn | None = None) -> float:
    """Self-triggered choice of the next inter-sample time.

    Raises
    ------
    NoValidCandidate
        The condition already holds at the smallest candidate.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise DegenerateState("self-triggered condition undefined at the origin")
    best = None
    for d in grid.times:
        if is_triggered(plant, sigma, x, float(d), norm_mode, gamma, alpha):
            break
        best = float(d)
    if best is None:
        raise NoValidCandidate(f"triggered already at the first candidate {grid.times[0]:.6g}")
    return best


def validate_lower_bound(plant: LinearPlant, sigma: float, x, delta: float, norm_mode="linear",
                         *, delta_max: float | None = None, tol: float = 1e-9) -> bool:
    """True iff ``delta`` does not exceed the event-triggered inter-event time from ``x``.

    The comparison uses the same input-error condition as the self-triggered
    rule; a state that never triggers within the search horizon counts as
    bounded.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if delta_max is None:
        delta_max = max(10.0, 4.0 * delta)
    q = IetQuery(plant, sigma, mode=norm_mode, delta_max=delta_max, error="input")
    try:
        theta = inter_event_time(q, x)
    except NeverTriggers:
        return True
    return delta <= theta + tol


def stc_run(plant: LinearPlant, sigma: float, x0, grid: CandidateGrid, steps: int,
            norm_mode="linear"):
    """Iterate the self-triggered rule ``steps`` times from ``x0``; returns ``(times, deltas, states)``."""
    x = np.asarray(x0, dtype=float)
    t = 0.0
    times, deltas, states = [0.0], [], [x.copy()]
    for _ in range(steps):
        if not np.any(x) or not math.isfinite(float(np.linalg.norm(x))):
            break
        d = next_sample_relative(plant, sigma, x, grid, norm_mode)
        x = transition_matrix(plant, d) @ x
        t += d
        times.append(t)
        deltas.append(d)
        states.append(x.copy())
    return np.array(times), np.array(deltas), np.array(states)
