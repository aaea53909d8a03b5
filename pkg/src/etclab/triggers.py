"""Event-triggering rules with a uniform evaluate / flow / jump contract.

Every rule maps the current state ``x``, the sampling-induced error
``e = u_hat - kappa(x)`` and a small per-run :class:`TriggerState` to a
scalar trigger value.  An event fires when the value becomes strictly
positive; between events the value is non-positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
import scipy.linalg as la

from .errors import NotHurwitz, ThresholdExpired
from .plants import LinearPlant


@dataclass(frozen=True)
class KinfFn:
    """Power-law class-K-infinity function ``s -> scale * s**exponent``."""

    scale: float = 1.0
    exponent: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"KinfFn scale must be positive, got {self.scale}")
        if not (self.exponent > 0 and math.isfinite(self.exponent)):
            raise ValueError(f"KinfFn exponent must be positive, got {self.exponent}")

    def __call__(self, s):
        if self.exponent == 1.0:
            return self.scale * s
        if self.exponent == 2.0:
            return self.scale * (s * s)
        return self.scale * s ** self.exponent

    def inverse(self, r):
        return (r / self.scale) ** (1.0 / self.exponent)

    @classmethod
    def linear(cls, scale=1.0):
        return cls(scale, 1.0)

    @classmethod
    def quadratic(cls, scale=1.0):
        return cls(scale, 2.0)


IDENTITY = KinfFn.linear()
SQUARE = KinfFn.quadratic()


def _check_sigma(sigma, lo_closed=False):
    ok = (0.0 <= sigma < 1.0) if lo_closed else (0.0 < sigma < 1.0)
    if not ok:
        raise ValueError(f"sigma must lie in {'[0' if lo_closed else '(0'}, 1), got {sigma}")


@dataclass(frozen=True)
class Absolute:
    """Fires when ``gamma(|e|)`` exceeds the constant ``rho``."""

    gamma: KinfFn = IDENTITY
    rho: float = 1.0
    kind = "absolute"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")


@dataclass(frozen=True)
class Relative:
    """Fires when ``gamma(|e|)`` exceeds ``sigma * alpha(|x|)``."""

    gamma: KinfFn = IDENTITY
    alpha: KinfFn = IDENTITY
    sigma: float = 0.1
    kind = "relative"

    def __post_init__(self):
        _check_sigma(self.sigma)


@dataclass(frozen=True)
class Mixed:
    """Relative rule with an additive constant: ``gamma(|e|)`` against ``sigma alpha(|x|) + rho``."""

    gamma: KinfFn = IDENTITY
    alpha: KinfFn = IDENTITY
    sigma: float = 0.1
    rho: float = 0.01
    kind = "mixed"

    def __post_init__(self):
        _check_sigma(self.sigma, lo_closed=True)
        if self.rho < 0:
            raise ValueError(f"rho must be non-negative, got {self.rho}")
        if self.sigma == 0 and self.rho == 0:
            raise ValueError("mixed rule needs sigma > 0 or rho > 0")


@dataclass(frozen=True)
class Dynamic:
    """Internal variable ``eta' = -beta(eta) + sigma alpha(|x|) - gamma(|e|)``; fires when ``eta < 0``."""

    beta: KinfFn = IDENTITY
    alpha: KinfFn = IDENTITY
    gamma: KinfFn = IDENTITY
    sigma: float = 0.1
    kind = "dynamic"

    def __post_init__(self):
        _check_sigma(self.sigma)


@dataclass(frozen=True, eq=False)
class LyapunovDecrease:
    """Fires when ``V(x) = x'Px`` exceeds ``(1 - sigma (t - t_j)) V(x(t_j))``."""

    P: np.ndarray
    sigma: float = 0.1
    kind = "lyapunov"

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        if not np.allclose(P, P.T, rtol=1e-12, atol=1e-14):
            raise ValueError("P must be symmetric")
        if np.min(np.linalg.eigvalsh(P)) <= 0:
            raise ValueError("P must be positive definite")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        _check_sigma(self.sigma)

    def V(self, x):
        return float(x @ self.P @ x)


@dataclass(frozen=True)
class LpGain:
    """Fires when ``||W(e)||_p`` on ``[t_j, t]`` exceeds ``gamma_e ||H(x)||_p``."""

    p: float = 2.0
    gamma_e: float = 0.5
    H: KinfFn = IDENTITY
    W: KinfFn = IDENTITY
    gamma_x: float | None = None
    kind = "lp_gain"

    def __post_init__(self):
        if self.p not in (1.0, 2.0, math.inf):
            raise ValueError(f"p must be 1, 2 or inf, got {self.p}")
        if not self.gamma_e > 0:
            raise ValueError("gamma_e must be positive")
        if self.gamma_x is not None and not self.gamma_e * self.gamma_x < 1.0:
            raise ValueError("small-gain condition gamma_e * gamma_x < 1 violated")


@dataclass(frozen=True)
class RedesignedRelative:
    """Relative rule with relaxed error weight ``(1 - delta_r) gamma(|e|)``."""

    gamma: KinfFn = IDENTITY
    alpha: KinfFn = IDENTITY
    sigma: float = 0.1
    delta_r: float = 0.1
    kind = "redesigned"

    def __post_init__(self):
        _check_sigma(self.sigma)
        if not 0.0 <= self.delta_r < 1.0:
            raise ValueError(f"delta_r must lie in [0, 1), got {self.delta_r}")

    def admissible(self, c: float) -> bool:
        """``delta_r < (1 - sigma) / (1 + sigma + sigma c)`` for a user-supplied constant ``c``."""
        s = self.sigma
        return 0.0 < self.delta_r < (1.0 - s) / (1.0 + s + s * c)


TriggerRule = Union[Absolute, Relative, Mixed, Dynamic, LyapunovDecrease, LpGain, RedesignedRelative]
RULE_KINDS = {cls.kind: cls for cls in
              (Absolute, Relative, Mixed, Dynamic, LyapunovDecrease, LpGain, RedesignedRelative)}


@dataclass(frozen=True, eq=False)
class TriggerState:
    """Per-run memory of a rule.

    ``acc_e``/``acc_x`` hold the integrals of ``|W(e)|^p``/``|H(x)|^p`` since
    the last event (running suprema for ``p = inf``).  ``x_prev``/``e_prev``
    are the samples at the start of the current integration sub-step;
    ``e_prev = None`` means zero error.
    """

    t_j: float
    x_j: np.ndarray
    V_j: float = 0.0
    eta: float = 0.0
    acc_e: float = 0.0
    acc_x: float = 0.0
    x_prev: np.ndarray | None = None
    e_prev: np.ndarray | None = None


def _norm(v) -> float:
    return math.sqrt(float(np.dot(v, v)))


def initial_state(rule: TriggerRule, x0, t0: float = 0.0) -> TriggerState:
    x0 = np.asarray(x0, dtype=float)
    st = TriggerState(t_j=t0, x_j=x0, eta=0.0)
    return jump_update(rule, st, x0, t0)


def _raw_value(rule, st: TriggerState, x, e, t) -> float:
    kind = rule.kind
    if kind == "relative":
        return rule.gamma(_norm(e)) - rule.sigma * rule.alpha(_norm(x))
    if kind == "absolute":
        return rule.gamma(_norm(e)) - rule.rho
    if kind == "mixed":
        return rule.gamma(_norm(e)) - (rule.sigma * rule.alpha(_norm(x)) + rule.rho)
    if kind == "dynamic":
        return -st.eta
    if kind == "lyapunov":
        return rule.V(x) - (1.0 - rule.sigma * (t - st.t_j)) * st.V_j
    if kind == "lp_gain":
        if rule.p == math.inf:
            return st.acc_e - rule.gamma_e * st.acc_x
        inv = 1.0 / rule.p
        return st.acc_e ** inv - rule.gamma_e * st.acc_x ** inv
    if kind == "redesigned":
        return (1.0 - rule.delta_r) * rule.gamma(_norm(e)) - rule.sigma * rule.alpha(_norm(x))
    raise TypeError(f"not a trigger rule: {rule!r}")


def evaluate(rule: TriggerRule, st: TriggerState, x, e, t: float) -> float:
    """Trigger value at time ``t``; an event is due when it is strictly positive.

    Raises :class:`ThresholdExpired` for the Lyapunov-decrease rule once
    ``t - t_j >= 1/sigma``.  The simulator does not go through this check:
    there the raw value is already positive at expiry, so expiry fires.
    """
    if t < st.t_j:
        raise ValueError("t precedes the last event time")
    if rule.kind == "lyapunov" and (t - st.t_j) * rule.sigma >= 1.0:
        raise ThresholdExpired(f"threshold expired {t - st.t_j:.6g} s after the last event")
    return _raw_value(rule, st, x, e, t)


def flow_update(rule: TriggerRule, st: TriggerState, x, e, dt: float) -> TriggerState:
    """Advance ``st`` over a sub-step of length ``dt`` ending at state ``x``, error ``e``.

    The dynamic variable takes one explicit Euler step from the sub-step's
    start sample; the Lp accumulators use the trapezoidal rule (running max
    for ``p = inf``).  Memoryless rules only refresh the start sample.
    """
    kind = rule.kind
    if kind == "dynamic":
        xp = st.x_prev if st.x_prev is not None else x
        ep_norm = _norm(st.e_prev) if st.e_prev is not None else 0.0
        deta = -rule.beta(st.eta) if st.eta >= 0 else rule.beta(-st.eta)
        deta += rule.sigma * rule.alpha(_norm(xp)) - rule.gamma(ep_norm)
        return replace(st, eta=st.eta + dt * deta, x_prev=x, e_prev=e)
    if kind == "lp_gain":
        we = rule.W(_norm(e))
        wx = rule.H(_norm(x))
        if rule.p == math.inf:
            return replace(st, acc_e=max(st.acc_e, we), acc_x=max(st.acc_x, wx), x_prev=x, e_prev=e)
        p = rule.p
        we_p = rule.W(_norm(st.e_prev)) ** p if st.e_prev is not None else 0.0
        wx_p = rule.H(_norm(st.x_prev)) ** p if st.x_prev is not None else wx ** p
        return replace(st,
                       acc_e=st.acc_e + 0.5 * dt * (we_p + we ** p),
                       acc_x=st.acc_x + 0.5 * dt * (wx_p + wx ** p),
                       x_prev=x, e_prev=e)
    return st


def jump_update(rule: TriggerRule, st: TriggerState, x, t: float) -> TriggerState:
    """Reset at an event: record ``t_j``, ``x_j``, ``V_j``; zero the Lp accumulators; keep ``eta``."""
    x = np.asarray(x, dtype=float)
    V_j = rule.V(x) if rule.kind == "lyapunov" else 0.0
    # e_prev = None stands for the zero error right after a sample
    return TriggerState(t_j=float(t), x_j=x, V_j=V_j, eta=st.eta, acc_e=0.0, acc_x=0.0,
                        x_prev=x, e_prev=None)


def quadratic_iss_certificate(plant: LinearPlant):
    """Quadratic ISS Lyapunov function for the emulated linear loop.

    Solves ``(A+BK)' P + P (A+BK) = -I``.  With ``e = u_hat - K x`` the
    derivative of ``V = x'Px`` is ``-|x|^2 + 2 x'PBe``; splitting the cross
    term with ``2ab <= a^2/2 + 2 b^2`` yields ``alpha(s) = s^2/2`` and
    ``gamma(s) = 2 |PB|^2 s^2``.

    Returns
    -------
    P, alpha, gamma
    """
    Acl = plant.closed_loop
    if np.max(np.linalg.eigvals(Acl).real) >= 0:
        raise NotHurwitz("closed loop A + BK is not Hurwitz")
    n = plant.n
    P = la.solve_continuous_lyapunov(Acl.T, -np.eye(n))
    P = 0.5 * (P + P.T)
    c_gamma = 2.0 * np.linalg.norm(P @ plant.B, 2) ** 2
    return P, KinfFn.quadratic(0.5), KinfFn.quadratic(c_gamma)


def rule_from_dict(spec: dict) -> TriggerRule:
    """Build a rule from ``{"kind": ..., <params>}``; K-infinity functions as ``{scale, exponent}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    cls = RULE_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown rule kind {kind!r}; known: {sorted(RULE_KINDS)}")
    kwargs = {}
    for key, val in spec.items():
        if isinstance(val, dict):
            kwargs[key] = KinfFn(float(val.get("scale", 1.0)), float(val.get("exponent", 1.0)))
        elif key == "p" and val in ("inf", "infinity"):
            kwargs[key] = math.inf
        elif isinstance(val, list):
            kwargs[key] = np.array(val, dtype=float)
        else:
            kwargs[key] = float(val) if val is not None else None
    return cls(**kwargs)
