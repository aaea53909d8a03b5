"""Information access rates for stabilisation over a rate-limited channel.

All rates are in bits per second.  The event-triggered lower bound mixes a
natural logarithm in its denominator with a logarithm in its numerator; the
numerator is taken base 2 here (see :func:`_bits_log`), which makes the
break-even condition against the periodic rate exact.

The scalar simulator tracks the estimation error ``z = x - xhat``, which
obeys ``dz/dt = A z`` between receptions, together with the plant state.
Between events everything evolves in closed form, so event times are exact
up to floating point.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import NumericalFailure, QuantizerTooCoarse, Unsupported

LN2 = math.log(2.0)


def _bits_log(x: float) -> float:
    """Logarithm used for the information counted per event (base 2)."""
    return math.log2(x)


def ttc_min_rate(A) -> float:
    """Minimum rate for periodic stabilisation: unstable real parts summed, over ``ln 2``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1] or not np.all(np.isfinite(A)):
        raise ValueError("A must be a finite square matrix")
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    re = lam.real
    return float(np.sum(re[re > 0])) / LN2


def etc_rate_lower_bound(A: float, psi: float, nu: float, rho0: float, delta_bar: float) -> float:
    """Worst-case necessary rate for the event-triggered scheme with delays up to ``delta_bar``."""
    if not nu > 1:
        raise ValueError("nu must exceed 1")
    if not 0 < rho0 < 1:
        raise ValueError("rho0 must lie in (0, 1)")
    if psi < 0 or delta_bar < 0:
        raise ValueError("psi and delta_bar must be non-negative")
    growth = math.expm1(A * delta_bar)
    if growth <= 0:
        return 0.0
    info = _bits_log(growth / (rho0 * math.exp(-psi * delta_bar)))
    if info <= 0:
        return 0.0
    denom = math.log(nu) + math.log(2.0 + math.exp(psi * delta_bar) / rho0)
    return max(0.0, (A + psi) / denom * info)


def breakeven_delay(A: float, nu: float, rho0: float) -> float:
    """Delay bound beyond which the event-triggered necessary rate exceeds the periodic one."""
    if not A > 0:
        raise Unsupported("break-even delay is defined for A > 0 only")
    return math.log1p(nu * (2.0 * rho0 + 1.0)) / A


def bits_per_event(nu: float) -> int:
    """``ceil(log2(ceil(nu)))`` magnitude bits plus one sign bit."""
    cells = math.ceil(nu)
    return max(0, math.ceil(math.log2(cells))) + 1


@dataclass(frozen=True)
class ChannelSpec:
    delta_bar: float
    nu: float
    rho0: float
    psi: float = 0.0
    v0: float = 1.0

    def __post_init__(self):
        if self.delta_bar < 0:
            raise ValueError("delta_bar must be non-negative")
        if not self.nu > 1:
            raise ValueError("nu must exceed 1")
        if not 0 < self.rho0 < 1:
            raise ValueError("rho0 must lie in (0, 1)")
        if self.psi < 0:
            raise ValueError("psi must be non-negative")
        if not self.v0 > 0:
            raise ValueError("v0 must be positive")
        if not self.contraction < 1:
            raise ValueError("rho0 * exp(-psi * delta_bar) must be below 1")

    @property
    def contraction(self) -> float:
        return self.rho0 * math.exp(-self.psi * self.delta_bar)

    def threshold(self, t):
        return self.v0 * np.exp(-self.psi * np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class RateReport:
    """Outcome of one channel run.

    ``send_times[j]`` and ``receive_times[j]`` belong to packet ``j``;
    ``z_peak[j]`` is ``|z|`` just before reception and ``z_post[j]`` just
    after.  ``v_send[j]`` is the threshold at the send time.
    """

    bits: int
    events: int
    horizon: float
    r_ttc: float
    r_etc_bound: float
    breakeven: float
    send_times: np.ndarray
    receive_times: np.ndarray
    v_send: np.ndarray
    z_peak: np.ndarray
    z_post: np.ndarray
    x_at_receive: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def empirical_rate(self) -> float:
        return self.bits / self.horizon

    def contraction_holds(self, ch: ChannelSpec, rtol=1e-12) -> np.ndarray:
        bound = ch.contraction * self.v_send
        return self.z_post <= bound * (1 + rtol)

    def growth_holds(self, A: float, ch: ChannelSpec, rtol=1e-12) -> np.ndarray:
        bound = math.exp(max(A, 0.0) * ch.delta_bar) * self.v_send
        return self.z_peak <= bound * (1 + rtol)


def _delay_sampler(delay_draw, delta_bar, rng):
    if callable(delay_draw):
        def draw():
            d = float(delay_draw(rng))
            if not 0 <= d <= delta_bar:
                raise ValueError(f"drawn delay {d} outside [0, {delta_bar}]")
            return d
        return draw
    if delay_draw == "zero":
        return lambda: 0.0
    if delay_draw == "max":
        return lambda: delta_bar
    if delay_draw == "uniform":
        return lambda: float(rng.uniform(0.0, delta_bar))
    raise ValueError(f"unknown delay distribution {delay_draw!r}")


def simulate_scalar_channel(A: float, B: float, K: float, ch: ChannelSpec, *, horizon: float,
                            delay_draw="uniform", seed: int = 0, z0: float | None = None,
                            x0: float = 1.0, correction="worst", max_events=1_000_000) -> RateReport:
    """Event-triggered transmission of a scalar plant state over a delayed, quantised channel.

    ``correction="worst"`` leaves the largest post-reception error the
    contraction allows (``rho0 exp(-psi delta_bar) v(t_send)``, sign kept);
    ``correction="midpoint"`` uses the midpoint of the quantiser cell that
    contains the error, with ``ceil(nu)`` cells spanning the error's
    reachable magnitudes.

    Raises
    ------
    QuantizerTooCoarse
        Half a cell of the ``ceil(nu)``-cell partition exceeds the allowed
        post-reception error.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if correction not in ("worst", "midpoint"):
        raise ValueError("correction must be 'worst' or 'midpoint'")
    if A + B * K >= 0:
        raise Unsupported("closed loop a + b k must be negative")
    cells = math.ceil(ch.nu)
    spread = math.expm1(max(A, 0.0) * ch.delta_bar)
    if 0.5 * spread / cells > ch.contraction:
        raise QuantizerTooCoarse(
            f"{cells} cells leave half-width {0.5 * spread / cells:.4g} > {ch.contraction:.4g} (relative)")

    rng = np.random.default_rng(seed)
    draw = _delay_sampler(delay_draw, ch.delta_bar, rng)
    M = np.array([[A + B * K, -B * K], [0.0, A]])

    def advance(state, dt):
        return la.expm(M * dt) @ state

    state = np.array([x0, ch.v0 if z0 is None else float(z0)])
    t = 0.0
    rate = A + ch.psi
    bpe = bits_per_event(ch.nu)
    sends, recvs, vs, peaks, posts, xs = [], [], [], [], [], []
    while len(sends) < max_events:
        z, v = abs(state[1]), ch.v0 * math.exp(-ch.psi * t)
        if z >= v:
            s = 0.0
        elif z == 0.0 or rate <= 0:
            break
        else:
            s = math.log(v / z) / rate
        t_s = t + s
        if t_s > horizon:
            break
        state = advance(state, s)
        v_s = ch.v0 * math.exp(-ch.psi * t_s)
        d = draw()
        t_c = t_s + d
        state = advance(state, d)
        zc = state[1]
        sgn = 1.0 if zc >= 0 else -1.0
        if correction == "worst":
            z_new = sgn * ch.contraction * v_s
        else:
            lo, hi = v_s, v_s * math.exp(max(A, 0.0) * ch.delta_bar)
            if hi == lo:
                z_new = 0.0
            else:
                w = (hi - lo) / cells
                k = min(cells - 1, int((abs(zc) - lo) // w))
                z_new = abs(zc) - (lo + (k + 0.5) * w)
                z_new *= sgn
        state = np.array([state[0], z_new])
        sends.append(t_s)
        recvs.append(t_c)
        vs.append(v_s)
        peaks.append(abs(zc))
        posts.append(abs(z_new))
        xs.append(state[0])
        t = t_c
        if not np.all(np.isfinite(state)):
            raise NumericalFailure("channel state became non-finite")
        if t > horizon:
            break

    recvs_arr = np.array(recvs)
    received = int(np.sum(recvs_arr <= horizon)) if recvs else 0
    return RateReport(
        bits=received * bpe,
        events=len(sends),
        horizon=float(horizon),
        r_ttc=ttc_min_rate([[A]]),
        r_etc_bound=etc_rate_lower_bound(A, ch.psi, ch.nu, ch.rho0, ch.delta_bar),
        breakeven=breakeven_delay(A, ch.nu, ch.rho0) if A > 0 else math.nan,
        send_times=np.array(sends),
        receive_times=recvs_arr,
        v_send=np.array(vs),
        z_peak=np.array(peaks),
        z_post=np.array(posts),
        x_at_receive=np.array(xs),
    )


SWEEP_COLUMNS = ["A", "psi", "nu", "rho0", "delta_bar", "r_ttc", "r_etc_bound", "breakeven",
                 "empirical_rate", "events", "bits"]


def sweep_row(A, ch: ChannelSpec, rep: RateReport) -> dict:
    return {"A": A, "psi": ch.psi, "nu": ch.nu, "rho0": ch.rho0, "delta_bar": ch.delta_bar,
            "r_ttc": rep.r_ttc, "r_etc_bound": rep.r_etc_bound, "breakeven": rep.breakeven,
            "empirical_rate": rep.empirical_rate, "events": rep.events, "bits": rep.bits}


def write_sweep_csv(rows, fh) -> None:
    w = csv.writer(fh)
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], int) else repr(float(r[c])) for c in SWEEP_COLUMNS])
