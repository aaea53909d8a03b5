"""Inter-event-time analysis for linear plants under the relative threshold rule.

For a linear loop the state between samples is ``x(t_j + d) = G(d) x(t_j)``
and the relative rule fires at the first root of

* quadratic mode: ``g(d) = |err(d)|^2 - sigma |G(d) x|^2``
  (with state error this is ``x' M(d) x``,
  ``M(d) = (1 - sigma) G'G - (G' + G) + I``);
* linear mode: ``g(d) = |err(d)| - sigma |G(d) x|``,

where ``err(d) = (I - G(d)) x`` ("state" error) or ``K (I - G(d)) x``
("input" error, the quantity the simulator and STC monitor).  The two
coincide whenever ``K'K = I``.  Quadratic mode with ``sigma_q`` has the same
roots as linear mode with ``sigma_l = sqrt(sigma_q)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateState, NeverTriggers, SingularDirection, Unsupported
from .plants import LinearPlant, transition_matrix, transition_stack

BISECTION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class IetQuery:
    """A relative-rule inter-event-time question about one linear plant.

    ``scan_step`` defaults to ``delta_max / 10**4``.  The transition
    matrices on the scan grid are computed once and cached.
    """

    plant: LinearPlant
    sigma: float
    mode: str = "quadratic"
    delta_max: float = 10.0
    scan_step: float | None = None
    error: str = "state"

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.mode not in ("linear", "quadratic"):
            raise ValueError(f"mode must be 'linear' or 'quadratic', got {self.mode!r}")
        if self.error not in ("state", "input"):
            raise ValueError(f"error must be 'state' or 'input', got {self.error!r}")
        if self.scan_step is None:
            object.__setattr__(self, "scan_step", self.delta_max / 1e4)
        if not self.delta_max > self.scan_step > 0:
            raise ValueError("need delta_max > scan_step > 0")

    @cached_property
    def grid(self) -> np.ndarray:
        count = int(math.ceil(self.delta_max / self.scan_step - 1e-9))
        return np.arange(count + 1) * self.scan_step

    @cached_property
    def G_stack(self) -> np.ndarray:
        return transition_stack(self.plant, self.scan_step, len(self.grid) - 1)

    @property
    def sigma_linear(self) -> float:
        return self.sigma if self.mode == "linear" else math.sqrt(self.sigma)

    def g(self, delta: float, x) -> float:
        """Triggering function at a single delay, with the exact ``G(delta)``."""
        G = transition_matrix(self.plant, delta)
        return float(self._g_from(G[None], np.asarray(x, dtype=float)[:, None])[0, 0])

    def _g_from(self, Gs, X):
        # Gs: (N, n, n), X: (n, M) -> (N, M)
        GX = Gs @ X
        D = X[None] - GX
        if self.error == "input":
            D = self.plant.K @ D
        err2 = np.einsum("kim,kim->km", D, D)
        st2 = np.einsum("kim,kim->km", GX, GX)
        if self.mode == "quadratic":
            return err2 - self.sigma * st2
        return np.sqrt(err2) - self.sigma * np.sqrt(st2)


def _bisect(q: IetQuery, x, lo, hi):
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if q.g(mid, x) >= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def inter_event_times(q: IetQuery, X, *, never=math.inf) -> np.ndarray:
    """Vectorised :func:`inter_event_time` over the columns of ``X`` (shape ``(n, M)``).

    States that never trigger within ``delta_max`` get ``never``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise DegenerateState("inter-event time undefined at the origin")
    out = np.empty(X.shape[1])
    grid = q.grid
    chunk = max(1, 2_000_000 // (len(grid) * X.shape[0]))
    for c0 in range(0, X.shape[1], chunk):
        Xc = X[:, c0:c0 + chunk]
        vals = q._g_from(q.G_stack, Xc)
        if np.any(vals[0] >= 0):
            raise AssertionError("triggering function must be negative at delta = 0")
        pos = vals >= 0.0
        first = np.argmax(pos, axis=0)
        for k, idx in enumerate(first):
            if not pos[idx, k]:
                out[c0 + k] = never
            else:
                out[c0 + k] = _bisect(q, Xc[:, k], grid[idx - 1], grid[idx])
    return out


def inter_event_time(q: IetQuery, x) -> float:
    """Next inter-event time from state ``x``: the first root of the triggering function.

    Raises
    ------
    NeverTriggers
        No sign change up to ``q.delta_max``.
    DegenerateState
        ``x = 0``.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise DegenerateState("inter-event time undefined at the origin")
    val = inter_event_times(q, x, never=math.nan)[0]
    if math.isnan(val):
        raise NeverTriggers(f"no trigger within delta_max = {q.delta_max}")
    return float(val)


def ray_invariance_check(q: IetQuery, x, scales, tol=1e-8) -> bool:
    x = np.asarray(x, dtype=float)
    vals = []
    for c in scales:
        if not c > 0:
            raise ValueError("scales must be positive")
        try:
            vals.append(inter_event_time(q, c * x))
        except NeverTriggers:
            vals.append(math.inf)
    ref = vals[0]
    for v in vals[1:]:
        if math.isinf(ref) or math.isinf(v):
            if ref != v:
                return False
        elif abs(v - ref) > tol:
            return False
    return True


def taylor_iet_approx(plant: LinearPlant, sigma_l: float, x) -> float:
    """First-order estimate ``sigma_l |x| / |(A + BK) x|`` of the linear-mode inter-event time."""
    x = np.asarray(x, dtype=float)
    Acl = plant.closed_loop
    ax = np.linalg.norm(Acl @ x)
    nx = np.linalg.norm(x)
    if ax <= 1e-14 * max(1.0, np.linalg.norm(Acl, 2)) * nx:
        raise SingularDirection("(A + BK) x vanishes")
    return float(sigma_l * nx / ax)


@dataclass(frozen=True)
class PlanarPrediction:
    """Asymptotic inter-event behaviour of a planar loop for small ``sigma_l``.

    ``limits`` are the candidate limit values ``sigma_l / |lambda_i|`` (slow
    eigenvalue first) for real spectra; ``period`` is ``pi / beta`` for a
    complex pair.  ``eigendirection_iet`` holds exact linear-mode
    inter-event times on the real eigendirections.  ``remainder_tol`` is an
    empirically fitted tolerance, never a proven constant.
    """

    eigen_class: str
    eigenvalues: tuple
    limits: tuple = ()
    period: float | None = None
    eigendirection_iet: tuple = ()
    remainder_tol: float | None = None


def classify_planar(plant: LinearPlant, sigma_l: float) -> PlanarPrediction:
    if plant.n != 2:
        raise Unsupported("planar classification needs n = 2")
    Acl = plant.closed_loop
    lam, vecs = np.linalg.eig(Acl)
    if np.max(lam.real) >= 0:
        raise Unsupported("closed loop is not Hurwitz")
    scale = max(1.0, np.max(np.abs(lam)))
    if abs(lam[0].imag) > 1e-12 * scale:
        beta = abs(lam[0].imag)
        return PlanarPrediction("ComplexConjugate", tuple(complex(z) for z in sorted(lam, key=lambda z: z.imag)),
                                period=float(math.pi / beta))
    lam = np.sort(lam.real)[::-1]  # lambda_1 (slow) first
    q = IetQuery(plant, sigma_l, mode="linear", delta_max=max(10.0, 20 * sigma_l / abs(lam[-1])))
    if abs(lam[0] - lam[1]) <= 1e-9 * scale:
        if np.linalg.norm(Acl - lam[0] * np.eye(2)) > 1e-9 * scale:
            raise Unsupported("repeated eigenvalue with geometric multiplicity 1")
        exact = inter_event_time(q, [1.0, 0.0])
        return PlanarPrediction("RealRepeated", (float(lam[0]), float(lam[1])),
                                limits=(float(sigma_l / abs(lam[0])),), eigendirection_iet=(exact,))
    w, V = np.linalg.eig(Acl)
    order = np.argsort(w.real)[::-1]
    exact = []
    for idx in order:
        v = V[:, idx].real
        try:
            exact.append(inter_event_time(q, v))
        except NeverTriggers:
            exact.append(math.inf)
    return PlanarPrediction("RealDistinct", (float(lam[0]), float(lam[1])),
                            limits=(float(sigma_l / abs(lam[0])), float(sigma_l / abs(lam[1]))),
                            eigendirection_iet=tuple(exact))


def _direction(phi):
    return np.array([math.cos(phi), math.sin(phi)])


def _angle_mod_pi(v) -> float:
    a = math.atan2(v[1], v[0]) % math.pi
    return 0.0 if a >= math.pi else a


def _wrap_half(d):
    """Reduce an angle difference modulo pi to ``[-pi/2, pi/2)``."""
    return (d + 0.5 * math.pi) % math.pi - 0.5 * math.pi


def angle_map(plant: LinearPlant, q: IetQuery, phi: float) -> float:
    """Direction angle (mod pi) of the state at the next event, starting on ray ``phi``."""
    if plant.n != 2:
        raise Unsupported("angle map needs n = 2")
    x = _direction(phi)
    d = inter_event_time(q, x)
    return _angle_mod_pi(transition_matrix(plant, d) @ x)


@dataclass(frozen=True)
class FixedPoint:
    angle: float
    multiplier: float
    stable: bool


@dataclass(frozen=True)
class FixedPointScan:
    """Fixed points of the angle map; ``identity`` flags a map that fixes every grid angle."""

    points: list = field(default_factory=list)
    identity: bool = False

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def _multiplier(plant, q, phi, h=1e-5):
    up = angle_map(plant, q, (phi + h) % math.pi)
    dn = angle_map(plant, q, (phi - h) % math.pi)
    return abs(_wrap_half(up - dn)) / (2 * h)


def find_fixed_points(plant: LinearPlant, q: IetQuery, grid_count: int = 360) -> FixedPointScan:
    """Scan ``Psi(phi) - phi`` (mod pi) on a uniform grid and refine sign changes by bisection."""
    if plant.n != 2:
        raise Unsupported("angle map needs n = 2")
    phis = np.arange(grid_count) * (math.pi / grid_count)
    d = np.array([_wrap_half(angle_map(plant, q, p) - p) for p in phis])
    if np.all(np.abs(d) < 1e-9):
        return FixedPointScan([], identity=True)

    def resid(p):
        return _wrap_half(angle_map(plant, q, p % math.pi) - p)

    roots = []
    exact = np.abs(d) < 1e-12
    for i in range(grid_count):
        if exact[i]:
            roots.append(float(phis[i]))
            continue
        j = (i + 1) % grid_count
        if exact[j]:
            continue
        a, b = d[i], d[j]
        if a * b >= 0 or abs(a) > 0.25 * math.pi or abs(b) > 0.25 * math.pi:
            continue  # no crossing, or a wrap-around jump
        lo = float(phis[i])
        hi = float(phis[i]) + math.pi / grid_count
        flo = a
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = resid(mid)
            if fm == 0:
                lo = hi = mid
                break
            if (fm < 0) == (flo < 0):
                lo, flo = mid, fm
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
        roots.append((0.5 * (lo + hi)) % math.pi)
    points = []
    for r in sorted(roots):
        mult = _multiplier(plant, q, r)
        points.append(FixedPoint(r, mult, mult < 1.0))
    return FixedPointScan(points, identity=False)


@dataclass(frozen=True, eq=False)
class ConicAbstraction:
    """Sector partition of ``[0, pi)`` with sampled inter-event-time bounds and transitions.

    Bounds and transitions come from sampling rays and delays, not from a
    certificate; ``empirical`` is always True.
    """

    boundaries: np.ndarray
    h_lo: np.ndarray
    h_hi: np.ndarray
    transitions: frozenset
    unbounded: np.ndarray
    rays_per_region: int
    delta_samples: int
    empirical: bool = True

    @property
    def n_regions(self) -> int:
        return len(self.h_lo)

    def region_of(self, x_or_angle) -> int:
        if np.ndim(x_or_angle) == 0:
            phi = float(x_or_angle) % math.pi
        else:
            phi = _angle_mod_pi(np.asarray(x_or_angle, dtype=float))
        width = math.pi / self.n_regions
        return min(int(phi // width), self.n_regions - 1)

    def contains(self, region: int, h: float) -> bool:
        return bool(self.h_lo[region] <= h <= self.h_hi[region])

    def successors(self, region: int) -> list:
        return sorted(t for s, t in self.transitions if s == region)

    def region_table(self):
        return [(s, float(self.boundaries[s]), float(self.boundaries[s + 1]),
                 float(self.h_lo[s]), float(self.h_hi[s])) for s in range(self.n_regions)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "phi_lo", "phi_hi", "h_lo", "h_hi"])
            for row in self.region_table():
                w.writerow([row[0]] + [repr(v) for v in row[1:]])


def build_abstraction(plant: LinearPlant, q: IetQuery, n_regions: int, rays_per_region: int = 16,
                      delta_samples: int = 16) -> ConicAbstraction:
    """Sampled conic abstraction of the sampling behaviour of a planar loop.

    Each of ``n_regions`` equal sectors of ``[0, pi)`` is probed with
    ``rays_per_region`` rays (end points included; transitions probe the
    edges from just inside the sector).  The bounds are the
    sampled extremes widened by 2% of the spread plus ``1e-6``.  A transition
    ``s -> r`` is recorded when some sampled ray, propagated through
    ``G(delta)`` for one of ``delta_samples`` delays in the region's bounds,
    lands in sector ``r``.
    """
    if plant.n != 2:
        raise Unsupported("conic abstraction implemented for n = 2")
    if n_regions < 1 or rays_per_region < 1 or delta_samples < 1:
        raise ValueError("n_regions, rays_per_region and delta_samples must be positive")
    width = math.pi / n_regions
    bounds = np.arange(n_regions + 1) * width
    h_lo = np.empty(n_regions)
    h_hi = np.empty(n_regions)
    unbounded = np.zeros(n_regions, dtype=bool)
    transitions = set()
    for s in range(n_regions):
        if rays_per_region == 1:
            phis = np.array([bounds[s] + 0.5 * width])
        else:
            phis = np.linspace(bounds[s], bounds[s + 1], rays_per_region)
        X = np.vstack([np.cos(phis), np.sin(phis)])
        thetas = inter_event_times(q, X)
        finite = np.isfinite(thetas)
        if not np.any(finite):
            unbounded[s] = True
            h_lo[s], h_hi[s] = math.nan, math.inf
            continue
        lo, hi = float(np.min(thetas[finite])), float(np.max(thetas[finite]))
        margin = 0.02 * (hi - lo) + 1e-6
        h_lo[s] = max(lo - margin, 0.0)
        h_hi[s] = hi + margin if np.all(finite) else math.inf
        deltas = np.linspace(h_lo[s], hi + margin, delta_samples)
        # probe the sector edges from just inside so rounding cannot flip sectors
        Xt = X.copy()
        if rays_per_region > 1:
            for col, edge in ((0, bounds[s] + 1e-9 * width), (-1, bounds[s + 1] - 1e-9 * width)):
                Xt[:, col] = (math.cos(edge), math.sin(edge))
        for dl in deltas:
            G = transition_matrix(plant, float(dl))
            Y = G @ Xt
            for k in range(Y.shape[1]):
                phi = _angle_mod_pi(Y[:, k])
                transitions.add((s, min(int(phi // width), n_regions - 1)))
    return ConicAbstraction(bounds, h_lo, h_hi, frozenset(transitions), unbounded,
                            rays_per_region, delta_samples)


def export_dot(a: ConicAbstraction) -> str:
    """Directed-graph text: one node per region labelled ``R_s [h_lo, h_hi]``, one edge per transition."""
    lines = ["digraph abstraction {"]
    for s in range(a.n_regions):
        lines.append(f'  R{s} [label="R_{s} [{a.h_lo[s]:.6g}, {a.h_hi[s]:.6g}]"];')
    for s, r in sorted(a.transitions):
        lines.append(f"  R{s} -> R{r};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def autocorrelation_lag(event_times, inter_event, *, resolution=0.01, max_lag=None):
    """Dominant positive lag (s) of the autocorrelation of the inter-event signal.

    The sequence ``h_j`` is held piecewise constant on ``[t_j, t_{j+1})`` and
    resampled on a uniform grid.  The search starts after the first zero
    crossing of the autocorrelation so that the central lobe is skipped.
    """
    t = np.asarray(event_times, dtype=float)[: len(inter_event)]
    h = np.asarray(inter_event, dtype=float)
    grid = np.arange(t[0], t[-1] + h[-1], resolution)
    idx = np.searchsorted(t, grid, side="right") - 1
    sig = h[np.clip(idx, 0, len(h) - 1)]
    sig = sig - sig.mean()
    nfft = 1 << int(math.ceil(math.log2(2 * len(sig))))
    F = np.fft.rfft(sig, nfft)
    ac = np.fft.irfft(F * np.conj(F), nfft)[: len(sig)]
    ac /= ac[0]
    max_k = len(sig) // 2 if max_lag is None else int(max_lag / resolution)
    neg = np.nonzero(ac[:max_k] < 0)[0]
    if len(neg) == 0:
        raise ValueError("autocorrelation never crosses zero; no periodic structure")
    start = neg[0]
    k = start + int(np.argmax(ac[start:max_k]))
    return k * resolution, float(ac[k])
