"""Plant models and exact transition operators for sample-and-hold feedback.

A plant is anything with ``n``, ``m``, ``f(x, u)`` and ``kappa(x)``.  Linear
plants additionally carry ``A``, ``B``, ``K`` and admit the exact transition
matrix ``G(delta)`` mapping the state at a sampling instant to the state
``delta`` seconds later while the input is held.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from .errors import NumericalOverflow, Unsupported


def _as_matrix(name, value):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if name == "B" else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearPlant:
    """Linear plant ``dx/dt = A x + B u_hat`` with emulated feedback ``u = K x``."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        B = _as_matrix("B", self.B)
        K = _as_matrix("K", self.K)
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        if K.shape != (m, n):
            raise ValueError(f"K must be {m}x{n}, got {K.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def closed_loop(self) -> np.ndarray:
        return self.A + self.B @ self.K

    def f(self, x, u):
        return self.A @ x + self.B @ u

    def kappa(self, x):
        return self.K @ x

    def held_rhs(self, u):
        """Right-hand side with the input frozen at ``u``."""
        A = self.A
        c = self.B @ u
        return lambda x: A @ x + c

    def is_hurwitz(self) -> bool:
        return bool(np.max(np.linalg.eigvals(self.closed_loop).real) < 0.0)


@dataclass(frozen=True, eq=False)
class VectorField:
    """General (possibly nonlinear) plant given by callables."""

    n: int
    m: int
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    feedback: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def f(self, x, u):
        return np.asarray(self.rhs(x, u), dtype=float)

    def kappa(self, x):
        return np.asarray(self.feedback(x), dtype=float)

    def held_rhs(self, u):
        rhs = self.rhs
        return lambda x: np.asarray(rhs(x, u), dtype=float)


def flow_operator(plant: LinearPlant, delta: float) -> np.ndarray:
    """Exponential of the augmented matrix ``[[A, BK], [0, 0]] * delta``.

    Acting on ``(x(t), x(t_j))`` it propagates the state together with the
    state held by the last sample, so it composes over intervals without an
    intermediate event.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    n = plant.n
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = plant.A
    M[:n, n:] = plant.B @ plant.K
    with np.errstate(over="ignore", invalid="ignore"):
        Phi = la.expm(M * delta)
    if not np.all(np.isfinite(Phi)):
        raise NumericalOverflow(f"matrix exponential overflowed at delta = {delta}")
    return Phi


def transition_matrix(plant: LinearPlant, delta: float) -> np.ndarray:
    """``G(delta) = e^{A delta} + int_0^delta e^{A (delta - tau)} B K dtau``."""
    n = plant.n
    Phi = flow_operator(plant, delta)
    return Phi[:n, :n] + Phi[:n, n:]


def transition_stack(plant: LinearPlant, step: float, count: int) -> np.ndarray:
    """``G(k * step)`` for ``k = 0 .. count`` via powers of one flow operator."""
    n = plant.n
    Phi1 = flow_operator(plant, step)
    out = np.empty((count + 1, n, n))
    Phi = np.eye(2 * n)
    for k in range(count + 1):
        out[k] = Phi[:n, :n] + Phi[:n, n:]
        Phi = Phi1 @ Phi
    if not np.all(np.isfinite(out)):
        raise NumericalOverflow("transition matrices overflowed on the scan grid")
    return out


# --- catalog ---------------------------------------------------------------

_CATALOG: dict[str, Callable[[], LinearPlant | VectorField]] = {}


def register_plant(name: str, factory: Callable[[], LinearPlant | VectorField]) -> None:
    """Extension point: make ``factory()`` available under ``name``."""
    _CATALOG[name] = factory


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def get_plant(name: str) -> LinearPlant | VectorField:
    try:
        return _CATALOG[name]()
    except KeyError:
        raise Unsupported(f"unknown catalog plant {name!r}; known: {catalog_names()}") from None


def radial_plant(n: int = 2) -> LinearPlant:
    """``A = 0``, ``B = I``, ``K = -I``: every trajectory moves straight to the origin."""
    return LinearPlant(np.zeros((n, n)), np.eye(n), -np.eye(n))


def sample_example_plant() -> LinearPlant:
    """Planar benchmark whose closed loop has eigenvalues ``-1/2 +- i sqrt(3)/2``."""
    A = [[0.0, 1.0], [-2.0, 3.0]]
    B = [[0.0, 0.0], [-1.0, 4.0]]
    return LinearPlant(A, B, -np.eye(2))


def diagonal_feedback_plant(rates=(1.0, 3.0)) -> LinearPlant:
    """``A = 0``, ``B = I``, ``K = -diag(rates)``; closed loop ``-diag(rates)``."""
    n = len(rates)
    return LinearPlant(np.zeros((n, n)), np.eye(n), -np.diag(rates))


def scalar_unstable_plant() -> LinearPlant:
    """``a = 1``, ``b k = -2``."""
    return LinearPlant([[1.0]], [[1.0]], [[-2.0]])


def pendulum_field() -> VectorField:
    """Inverted pendulum with damping, stabilised by feedback linearisation plus PD."""

    def rhs(x, u):
        return np.array([x[1], np.sin(x[0]) - 0.5 * x[1] + u[0]])

    def feedback(x):
        return np.array([-np.sin(x[0]) - 2.0 * x[0] - 2.0 * x[1]])

    return VectorField(2, 1, rhs, feedback, name="pendulum")


register_plant("radial", radial_plant)
register_plant("sample_example", sample_example_plant)
register_plant("diagonal", diagonal_feedback_plant)
register_plant("scalar_unstable", scalar_unstable_plant)
register_plant("pendulum", pendulum_field)


def random_hurwitz_plant(rng: np.random.Generator, n: int = 2, *, margin=0.2, max_rate=3.0,
                         max_tries=1000) -> LinearPlant:
    """Random ``(A, B = I, K)`` with closed-loop eigenvalue real parts in ``[-max_rate, -margin]``."""
    for _ in range(max_tries):
        A = rng.normal(size=(n, n))
        K = rng.normal(size=(n, n))
        re = np.linalg.eigvals(A + K).real
        if np.all(re <= -margin) and np.all(re >= -max_rate):
            return LinearPlant(A, np.eye(n), K)
    raise RuntimeError("could not draw a Hurwitz closed loop")
