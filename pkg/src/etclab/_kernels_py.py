"""Pure-numpy fallback for the Monte Carlo kernels, vectorised over trajectories.

The arithmetic mirrors the compiled loops operation by operation, so both
backends produce bitwise-identical results.
"""
import numpy as np

BACKEND = "python"


def _sq(X):
    s = X[:, 0] * X[:, 0]
    for i in range(1, X.shape[1]):
        s = s + X[:, i] * X[:, i]
    return s


def etc_segment(dW, X, rho, dt, cost, events):
    N, S, n = dW.shape
    c = np.zeros(N)
    ev = np.zeros(N, dtype=events.dtype)
    for k in range(S):
        c = c + _sq(X) * dt
        X += dW[:, k, :]
        hit = _sq(X) >= rho
        if hit.any():
            X[hit] = 0.0
            ev += hit
    cost += c
    events += ev


def ttc_segment(dW, X, period_steps, phase, dt, cost, events):
    N, S, n = dW.shape
    c = np.zeros(N)
    ev = np.zeros(N, dtype=events.dtype)
    ph = phase.copy()
    for k in range(S):
        c = c + _sq(X) * dt
        X += dW[:, k, :]
        ph += 1
        hit = ph >= period_steps
        if hit.any():
            X[hit] = 0.0
            ev += hit
            ph[hit] = 0
    phase[:] = ph
    cost += c
    events += ev
