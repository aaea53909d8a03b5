# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the Wiener-driven integrator with impulsive resets."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def etc_segment(const double[:, :, ::1] dW, double[:, ::1] X, double rho, double dt,
                double[::1] cost, long[::1] events):
    """Advance every trajectory through one block of increments, resetting on ``|x|^2 >= rho``.

    ``dW`` has shape ``(N, steps, n)``; ``X`` is updated in place and
    ``cost``/``events`` are incremented.
    """
    cdef Py_ssize_t N = dW.shape[0], S = dW.shape[1], n = dW.shape[2]
    cdef Py_ssize_t j, k, i
    cdef double c, r, s
    cdef long ev
    with nogil:
        for j in range(N):
            c = 0.0
            ev = 0
            for k in range(S):
                s = X[j, 0] * X[j, 0]
                for i in range(1, n):
                    s = s + X[j, i] * X[j, i]
                c = c + s * dt
                for i in range(n):
                    X[j, i] = X[j, i] + dW[j, k, i]
                r = X[j, 0] * X[j, 0]
                for i in range(1, n):
                    r = r + X[j, i] * X[j, i]
                if r >= rho:
                    for i in range(n):
                        X[j, i] = 0.0
                    ev = ev + 1
            cost[j] = cost[j] + c
            events[j] = events[j] + ev


def ttc_segment(const double[:, :, ::1] dW, double[:, ::1] X, long period_steps, long[::1] phase,
                double dt, double[::1] cost, long[::1] events):
    """Same dynamics with a reset every ``period_steps`` steps; ``phase`` counts steps since the last reset."""
    cdef Py_ssize_t N = dW.shape[0], S = dW.shape[1], n = dW.shape[2]
    cdef Py_ssize_t j, k, i
    cdef double c, s
    cdef long ev, ph
    with nogil:
        for j in range(N):
            c = 0.0
            ev = 0
            ph = phase[j]
            for k in range(S):
                s = X[j, 0] * X[j, 0]
                for i in range(1, n):
                    s = s + X[j, i] * X[j, i]
                c = c + s * dt
                for i in range(n):
                    X[j, i] = X[j, i] + dW[j, k, i]
                ph = ph + 1
                if ph >= period_steps:
                    for i in range(n):
                        X[j, i] = 0.0
                    ev = ev + 1
                    ph = 0
            phase[j] = ph
            cost[j] = cost[j] + c
            events[j] = events[j] + ev
