"""Independent reference computations used by the tests.

Nothing here imports the package's numerical routines: transition matrices
come from ODE integration, inter-event times from closed forms or brute-force
scans on the ODE solution, and Brownian quantities from a plain Monte Carlo
with a different generator and loop structure.
"""
import math

import numpy as np
from scipy.integrate import solve_ivp

# closed forms for the relative rule on the radial plant (A = 0, B = I, K = -I)
# and the scalar plant a = 1, bk = -2


def radial_theta_quadratic(sigma):
    r = math.sqrt(sigma)
    return r / (1.0 + r)


def radial_theta_linear(sigma):
    return sigma / (1.0 + sigma)


def scalar_theta(sigma_l):
    # |e^d - 1| = sigma_l |2 - e^d|  ->  e^d = (1 + 2 sigma_l) / (1 + sigma_l)
    return math.log((1.0 + 2.0 * sigma_l) / (1.0 + sigma_l))


def transition_matrix_ode(A, B, K, delta):
    """G(delta) column by column from dx/dt = A x + B K x0, x(0) = x0."""
    A = np.atleast_2d(np.asarray(A, float))
    BK = np.atleast_2d(np.asarray(B, float)) @ np.atleast_2d(np.asarray(K, float))
    n = A.shape[0]
    if delta == 0:
        return np.eye(n)
    G = np.empty((n, n))
    for i in range(n):
        x0 = np.eye(n)[i]
        sol = solve_ivp(lambda t, x: A @ x + BK @ x0, (0.0, delta), x0, method="DOP853",
                        rtol=1e-13, atol=1e-14)
        G[:, i] = sol.y[:, -1]
    return G


def brute_force_theta(A, B, K, x0, sigma, mode="quadratic", error="state", delta_max=5.0, step=1e-3):
    """First sign change of the triggering function on a dense ODE solution, refined by bisection."""
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    K = np.atleast_2d(np.asarray(K, float))
    x0 = np.asarray(x0, float)
    BKx0 = B @ K @ x0
    sol = solve_ivp(lambda t, x: A @ x + BKx0, (0.0, delta_max), x0, method="DOP853", rtol=1e-13,
                    atol=1e-14, dense_output=True)

    def g(d):
        x = sol.sol(d)
        err = x0 - x
        if error == "input":
            err = K @ err
        if mode == "quadratic":
            return err @ err - sigma * (x @ x)
        return math.sqrt(err @ err) - sigma * math.sqrt(x @ x)

    ts = np.arange(step, delta_max + step / 2, step)
    prev = 0.0
    for t in ts:
        if g(t) >= 0:
            lo, hi = prev, t
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if g(mid) >= 0:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
        prev = t
    return math.inf


def brownian_ball_exit(n, rho, trajectories=4000, dt=1e-3, seed=12345):
    """Mean first-exit time of ``|x|^2 < rho`` for a standard Brownian motion from the origin.

    Plain vectorised Euler walk with PCG64; also returns the mean of int |x|^2
    over the excursion.  Discrete monitoring biases both upward by O(sqrt(dt)).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    x = np.zeros((trajectories, n))
    alive = np.ones(trajectories, dtype=bool)
    tau = np.zeros(trajectories)
    occ = np.zeros(trajectories)
    sq = math.sqrt(dt)
    while alive.any():
        idx = np.flatnonzero(alive)
        occ[idx] += np.sum(x[idx] ** 2, axis=1) * dt
        x[idx] += sq * rng.standard_normal((idx.size, n))
        tau[idx] += dt
        out = np.sum(x[idx] ** 2, axis=1) >= rho
        alive[idx[out]] = False
    return float(tau.mean()), float(occ.mean())


def excursion_occupation(n, rho):
    """E int_0^tau |B|^2 dt from the origin: u(0) for 1/2 Lap u = -|x|^2, u = 0 on |x|^2 = rho."""
    return rho ** 2 / (2.0 * (n + 2))


def etc_cost_oracle(n, rho):
    return excursion_occupation(n, rho) / (rho / n)


def ttc_cost_oracle(n, h):
    # (1/h) int_0^h E|B_t|^2 dt = (1/h) int_0^h n t dt
    return n * h / 2.0


def etc_bound_direct(A, psi, nu, rho0, dbar):
    """Necessary-rate bound by direct substitution, numerator logarithm base 2."""
    num = (math.exp(A * dbar) - 1.0) / (rho0 * math.exp(-psi * dbar))
    if num <= 0:
        return 0.0
    val = (A + psi) / (math.log(nu) + math.log(2.0 + math.exp(psi * dbar) / rho0)) * math.log(num, 2)
    return max(0.0, val)


def etc_bound_psi0(A, nu, rho0, dbar):
    """Zero-decay special case written independently: A / ln(nu (2 rho0 + 1) / rho0) * log2((e^{A d} - 1)/rho0)."""
    arg = (math.exp(A * dbar) - 1.0) / rho0
    if arg <= 1.0:
        return 0.0
    return A / math.log(nu * (2.0 * rho0 + 1.0) / rho0) * math.log2(arg)
