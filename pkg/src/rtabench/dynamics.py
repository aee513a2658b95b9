"""Clohessy-Wiltshire relative-motion dynamics in Hill's frame.

The chief spacecraft sits at the origin of Hill's frame on a circular
orbit with mean motion ``n``; the deputy's relative state is the
6-vector ``[x, y, z, vx, vy, vz]`` (m, m/s) and its control is the
thrust 3-vector ``[Fx, Fy, Fz]`` (N), box-bounded by ``u_max`` per axis.

Provides the continuous derivative, the exact zero-order-hold
transition matrices (closed form, no runtime matrix exponential), an
RK4 integrator for state-feedback control laws, and the sun-angle
kinematics used by the inspection task.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CwParams:
    """Chief-orbit and deputy actuation parameters.

    Attributes
    ----------
    n : float
        Mean motion of the chief's circular orbit [rad/s].
    m : float
        Deputy mass [kg].
    u_max : float
        Maximum thrust magnitude per axis [N].
    """

    n: float = 0.001027
    m: float = 12.0
    u_max: float = 1.0

    def __post_init__(self):
        if not (self.n > 0.0 and self.m > 0.0 and self.u_max > 0.0):
            raise ValueError("CwParams entries must be strictly positive")


def a_matrix(params: CwParams) -> np.ndarray:
    """System matrix A of the linearized relative-motion dynamics."""
    n = params.n
    A = np.zeros((6, 6))
    A[0, 3] = A[1, 4] = A[2, 5] = 1.0
    A[3, 0] = 3.0 * n * n
    A[3, 4] = 2.0 * n
    A[4, 3] = -2.0 * n
    A[5, 2] = -n * n
    return A


def b_matrix(params: CwParams) -> np.ndarray:
    """Input matrix B (thrust to acceleration, scaled by 1/m)."""
    B = np.zeros((6, 3))
    B[3, 0] = B[4, 1] = B[5, 2] = 1.0 / params.m
    return B


def derivative(state, control, params: CwParams) -> np.ndarray:
    """State derivative A @ x + B @ u.

    Parameters
    ----------
    state : array_like, shape (6,)
    control : array_like, shape (3,)
    params : CwParams

    Returns
    -------
    ndarray, shape (6,)
    """
    x = np.asarray(state, dtype=float)
    u = np.asarray(control, dtype=float)
    n = params.n
    out = np.empty(6)
    out[0:3] = x[3:6]
    out[3] = 3.0 * n * n * x[0] + 2.0 * n * x[4] + u[0] / params.m
    out[4] = -2.0 * n * x[3] + u[1] / params.m
    out[5] = -n * n * x[2] + u[2] / params.m
    return out


def transition_matrices(dt: float, params: CwParams) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form zero-order-hold transition matrices.

    ``x(t + dt) = Phi @ x(t) + Gamma @ u`` solves the continuous
    dynamics exactly for control held constant over the step.

    Parameters
    ----------
    dt : float
        Step duration [s], must be positive.

    Returns
    -------
    Phi : ndarray, shape (6, 6)
    Gamma : ndarray, shape (6, 3)
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = params.n
    nt = n * dt
    s = math.sin(nt)
    c = math.cos(nt)
    Phi = np.array([
        [4.0 - 3.0 * c, 0.0, 0.0, s / n, 2.0 * (1.0 - c) / n, 0.0],
        [6.0 * (s - nt), 1.0, 0.0, 2.0 * (c - 1.0) / n, (4.0 * s - 3.0 * nt) / n, 0.0],
        [0.0, 0.0, c, 0.0, 0.0, s / n],
        [3.0 * n * s, 0.0, 0.0, c, 2.0 * s, 0.0],
        [6.0 * n * (c - 1.0), 0.0, 0.0, -2.0 * s, 4.0 * c - 3.0, 0.0],
        [0.0, 0.0, -n * s, 0.0, 0.0, c],
    ])
    n2 = n * n
    im = 1.0 / params.m
    Gamma = np.array([
        [(1.0 - c) / n2, 2.0 * (nt - s) / n2, 0.0],
        [2.0 * (s - nt) / n2, (8.0 * (1.0 - c) - 3.0 * nt * nt) / (2.0 * n2), 0.0],
        [0.0, 0.0, (1.0 - c) / n2],
        [s / n, 2.0 * (1.0 - c) / n, 0.0],
        [2.0 * (c - 1.0) / n, (4.0 * s - 3.0 * nt) / n, 0.0],
        [0.0, 0.0, s / n],
    ]) * im
    return Phi, Gamma


def propagate(state, control, dt: float, params: CwParams,
              mats: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Exact propagation over ``dt`` under constant control.

    ``mats`` may carry precomputed ``(Phi, Gamma)`` for the same
    ``(dt, params)`` to avoid recomputing them in loops.
    """
    if mats is None:
        mats = transition_matrices(dt, params)
    Phi, Gamma = mats
    x = np.asarray(state, dtype=float)
    u = np.asarray(control, dtype=float)
    return Phi @ x + Gamma @ u


def integrate_rk4(state, control_law, step: float, steps: int,
                  params: CwParams) -> np.ndarray:
    """Classic fourth-order Runge-Kutta under a state-feedback control law.

    The control law is re-evaluated at every RK stage so state-dependent
    backup laws see consistent stage dynamics.

    Parameters
    ----------
    state : array_like, shape (6,)
        Initial state.
    control_law : callable
        Maps a 6-state to a thrust 3-vector.
    step : float
        Integration step [s], must be positive.
    steps : int
        Number of steps, at least 1.

    Returns
    -------
    ndarray, shape (steps + 1, 6)
        Trajectory including the initial state.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    x = np.asarray(state, dtype=float).copy()
    out = np.empty((steps + 1, 6))
    out[0] = x
    h = step
    for i in range(steps):
        k1 = derivative(x, control_law(x), params)
        x2 = x + 0.5 * h * k1
        k2 = derivative(x2, control_law(x2), params)
        x3 = x + 0.5 * h * k2
        k3 = derivative(x3, control_law(x3), params)
        x4 = x + h * k3
        k4 = derivative(x4, control_law(x4), params)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = x
    return out


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    return wrapped


def sun_vector(theta: float) -> np.ndarray:
    """Unit vector from the chief toward the Sun in the x-y plane."""
    return np.array([math.cos(theta), math.sin(theta), 0.0])


def advance_sun(theta: float, dt: float, params: CwParams) -> float:
    """Advance the sun angle by ``dt`` seconds (rate -n), wrapped to [0, 2*pi)."""
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    return wrap_angle(theta - params.n * dt)
