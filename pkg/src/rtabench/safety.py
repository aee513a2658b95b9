"""Safety constraints for the inspection task.

Six control barrier functions define the safe set: collision avoidance
(h1), a keep-in zone (h2), a distance-dependent speed limit (h3), and
per-axis velocity caps (h4-h6). A state is safe when every h_i is
nonnegative. Analytic gradients back the filter constraint rows and are
validated against finite differences in the tests.

Outside the square-root domains of h1/h2 the value is continued oddly
(``-sqrt(2*a_max*|arg|)`` plus the velocity term), which keeps the
filter constraints meaningful and pushes back toward the safe set when
initialized unsafe. At the measure-zero singular points (``p = 0`` for
the radial terms, ``v = 0`` for the speed norm) the gradients use the
zero subgradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NUM_CONSTRAINTS = 6

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2, 0: 0, 1: 1, 2: 2}


@dataclass(frozen=True)
class SafetyParams:
    """Constraint parameters.

    Attributes
    ----------
    a_max : float
        Deceleration capability assumed by the braking constraints
        [m/s^2]; default is the per-axis authority u_max / m.
    r_deputy, r_chief : float
        Collision radii of the deputy and chief [m].
    r_max : float
        Keep-in radius [m].
    nu0 : float
        Allowable speed at the origin [m/s].
    nu1 : float
        Slope of the speed limit with distance [1/s]; default 2n.
    v_max : float
        Per-axis velocity cap [m/s].
    """

    a_max: float = 1.0 / 12.0
    r_deputy: float = 5.0
    r_chief: float = 10.0
    r_max: float = 1000.0
    nu0: float = 0.2
    nu1: float = 2.0 * 0.001027
    v_max: float = 1.0

    def __post_init__(self):
        fields = (self.a_max, self.r_deputy, self.r_chief, self.r_max,
                  self.nu1, self.v_max)
        if not all(v > 0.0 for v in fields):
            raise ValueError("SafetyParams entries must be strictly positive")
        if self.nu0 < 0.0:
            raise ValueError("nu0 must be nonnegative")
        if self.r_deputy + self.r_chief >= self.r_max:
            raise ValueError("collision radius must be below the keep-in radius")

    @property
    def r_collision(self) -> float:
        """Combined keep-out radius r_deputy + r_chief [m]."""
        return self.r_deputy + self.r_chief

    def as_array(self) -> np.ndarray:
        """Pack into the flat layout shared with the compiled kernels."""
        return np.array([self.a_max, self.r_collision, self.r_max,
                         self.nu0, self.nu1, self.v_max])


@dataclass(frozen=True)
class AlphaSpec:
    """Linear class-K strengthening coefficients, one per constraint.

    ``continuous`` coefficients [1/s] scale the barrier condition of the
    continuous-time filters and must be positive; ``discrete``
    coefficients are dimensionless fractions in (0, 1) so the discrete
    condition alpha(r) < r holds. Scalars broadcast to all six
    constraints.

    The defaults are conservative: 0.01/s keeps closed-loop sampled-data
    episodes clear of the constraint boundaries at a 1 Hz hold, and the
    discrete 0.02 keeps gamma * dt below one for both benchmark
    timesteps.
    """

    continuous: tuple = 0.01
    discrete: tuple = 0.02

    def __post_init__(self):
        cont = _as_coeffs(self.continuous)
        disc = _as_coeffs(self.discrete)
        if any(c <= 0.0 for c in cont):
            raise ValueError("continuous alpha coefficients must be positive")
        if any(not 0.0 < g < 1.0 for g in disc):
            raise ValueError("discrete alpha coefficients must lie in (0, 1)")
        object.__setattr__(self, "continuous", cont)
        object.__setattr__(self, "discrete", disc)


def _as_coeffs(value) -> tuple:
    if np.isscalar(value):
        return (float(value),) * NUM_CONSTRAINTS
    coeffs = tuple(float(v) for v in value)
    if len(coeffs) != NUM_CONSTRAINTS:
        raise ValueError(f"expected {NUM_CONSTRAINTS} coefficients, got {len(coeffs)}")
    return coeffs


def _signed_sqrt(two_a_arg: float) -> float:
    # odd extension of sqrt for arguments below the domain boundary
    if two_a_arg >= 0.0:
        return math.sqrt(two_a_arg)
    return -math.sqrt(-two_a_arg)


def h_collision(state, params: SafetyParams) -> float:
    """h1: the deputy can still brake to a stop before the keep-out sphere.

    ``sqrt(2 a_max (|p| - r_collision)) + (p . v) / |p|``; the radial
    speed term is negative when closing, so h1 >= 0 means the braking
    authority covers the remaining separation.
    """
    x = np.asarray(state, dtype=float)
    p = x[0:3]
    v = x[3:6]
    r = float(np.linalg.norm(p))
    v_prc = float(p @ v) / r if r > 0.0 else 0.0
    return _signed_sqrt(2.0 * params.a_max * (r - params.r_collision)) + v_prc


def h_keepin(state, params: SafetyParams) -> float:
    """h2: the deputy can brake before crossing the keep-in radius."""
    x = np.asarray(state, dtype=float)
    p = x[0:3]
    v = x[3:6]
    r = float(np.linalg.norm(p))
    v_prr = float(p @ v) / r if r > 0.0 else 0.0
    return _signed_sqrt(2.0 * params.a_max * (params.r_max - r)) - v_prr


def h_slowdown(state, params: SafetyParams) -> float:
    """h3: speed stays below nu0 + nu1 * distance."""
    x = np.asarray(state, dtype=float)
    r = float(np.linalg.norm(x[0:3]))
    s = float(np.linalg.norm(x[3:6]))
    return params.nu0 + params.nu1 * r - s


def h_axis_speed(state, axis, params: SafetyParams) -> float:
    """h4/h5/h6: per-axis velocity cap, v_max^2 - v_axis^2."""
    k = _AXIS_INDEX[axis]
    va = float(np.asarray(state, dtype=float)[3 + k])
    return params.v_max * params.v_max - va * va


def h_values(state, params: SafetyParams) -> np.ndarray:
    """All six constraint values, ordered h1..h6."""
    x = np.asarray(state, dtype=float)
    out = np.empty(NUM_CONSTRAINTS)
    out[0] = h_collision(x, params)
    out[1] = h_keepin(x, params)
    out[2] = h_slowdown(x, params)
    out[3] = h_axis_speed(x, 0, params)
    out[4] = h_axis_speed(x, 1, params)
    out[5] = h_axis_speed(x, 2, params)
    return out


def h_gradients(state, params: SafetyParams) -> tuple[np.ndarray, np.ndarray]:
    """Values and analytic gradients of all six constraints.

    Returns
    -------
    values : ndarray, shape (6,)
    grads : ndarray, shape (6, 6)
        Row i is the gradient of h_{i+1} with respect to the 6-state.
    """
    x = np.asarray(state, dtype=float)
    p = x[0:3]
    v = x[3:6]
    r = float(np.linalg.norm(p))
    s = float(np.linalg.norm(v))
    a = params.a_max

    values = np.empty(NUM_CONSTRAINTS)
    grads = np.zeros((NUM_CONSTRAINTS, 6))

    if r > 0.0:
        p_hat = p / r
        pv = float(p @ v)
        v_rad = pv / r
        # gradient of (p.v)/|p| with respect to p
        d_vrad_dp = v / r - pv * p / (r * r * r)
    else:
        p_hat = np.zeros(3)
        v_rad = 0.0
        d_vrad_dp = np.zeros(3)

    arg1 = 2.0 * a * (r - params.r_collision)
    values[0] = _signed_sqrt(arg1) + v_rad
    arg2 = 2.0 * a * (params.r_max - r)
    values[1] = _signed_sqrt(arg2) - v_rad
    values[2] = params.nu0 + params.nu1 * r - s
    values[3] = params.v_max ** 2 - v[0] * v[0]
    values[4] = params.v_max ** 2 - v[1] * v[1]
    values[5] = params.v_max ** 2 - v[2] * v[2]

    if r > 0.0:
        ds1 = a / math.sqrt(abs(arg1)) if arg1 != 0.0 else math.inf
        ds2 = a / math.sqrt(abs(arg2)) if arg2 != 0.0 else math.inf
        grads[0, 0:3] = ds1 * p_hat + d_vrad_dp
        grads[0, 3:6] = p_hat
        grads[1, 0:3] = -ds2 * p_hat - d_vrad_dp
        grads[1, 3:6] = -p_hat
        grads[2, 0:3] = params.nu1 * p_hat
    if s > 0.0:
        grads[2, 3:6] = -v / s
    grads[3, 3] = -2.0 * v[0]
    grads[4, 4] = -2.0 * v[1]
    grads[5, 5] = -2.0 * v[2]
    return values, grads


def grad_h(index: int, state, params: SafetyParams) -> np.ndarray:
    """Gradient of constraint ``index`` (1-based, h1..h6) at ``state``."""
    if not 1 <= index <= NUM_CONSTRAINTS:
        raise ValueError("constraint index must be in 1..6")
    return h_gradients(state, params)[1][index - 1]


def is_safe(state, params: SafetyParams) -> tuple[bool, np.ndarray]:
    """Safe-set membership plus the six constraint margins."""
    margins = h_values(state, params)
    return bool(margins.min() >= 0.0), margins
