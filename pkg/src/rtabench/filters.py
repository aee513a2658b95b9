"""Run-time-assurance filters: explicit, implicit and discrete ASIF.

Each filter maps (state, desired control) to a safe control that is as
close as possible to the desired one:

* ``ExplicitAsif`` imposes the barrier condition of every constraint at
  the current state; the constraints are affine in the control, so one
  small QP solves the problem.
* ``ImplicitAsif`` integrates a backup-control trajectory together with
  its sensitivity matrices and imposes the barrier condition at every
  trajectory node (including the current state), again as a QP.
* ``DiscreteAsif`` constrains the exactly-propagated next state, which
  makes the constraints nonlinear in the control; a feasible desired
  control is returned directly, otherwise the SQP solver runs under the
  configured tolerance and wall-clock limit.

Filter objects own solver workspaces and are not shareable between
threads; configs are immutable and shareable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from ._backend import get_backend
from ._pykernels import QP_OPTIMAL
from .dynamics import CwParams
from .safety import AlphaSpec, SafetyParams
from .solvers import (FEASIBILITY_TOL, NlpProblem, QP_STATUS_NAMES,
                      SolveOutcome, solve_nlp)

INTERVENTION_TOL = 1e-9

# backup-trajectory integration: RK4 substeps per node interval, capped
# in length; 10 substeps at dt = 1 keep the sensitivity integration
# finite-difference-consistent across saturation boundaries, and the
# per-node count preserves the cost scaling with node spacing
_SUBSTEPS_PER_NODE = 10
_MAX_SUBSTEP = 0.5


@dataclass(frozen=True)
class FilterConfig:
    """Configuration shared by the three filter kinds.

    ``dt`` is the trajectory node spacing for the implicit filter and
    the propagation step for the discrete one. ``horizon`` (implicit
    only) must be an integer multiple of ``dt``. ``tolerance`` and
    ``time_limit`` drive the discrete filter's nonlinear solve.
    """

    kind: str
    dt: float = 1.0
    horizon: float = 20.0
    tolerance: float = 1e-4
    time_limit: float = 60.0
    alpha: AlphaSpec = field(default_factory=AlphaSpec)
    safety: SafetyParams = field(default_factory=SafetyParams)
    cw: CwParams = field(default_factory=CwParams)
    backup_omega: float = 0.05
    backup_hold_offset: float = 50.0

    def __post_init__(self):
        if self.kind not in ("easif", "iasif", "dasif"):
            raise ValueError(f"unknown filter kind: {self.kind!r}")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.kind == "iasif":
            steps = self.horizon / self.dt
            if self.horizon < 0.0 or abs(steps - round(steps)) > 1e-9:
                raise ValueError("horizon must be a nonnegative integer multiple of dt")
        if self.kind == "dasif" and self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")

    @property
    def num_steps(self) -> int:
        """Number of computed trajectory steps J (nodes are J + 1)."""
        return int(round(self.horizon / self.dt))

    @property
    def backup_kv(self) -> float:
        return 2.0 * self.cw.m * self.backup_omega

    @property
    def backup_kp(self) -> float:
        return self.cw.m * self.backup_omega ** 2

    @property
    def backup_hold_radius(self) -> float:
        return self.safety.r_collision + self.backup_hold_offset


@dataclass
class BackupTrajectory:
    """Backup-law trajectory nodes and their sensitivities.

    ``nodes[j]`` is the state at time j * dt (node 0 is the query
    state) and ``sens[j]`` its derivative with respect to the initial
    state (identity at node 0).
    """

    times: np.ndarray
    nodes: np.ndarray
    sens: np.ndarray


@dataclass
class FilterResult:
    """Outcome of one filter call.

    ``solver`` carries the nonlinear outcome when the discrete filter
    engages its solver; the QP filters report through ``status`` and
    the ``active`` constraint indices.
    """

    control: np.ndarray
    intervened: bool
    status: str
    active: tuple = ()
    solver: SolveOutcome | None = None
    fallback: bool = False


def backup_control(state, config: FilterConfig) -> np.ndarray:
    """Predetermined safe backup law: saturated PD toward a hold point.

    ``u_b = clamp(-K_v v - K_p (p - p_hold))`` where the hold point sits
    at ``max(|p|, r_hold)`` along the current position direction, so the
    law is pure velocity damping outside the hold radius and pushes
    outward inside it. Lipschitz continuous.
    """
    kern = get_backend(None)
    return kern.backup_control_law(
        np.asarray(state, dtype=float), config.backup_kv, config.backup_kp,
        config.backup_hold_radius, config.cw.u_max)


def _substeps(dt: float) -> int:
    return max(_SUBSTEPS_PER_NODE, int(math.ceil(dt / _MAX_SUBSTEP)))


class _FilterBase:
    def __init__(self, config: FilterConfig, backend=None):
        self.config = config
        self._kern = get_backend(backend)
        self._sp = config.safety.as_array()
        cw = config.cw
        self._box = cw.u_max
        self._H = 2.0 * np.eye(3)
        self._lo = np.full(3, -cw.u_max)
        self._hi = np.full(3, cw.u_max)

    def filter(self, state, u_des) -> FilterResult:
        raise NotImplementedError

    def check_barrier(self, state, u) -> np.ndarray:
        raise NotImplementedError

    def _result(self, state, u_des, status, u_act, active=(), solver=None,
                fallback=False):
        u_des = np.asarray(u_des, dtype=float)
        u_act = np.clip(u_act, self._lo, self._hi)
        intervened = bool(np.max(np.abs(u_act - u_des)) > INTERVENTION_TOL)
        return FilterResult(control=u_act, intervened=intervened, status=status,
                            active=active, solver=solver, fallback=fallback)

    def _fallback(self, state, u_des, status, solver=None):
        u_b = backup_control(state, self.config)
        return self._result(state, u_des, status, u_b, solver=solver,
                            fallback=True)


class ExplicitAsif(_FilterBase):
    """Explicit ASIF: barrier conditions at the current state only."""

    def __init__(self, config: FilterConfig, backend=None):
        super().__init__(config, backend)
        self._alphas = np.array(config.alpha.continuous)
        self._eye = np.eye(6)[None, :, :]

    def _rows(self, state):
        x = np.asarray(state, dtype=float)
        cw = self.config.cw
        return self._kern.barrier_rows(x, x[None, :], self._eye, cw.n,
                                       1.0 / cw.m, self._sp, self._alphas)

    def check_barrier(self, state, u) -> np.ndarray:
        G, c = self._rows(state)
        return G @ np.asarray(u, dtype=float) + c

    def filter(self, state, u_des) -> FilterResult:
        G, c = self._rows(state)
        u_des = np.asarray(u_des, dtype=float)
        status, x, lam, _, _ = self._kern.qp_solve(
            self._H, -2.0 * u_des, G, c, self._lo, self._hi, FEASIBILITY_TOL)
        if status != QP_OPTIMAL:
            return self._fallback(state, u_des, QP_STATUS_NAMES[status])
        active = tuple(int(i) for i in np.flatnonzero(
            np.asarray(lam)[:G.shape[0]] > FEASIBILITY_TOL))
        return self._result(state, u_des, "optimal", np.asarray(x), active)


class ImplicitAsif(ExplicitAsif):
    """Implicit ASIF: barrier conditions along the backup trajectory."""

    def __init__(self, config: FilterConfig, backend=None):
        super().__init__(config, backend)
        self._n_sub = _substeps(config.dt)

    def backup_trajectory(self, state) -> BackupTrajectory:
        cfg = self.config
        J = cfg.num_steps
        nodes, sens = self._kern.backup_trajectory(
            np.asarray(state, dtype=float), J, cfg.dt, self._n_sub,
            cfg.cw.n, 1.0 / cfg.cw.m, cfg.backup_kv, cfg.backup_kp,
            cfg.backup_hold_radius, cfg.cw.u_max)
        times = np.arange(J + 1) * cfg.dt
        return BackupTrajectory(times=times, nodes=np.asarray(nodes),
                                sens=np.asarray(sens))

    def _rows(self, state):
        x = np.asarray(state, dtype=float)
        traj = self.backup_trajectory(x)
        cw = self.config.cw
        return self._kern.barrier_rows(x, traj.nodes, traj.sens, cw.n,
                                       1.0 / cw.m, self._sp, self._alphas)


class DiscreteAsif(_FilterBase):
    """Discrete ASIF: barrier conditions on the exactly-propagated next state."""

    def __init__(self, config: FilterConfig, backend=None):
        super().__init__(config, backend)
        self._gammas = np.array(config.alpha.discrete)
        self._phi, self._gam = dynamics.transition_matrices(config.dt, config.cw)

    def check_barrier(self, state, u) -> np.ndarray:
        x = np.asarray(state, dtype=float)
        h0 = self._kern.h_values(x, self._sp)
        base = self._phi @ x
        return self._kern.dasif_residuals(base, self._gam,
                                          np.asarray(u, dtype=float), h0,
                                          self.config.dt, self._gammas, self._sp)

    def filter(self, state, u_des) -> FilterResult:
        cfg = self.config
        x = np.asarray(state, dtype=float)
        u_des = np.asarray(u_des, dtype=float)
        u0 = np.clip(u_des, self._lo, self._hi)
        h0 = self._kern.h_values(x, self._sp)
        base = self._phi @ x
        kern = self._kern
        dt = cfg.dt
        gammas = self._gammas
        sp = self._sp

        res0 = kern.dasif_residuals(base, self._gam, u0, h0, dt, gammas, sp)
        if res0.min() >= 0.0:
            # feasible desired control is already the minimizer
            return self._result(x, u_des, "optimal", u0,
                                active=self._active(res0))

        problem = NlpProblem(
            dim=3,
            objective=lambda u: float(np.sum((u - u_des) ** 2)),
            gradient=lambda u: 2.0 * (u - u_des),
            hessian=self._H,
            residuals=lambda u: kern.dasif_residuals(base, self._gam, u, h0,
                                                     dt, gammas, sp),
            jacobian=lambda u: kern.dasif_jacobian(base, self._gam, u, dt, sp),
            lo=self._lo,
            hi=self._hi,
            rel_tol=cfg.tolerance,
            abs_tol=cfg.tolerance,
            time_limit=cfg.time_limit,
        )
        outcome = solve_nlp(problem, x0=u0, backend=self._kern)
        if outcome.status == "optimal":
            res = kern.dasif_residuals(base, self._gam, outcome.x, h0, dt,
                                       gammas, sp)
            return self._result(x, u_des, "optimal", outcome.x,
                                active=self._active(res), solver=outcome)
        if outcome.status in ("timeout", "iteration-limit") \
                and outcome.max_violation <= 10.0 * cfg.tolerance:
            return self._result(x, u_des, outcome.status, outcome.x,
                                solver=outcome)
        return self._fallback(x, u_des, outcome.status, solver=outcome)

    def _active(self, residuals):
        tol = max(self.config.tolerance, 1e-9)
        return tuple(int(i) for i in np.flatnonzero(residuals <= tol))


_FILTER_CLASSES = {"easif": ExplicitAsif, "iasif": ImplicitAsif,
                   "dasif": DiscreteAsif}


def make_filter(config: FilterConfig, backend=None) -> _FilterBase:
    """Instantiate the filter class matching ``config.kind``."""
    return _FILTER_CLASSES[config.kind](config, backend)


def filter_easif(state, u_des, config: FilterConfig) -> FilterResult:
    """One explicit-ASIF call (constructs a fresh filter; reuse
    ``ExplicitAsif`` instances in loops)."""
    return ExplicitAsif(config).filter(state, u_des)


def filter_iasif(state, u_des, config: FilterConfig) -> FilterResult:
    """One implicit-ASIF call."""
    return ImplicitAsif(config).filter(state, u_des)


def filter_dasif(state, u_des, config: FilterConfig) -> FilterResult:
    """One discrete-ASIF call."""
    return DiscreteAsif(config).filter(state, u_des)


def compute_backup_trajectory(state, config: FilterConfig) -> BackupTrajectory:
    """Backup trajectory with sensitivities for an implicit config."""
    if config.kind != "iasif":
        raise ValueError("backup trajectories are an implicit-filter feature")
    return ImplicitAsif(config).backup_trajectory(state)


def check_barrier(state, u, config: FilterConfig) -> np.ndarray:
    """Barrier residuals of (state, u) for the configured filter kind."""
    return make_filter(config).check_barrier(state, u)
