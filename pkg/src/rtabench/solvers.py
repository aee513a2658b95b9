"""Embedded numerical optimizers for the safety filters.

``solve_qp`` wraps a dense dual active-set solver (Goldfarb-Idnani
family, re-factorizing at each step; problems here are tiny). The
filters use it with H = 2I in dimension 3, where the unconstrained
start already equals the desired control, so feasible desired controls
return immediately.

``solve_nlp`` is a sequential-quadratic-programming local method for
the discrete filter's nonlinear constraints: constraints are
linearized, the QP above solves each subproblem (with an elastic-slack
relaxation when the linearization is infeasible), and an l1 merit
function gates the step. A wall-clock limit bounds every call; on
timeout the best iterate found so far is returned.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._backend import get_backend
from ._pykernels import QP_BREAKDOWN, QP_INFEASIBLE, QP_MAXITER, QP_OPTIMAL

FEASIBILITY_TOL = 1e-8

QP_STATUS_NAMES = {
    QP_OPTIMAL: "optimal",
    QP_INFEASIBLE: "infeasible",
    QP_MAXITER: "iteration-limit",
    QP_BREAKDOWN: "infeasible",
}


@dataclass
class SolveOutcome:
    """Result of a QP or NLP solve.

    ``status`` is one of ``optimal``, ``infeasible``, ``timeout`` or
    ``iteration-limit``. Nonlinear solves return the best iterate found
    on any exit; a non-optimal QP result carries the last iterate only
    as a diagnostic.
    """

    status: str
    x: np.ndarray
    max_violation: float
    iterations: int
    elapsed: float
    multipliers: np.ndarray | None = None
    active: tuple = ()
    message: str = ""


@dataclass
class QpProblem:
    """min 1/2 u'Hu + q'u subject to G u + b >= 0 and box bounds.

    H must be symmetric positive definite and lo <= hi componentwise;
    treat instances as immutable once built.
    """

    H: np.ndarray
    q: np.ndarray
    G: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        d = self.H.shape[0]
        self.G = np.asarray(self.G, dtype=float).reshape(-1, d)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if not np.allclose(self.H, self.H.T, atol=1e-12):
            raise ValueError("H must be symmetric")
        try:
            np.linalg.cholesky(self.H)
        except np.linalg.LinAlgError as exc:
            raise ValueError("H must be positive definite") from exc
        if np.any(self.lo > self.hi):
            raise ValueError("box bounds must satisfy lo <= hi")


def solve_qp(problem: QpProblem, backend=None) -> SolveOutcome:
    """Solve a QpProblem; on ``optimal`` the KKT residual is at the
    feasibility tolerance (1e-8)."""
    kern = get_backend(backend)
    t0 = time.perf_counter()
    status, x, lam, iters, viol = kern.qp_solve(
        problem.H, problem.q, problem.G, problem.b, problem.lo, problem.hi,
        FEASIBILITY_TOL)
    elapsed = time.perf_counter() - t0
    n_rows = problem.G.shape[0]
    active = tuple(int(i) for i in np.flatnonzero(lam[:n_rows] > FEASIBILITY_TOL))
    message = "numerical breakdown in active set" if status == QP_BREAKDOWN else ""
    return SolveOutcome(status=QP_STATUS_NAMES[status], x=np.asarray(x),
                        max_violation=float(viol), iterations=int(iters),
                        elapsed=elapsed, multipliers=np.asarray(lam),
                        active=active, message=message)


@dataclass
class NlpProblem:
    """Box-constrained nonlinear program with inequality residuals >= 0.

    ``residuals`` may be a single callable returning the stacked
    residual vector or a sequence of scalar callables. ``jacobian``
    (residuals) and ``gradient``/``hessian`` (objective) are optional;
    missing derivatives fall back to central finite differences.
    """

    dim: int
    objective: Callable[[np.ndarray], float]
    residuals: Callable | Sequence[Callable]
    lo: np.ndarray
    hi: np.ndarray
    gradient: Callable | None = None
    jacobian: Callable | None = None
    hessian: np.ndarray | None = None
    rel_tol: float = 1e-4
    abs_tol: float = 1e-4
    time_limit: float = 60.0
    max_iter: int = 200

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.time_limit <= 0.0:
            raise ValueError("time limit must be positive")
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)


def _residual_fn(problem: NlpProblem):
    res = problem.residuals
    if callable(res):
        return lambda u: np.atleast_1d(np.asarray(res(u), dtype=float))
    fns = tuple(res)
    return lambda u: np.array([float(f(u)) for f in fns])


def _fd_gradient(f, u, h=1e-7):
    g = np.empty(u.size)
    for i in range(u.size):
        step = h * (1.0 + abs(u[i]))
        up = u.copy()
        um = u.copy()
        up[i] += step
        um[i] -= step
        g[i] = (f(up) - f(um)) / (2.0 * step)
    return g


def _fd_jacobian(rfn, u, h=1e-7):
    r0 = rfn(u)
    J = np.empty((r0.size, u.size))
    for i in range(u.size):
        step = h * (1.0 + abs(u[i]))
        up = u.copy()
        um = u.copy()
        up[i] += step
        um[i] -= step
        J[:, i] = (rfn(up) - rfn(um)) / (2.0 * step)
    return J


def solve_nlp(problem: NlpProblem, x0=None, backend=None) -> SolveOutcome:
    """SQP solve of an NlpProblem from ``x0`` (default: box midpoint).

    Deterministic; returns the visited iterate with lexicographically
    smallest (constraint violation, objective), which makes the final
    violation nonincreasing when tolerances are tightened.
    """
    kern = get_backend(backend)
    t_start = time.perf_counter()
    deadline = t_start + problem.time_limit
    d = problem.dim
    lo, hi = problem.lo, problem.hi

    rfn = _residual_fn(problem)
    obj = problem.objective
    grad = problem.gradient or (lambda u: _fd_gradient(obj, u))
    jac = problem.jacobian or (lambda u: _fd_jacobian(rfn, u))

    if x0 is None:
        x0 = 0.5 * (np.where(np.isfinite(lo), lo, -1.0)
                    + np.where(np.isfinite(hi), hi, 1.0))
    u = np.clip(np.asarray(x0, dtype=float), lo, hi)

    B = np.asarray(problem.hessian, dtype=float) if problem.hessian is not None \
        else np.eye(d)
    use_bfgs = problem.hessian is None

    def violation(r):
        # violations at float-noise level count as feasible so the
        # best-iterate key prefers the converged point over a merely
        # feasible start; the floor is tolerance-independent, which
        # keeps the final violation nonincreasing under tightening
        v = max(0.0, float(-(r.min()))) if r.size else 0.0
        return v if v > 1e-12 else 0.0

    r = rfn(u)
    f = float(obj(u))
    g = grad(u)
    best = (violation(r), f, u.copy())
    rho = 10.0
    status = "iteration-limit"
    message = ""
    iters = 0

    for iters in range(1, problem.max_iter + 1):
        if time.perf_counter() > deadline:
            status = "timeout"
            message = "wall-clock limit reached"
            break
        J = jac(u)
        n_con = r.size
        # QP subproblem on the step: linearized constraints, box shifted
        st, dstep, lam, _, _ = kern.qp_solve(
            B, g, J, r, lo - u, hi - u, FEASIBILITY_TOL)
        if st != QP_OPTIMAL:
            # elastic relaxation: minimize slack usage, always feasible
            He = np.zeros((d + n_con, d + n_con))
            He[:d, :d] = B
            He[d:, d:] = np.eye(n_con) * (0.01 * rho)
            qe = np.concatenate([g, np.full(n_con, rho)])
            Ge = np.concatenate([J, np.eye(n_con)], axis=1)
            lo_e = np.concatenate([lo - u, np.zeros(n_con)])
            hi_e = np.concatenate([hi - u, np.full(n_con, math.inf)])
            st, w, lam, _, _ = kern.qp_solve(He, qe, Ge, r, lo_e, hi_e,
                                             FEASIBILITY_TOL)
            if st != QP_OPTIMAL:
                status = "infeasible"
                message = "subproblem breakdown"
                break
            dstep = np.asarray(w)[:d]
            rho *= 10.0
        dstep = np.asarray(dstep)
        lam_max = float(np.abs(lam[:n_con]).max()) if n_con else 0.0
        rho = max(rho, 2.0 * lam_max + 1.0)

        viol_u = violation(r)
        merit_u = f + rho * viol_u
        pred = float(g @ dstep) - rho * viol_u
        step = 1.0
        accepted = False
        for _ in range(25):
            cand = np.clip(u + step * dstep, lo, hi)
            r_c = rfn(cand)
            f_c = float(obj(cand))
            if f_c + rho * violation(r_c) <= merit_u + 0.1 * step * min(pred, 0.0):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            cand = np.clip(u + step * dstep, lo, hi)
            r_c = rfn(cand)
            f_c = float(obj(cand))

        if use_bfgs:
            g_new = grad(cand)
            s_vec = cand - u
            y_vec = g_new - g
            sy = float(s_vec @ y_vec)
            if sy > 1e-12:
                Bs = B @ s_vec
                B = B + np.outer(y_vec, y_vec) / sy \
                    - np.outer(Bs, Bs) / float(s_vec @ Bs)
            g = g_new
        u_prev = u
        u, r, f = cand, r_c, f_c
        if not use_bfgs:
            g = grad(u)
        key = (violation(r), f)
        if key < best[:2]:
            best = (key[0], key[1], u.copy())

        step_norm = float(np.linalg.norm(u - u_prev))
        if step_norm <= problem.rel_tol * (1.0 + float(np.linalg.norm(u))):
            if violation(r) <= problem.abs_tol:
                status = "optimal"
            else:
                status = "infeasible"
                message = "converged to an infeasible point"
            break

    elapsed = time.perf_counter() - t_start
    viol_best, f_best, u_best = best
    return SolveOutcome(status=status, x=u_best, max_violation=viol_best,
                        iterations=iters, elapsed=elapsed, message=message)
