"""Pure-numpy implementations of the filter hot kernels.

This module mirrors the surface of the compiled extension
``rtabench._kernels`` and is selected as a fallback when the extension
is unavailable (see ``rtabench._backend``). Parameter packs follow the
flat layouts produced by ``SafetyParams.as_array`` so both backends are
drop-in interchangeable.

Kernel QP/status codes: 0 = optimal, 1 = infeasible, 2 = iteration
limit, 3 = numerical breakdown.
"""

from __future__ import annotations

import math

import numpy as np

from .safety import SafetyParams

QP_OPTIMAL = 0
QP_INFEASIBLE = 1
QP_MAXITER = 2
QP_BREAKDOWN = 3

_EPS_DEP = 1e-12


_params_cache: dict = {}


def _params_from_array(sp):
    key = tuple(float(v) for v in sp)
    params = _params_cache.get(key)
    if params is None:
        a_max, r_dc, r_max, nu0, nu1, v_max = key
        params = SafetyParams(a_max=a_max, r_deputy=0.5 * r_dc,
                              r_chief=0.5 * r_dc, r_max=r_max, nu0=nu0,
                              nu1=nu1, v_max=v_max)
        if len(_params_cache) > 64:
            _params_cache.clear()
        _params_cache[key] = params
    return params


def h_values(x, sp):
    """Constraint values h1..h6 at state ``x`` for packed params ``sp``."""
    from . import safety
    return safety.h_values(x, _params_from_array(sp))


def h_gradients(x, sp):
    """Constraint values and 6x6 gradient matrix at state ``x``."""
    from . import safety
    return safety.h_gradients(x, _params_from_array(sp))


def qp_solve(H, q, G, b, lo, hi, tol=1e-8, max_iter=0):
    """Dual active-set solve of min 1/2 u'Hu + q'u s.t. G u + b >= 0, lo <= u <= hi.

    Box bounds are folded in as extra rows (infinite bounds skipped).
    Returns ``(status, x, lam, iters, max_violation)`` where ``lam``
    holds multipliers for the ``G`` rows followed by the generated
    lower- then upper-bound rows.
    """
    H = np.asarray(H, dtype=float)
    q = np.asarray(q, dtype=float)
    d = H.shape[0]
    rows = [np.asarray(G, dtype=float).reshape(-1, d)]
    offs = [np.asarray(b, dtype=float).ravel()]
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    for i in range(d):
        if np.isfinite(lo[i]):
            e = np.zeros(d)
            e[i] = 1.0
            rows.append(e.reshape(1, d))
            offs.append(np.array([-lo[i]]))
    for i in range(d):
        if np.isfinite(hi[i]):
            e = np.zeros(d)
            e[i] = -1.0
            rows.append(e.reshape(1, d))
            offs.append(np.array([hi[i]]))
    R = np.concatenate(rows, axis=0)
    c = np.concatenate(offs)
    M = R.shape[0]
    if max_iter <= 0:
        max_iter = 50 * (M + 1)

    lam = np.zeros(M)
    try:
        x = -np.linalg.solve(H, q)
    except np.linalg.LinAlgError:
        return QP_BREAKDOWN, np.zeros(d), lam, 0, math.inf

    active: list[int] = []
    iters = 0
    while True:
        s = R @ x + c
        p = int(np.argmin(s)) if M else 0
        if M == 0 or s[p] >= -tol:
            viol = max(0.0, -float(s.min())) if M else 0.0
            return QP_OPTIMAL, x, lam, iters, viol
        n_p = R[p]
        s_p = float(s[p])
        while True:
            iters += 1
            if iters > max_iter:
                return QP_MAXITER, x, lam, iters, max(0.0, -float((R @ x + c).min()))
            try:
                if active:
                    N = R[active].T
                    HiN = np.linalg.solve(H, N)
                    Hin = np.linalg.solve(H, n_p)
                    W = N.T @ HiN
                    r = np.linalg.solve(W, N.T @ Hin)
                    z = Hin - HiN @ r
                else:
                    r = np.empty(0)
                    z = np.linalg.solve(H, n_p)
            except np.linalg.LinAlgError:
                return QP_BREAKDOWN, x, lam, iters, max(0.0, -float((R @ x + c).min()))
            denom = float(z @ n_p)
            scale = float(n_p @ n_p) + 1.0
            t1 = math.inf
            j_drop = -1
            for idx, j in enumerate(active):
                if r[idx] > _EPS_DEP:
                    tj = lam[j] / r[idx]
                    if tj < t1:
                        t1 = tj
                        j_drop = idx
            t2 = -s_p / denom if denom > _EPS_DEP * scale else math.inf
            t = min(t1, t2)
            if not math.isfinite(t):
                return QP_INFEASIBLE, x, lam, iters, max(0.0, -float((R @ x + c).min()))
            if active:
                lam[active] -= t * r
            lam[p] += t
            if math.isfinite(t2):
                x = x + t * z
                s_p += t * denom
            if t2 <= t1:
                active.append(p)
                break
            lam[active[j_drop]] = 0.0
            del active[j_drop]


def barrier_rows(x, nodes, sens, n, inv_m, sp, alphas):
    """Barrier-constraint rows G u + c >= 0 for a set of trajectory nodes.

    One row per (node j, constraint i), node-major: the row direction is
    grad h_i(node_j) @ D_j @ B and the offset is
    grad h_i(node_j) @ D_j @ f(x) + alpha_i * h_i(node_j), with f and B
    evaluated at the query state ``x``. The explicit filter is the
    single-node case with D = identity.
    """
    x = np.asarray(x, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    sens = np.asarray(sens, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    K = nodes.shape[0]
    fx = np.empty(6)
    fx[0:3] = x[3:6]
    fx[3] = 3.0 * n * n * x[0] + 2.0 * n * x[4]
    fx[4] = -2.0 * n * x[3]
    fx[5] = -n * n * x[2]
    G = np.empty((6 * K, 3))
    c = np.empty(6 * K)
    for j in range(K):
        hvals, grads = h_gradients(nodes[j], sp)
        gD = grads @ sens[j]
        G[6 * j:6 * j + 6] = inv_m * gD[:, 3:6]
        c[6 * j:6 * j + 6] = gD @ fx + alphas * hvals
    return G, c


def _backup_raw(x, kv, kp, r_hold):
    p = x[0:3]
    v = x[3:6]
    r = float(np.linalg.norm(p))
    u = -kv * v
    if 0.0 < r < r_hold:
        u = u + kp * (r_hold - r) * (p / r)
    return u


def backup_control_law(x, kv, kp, r_hold, u_max):
    """Saturated PD backup law: damp velocity, hold off the keep-out zone."""
    return np.clip(_backup_raw(np.asarray(x, dtype=float), kv, kp, r_hold),
                   -u_max, u_max)


def _closed_loop(x, n, inv_m, kv, kp, r_hold, u_max):
    # field and exact (a.e.) Jacobian of x' = A x + B u_b(x)
    p = x[0:3]
    v = x[3:6]
    u_raw = _backup_raw(x, kv, kp, r_hold)
    u = np.clip(u_raw, -u_max, u_max)
    f = np.empty(6)
    f[0:3] = v
    f[3] = 3.0 * n * n * x[0] + 2.0 * n * x[4] + inv_m * u[0]
    f[4] = -2.0 * n * x[3] + inv_m * u[1]
    f[5] = -n * n * x[2] + inv_m * u[2]

    J = np.zeros((6, 6))
    J[0, 3] = J[1, 4] = J[2, 5] = 1.0
    J[3, 0] = 3.0 * n * n
    J[3, 4] = 2.0 * n
    J[4, 3] = -2.0 * n
    J[5, 2] = -n * n
    du = np.zeros((3, 6))
    r = float(np.linalg.norm(p))
    for k in range(3):
        if abs(u_raw[k]) >= u_max:
            continue
        du[k, 3 + k] = -kv
        if 0.0 < r < r_hold:
            p_hat = p / r
            # d/dp [ kp (r_hold - r) p/r ] row k
            du[k, 0:3] += kp * ((r_hold - r) / r) * (_EYE3[k] - p_hat[k] * p_hat)
            du[k, 0:3] += kp * (-p_hat[k]) * p_hat
    J[3:6, :] += inv_m * du
    return f, J


_EYE3 = np.eye(3)


def backup_trajectory(x0, num_nodes, node_dt, n_sub, n, inv_m, kv, kp, r_hold, u_max):
    """Closed-loop backup trajectory with sensitivity matrices.

    Integrates x' = A x + B u_b(x) and the variational system
    D' = J_cl(x) D, D(0) = I, with RK4 at ``n_sub`` substeps per node
    interval. Returns ``(nodes, sens)`` with shapes
    ``(num_nodes + 1, 6)`` and ``(num_nodes + 1, 6, 6)``.
    """
    x = np.asarray(x0, dtype=float).copy()
    D = np.eye(6)
    nodes = np.empty((num_nodes + 1, 6))
    sens = np.empty((num_nodes + 1, 6, 6))
    nodes[0] = x
    sens[0] = D
    h = node_dt / n_sub
    args = (n, inv_m, kv, kp, r_hold, u_max)
    for j in range(num_nodes):
        for _ in range(n_sub):
            k1, J1 = _closed_loop(x, *args)
            K1 = J1 @ D
            x2 = x + 0.5 * h * k1
            k2, J2 = _closed_loop(x2, *args)
            K2 = J2 @ (D + 0.5 * h * K1)
            x3 = x + 0.5 * h * k2
            k3, J3 = _closed_loop(x3, *args)
            K3 = J3 @ (D + 0.5 * h * K2)
            x4 = x + h * k3
            k4, J4 = _closed_loop(x4, *args)
            K4 = J4 @ (D + h * K3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            D = D + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        nodes[j + 1] = x
        sens[j + 1] = D
    return nodes, sens


def rk4_const(x0, u, h, steps, n, inv_m):
    """RK4 endpoint under constant control (oracle-grade integrator)."""
    x = np.asarray(x0, dtype=float).copy()
    u = np.asarray(u, dtype=float)
    bu = np.zeros(6)
    bu[3:6] = inv_m * u

    def f(state):
        out = np.empty(6)
        out[0:3] = state[3:6]
        out[3] = 3.0 * n * n * state[0] + 2.0 * n * state[4]
        out[4] = -2.0 * n * state[3]
        out[5] = -n * n * state[2]
        return out + bu

    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def mlp_forward(weights, biases, activations, x):
    """MLP forward pass; ``activations[i]`` is 0 (linear) or 1 (tanh)."""
    y = np.asarray(x, dtype=float)
    for W, b, act in zip(weights, biases, activations):
        y = W @ y + b
        if act == 1:
            y = np.tanh(y)
            assert np.abs(y).max() <= 1.0
    return y


def dasif_residuals(base, gamma, u, h0, dt, gammas, sp):
    """Discrete barrier residuals (h(x') - h(x)) / dt + gamma_i h_i(x).

    ``base`` is Phi @ x (the drift part of the next state), ``gamma``
    the input matrix, and ``h0`` the constraint values at the current
    state.
    """
    x_next = base + gamma @ np.asarray(u, dtype=float)
    h1 = h_values(x_next, sp)
    return (h1 - h0) / dt + np.asarray(gammas, dtype=float) * h0


def dasif_jacobian(base, gamma, u, dt, sp):
    """Jacobian of the discrete residuals with respect to the control."""
    x_next = base + gamma @ np.asarray(u, dtype=float)
    _, grads = h_gradients(x_next, sp)
    return (grads @ gamma) / dt
