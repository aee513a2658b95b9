# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled filter hot kernels.

Same surface as ``rtabench._pykernels``: constraint values/gradients,
the dual active-set QP, barrier-row assembly, backup-trajectory
integration with sensitivities, an RK4 propagator, the MLP forward pass
and the discrete-filter residuals. The QP reuses module-level scratch
buffers (callers hold the GIL for the whole solve, solver objects are
per-thread by contract), so steady-state solves allocate only their
output arrays.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, isfinite, sqrt, tanh

cnp.import_array()

cdef enum:
    _OPTIMAL = 0
    _INFEASIBLE = 1
    _MAXITER = 2
    _BREAKDOWN = 3

QP_OPTIMAL = _OPTIMAL
QP_INFEASIBLE = _INFEASIBLE
QP_MAXITER = _MAXITER
QP_BREAKDOWN = _BREAKDOWN

DEF MAX_D = 24
DEF MAX_M = 512
DEF MAX_WIDTH = 1024

cdef double _EPS_DEP = 1e-12

# ---------------------------------------------------------------------------
# constraint values and gradients
# sp layout: [a_max, r_collision, r_max, nu0, nu1, v_max]

cdef void _h_vals(const double* x, const double* sp, double* out) noexcept nogil:
    cdef double r, s, vrad, arg
    r = sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    s = sqrt(x[3] * x[3] + x[4] * x[4] + x[5] * x[5])
    vrad = (x[0] * x[3] + x[1] * x[4] + x[2] * x[5]) / r if r > 0.0 else 0.0
    arg = 2.0 * sp[0] * (r - sp[1])
    out[0] = (sqrt(arg) if arg >= 0.0 else -sqrt(-arg)) + vrad
    arg = 2.0 * sp[0] * (sp[2] - r)
    out[1] = (sqrt(arg) if arg >= 0.0 else -sqrt(-arg)) - vrad
    out[2] = sp[3] + sp[4] * r - s
    out[3] = sp[5] * sp[5] - x[3] * x[3]
    out[4] = sp[5] * sp[5] - x[4] * x[4]
    out[5] = sp[5] * sp[5] - x[5] * x[5]


cdef void _h_grads(const double* x, const double* sp, double* vals,
                   double* grads) noexcept nogil:
    # grads is a row-major 6x6 block, zeroed here
    cdef int i
    cdef double r, s, pv, vrad, arg1, arg2, ds1, ds2, ph0, ph1, ph2
    cdef double dv0, dv1, dv2
    for i in range(36):
        grads[i] = 0.0
    r = sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    s = sqrt(x[3] * x[3] + x[4] * x[4] + x[5] * x[5])
    pv = x[0] * x[3] + x[1] * x[4] + x[2] * x[5]
    vrad = pv / r if r > 0.0 else 0.0
    arg1 = 2.0 * sp[0] * (r - sp[1])
    arg2 = 2.0 * sp[0] * (sp[2] - r)
    vals[0] = (sqrt(arg1) if arg1 >= 0.0 else -sqrt(-arg1)) + vrad
    vals[1] = (sqrt(arg2) if arg2 >= 0.0 else -sqrt(-arg2)) - vrad
    vals[2] = sp[3] + sp[4] * r - s
    vals[3] = sp[5] * sp[5] - x[3] * x[3]
    vals[4] = sp[5] * sp[5] - x[4] * x[4]
    vals[5] = sp[5] * sp[5] - x[5] * x[5]
    if r > 0.0:
        ph0 = x[0] / r
        ph1 = x[1] / r
        ph2 = x[2] / r
        ds1 = sp[0] / sqrt(fabs(arg1)) if arg1 != 0.0 else INFINITY
        ds2 = sp[0] / sqrt(fabs(arg2)) if arg2 != 0.0 else INFINITY
        dv0 = x[3] / r - pv * x[0] / (r * r * r)
        dv1 = x[4] / r - pv * x[1] / (r * r * r)
        dv2 = x[5] / r - pv * x[2] / (r * r * r)
        grads[0] = ds1 * ph0 + dv0
        grads[1] = ds1 * ph1 + dv1
        grads[2] = ds1 * ph2 + dv2
        grads[3] = ph0
        grads[4] = ph1
        grads[5] = ph2
        grads[6] = -ds2 * ph0 - dv0
        grads[7] = -ds2 * ph1 - dv1
        grads[8] = -ds2 * ph2 - dv2
        grads[9] = -ph0
        grads[10] = -ph1
        grads[11] = -ph2
        grads[12] = sp[4] * ph0
        grads[13] = sp[4] * ph1
        grads[14] = sp[4] * ph2
    if s > 0.0:
        grads[15] = -x[3] / s
        grads[16] = -x[4] / s
        grads[17] = -x[5] / s
    grads[21] = -2.0 * x[3]
    grads[28] = -2.0 * x[4]
    grads[35] = -2.0 * x[5]


def h_values(x, sp):
    """Constraint values h1..h6 at state ``x`` for packed params ``sp``."""
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] spv = np.ascontiguousarray(sp, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] out = np.empty(6)
    _h_vals(&xv[0], &spv[0], &out[0])
    return out


def h_gradients(x, sp):
    """Constraint values and 6x6 gradient matrix at state ``x``."""
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] spv = np.ascontiguousarray(sp, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] vals = np.empty(6)
    cdef cnp.ndarray[double, ndim=2] grads = np.empty((6, 6))
    _h_grads(&xv[0], &spv[0], &vals[0], &grads[0, 0])
    return vals, grads


# ---------------------------------------------------------------------------
# dense dual active-set QP

cdef double _scr_R[MAX_M * MAX_D]
cdef double _scr_c[MAX_M]
cdef double _scr_HL[MAX_D * MAX_D]
cdef double _scr_Hin[MAX_D]
cdef double _scr_z[MAX_D]
cdef double _scr_HiN[MAX_D * MAX_D]
cdef double _scr_W[MAX_D * MAX_D]
cdef double _scr_rhs[MAX_D]
cdef double _scr_r[MAX_D]
cdef double _scr_col[MAX_D]
cdef int _scr_active[MAX_D]


cdef int _chol(double* A, int n) noexcept nogil:
    # in-place lower Cholesky; returns nonzero on a nonpositive pivot
    cdef int i, j, k
    cdef double acc
    for j in range(n):
        acc = A[j * n + j]
        for k in range(j):
            acc -= A[j * n + k] * A[j * n + k]
        if acc <= 0.0:
            return 1
        A[j * n + j] = sqrt(acc)
        for i in range(j + 1, n):
            acc = A[i * n + j]
            for k in range(j):
                acc -= A[i * n + k] * A[j * n + k]
            A[i * n + j] = acc / A[j * n + j]
    return 0


cdef void _chol_solve(const double* L, int n, double* b) noexcept nogil:
    cdef int i, k
    cdef double acc
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= L[i * n + k] * b[k]
        b[i] = acc / L[i * n + i]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for k in range(i + 1, n):
            acc -= L[k * n + i] * b[k]
        b[i] = acc / L[i * n + i]


cdef int _qp_core(const double* H, const double* q, int d, int M,
                  double tol, int max_iter, double* x, double* lam,
                  int* iters_out, double* viol_out) noexcept nogil:
    cdef int i, j, k, p, idx, j_drop, iters, col, status
    cdef double s_min, s_i, s_p, denom, scale, t1, t2, t, acc, viol
    cdef const double* n_p

    for i in range(d * d):
        _scr_HL[i] = H[i]
    if _chol(_scr_HL, d):
        viol_out[0] = INFINITY
        iters_out[0] = 0
        return _BREAKDOWN
    for i in range(d):
        x[i] = -q[i]
    _chol_solve(_scr_HL, d, x)
    for i in range(M):
        lam[i] = 0.0

    k = 0
    iters = 0
    status = -1
    while status < 0:
        # most-violated row, lowest index on ties
        p = -1
        s_min = -tol
        for i in range(M):
            s_i = _scr_c[i]
            for j in range(d):
                s_i += _scr_R[i * MAX_D + j] * x[j]
            if s_i < s_min:
                s_min = s_i
                p = i
        if p < 0:
            status = _OPTIMAL
            break
        n_p = &_scr_R[p * MAX_D]
        s_p = s_min
        while True:
            iters += 1
            if iters > max_iter:
                status = _MAXITER
                break
            for i in range(d):
                _scr_Hin[i] = n_p[i]
            _chol_solve(_scr_HL, d, _scr_Hin)
            if k > 0:
                for idx in range(k):
                    j = _scr_active[idx]
                    for i in range(d):
                        _scr_col[i] = _scr_R[j * MAX_D + i]
                    _chol_solve(_scr_HL, d, _scr_col)
                    for i in range(d):
                        _scr_HiN[i * MAX_D + idx] = _scr_col[i]
                for i in range(k):
                    for j in range(k):
                        acc = 0.0
                        for col in range(d):
                            acc += _scr_R[_scr_active[i] * MAX_D + col] \
                                * _scr_HiN[col * MAX_D + j]
                        _scr_W[i * MAX_D + j] = acc
                for i in range(k):
                    _scr_rhs[i] = 0.0
                    for col in range(d):
                        _scr_rhs[i] += _scr_R[_scr_active[i] * MAX_D + col] \
                            * _scr_Hin[col]
                if _chol_w(k):
                    status = _BREAKDOWN
                    break
                for i in range(k):
                    _scr_r[i] = _scr_rhs[i]
                _chol_solve_w(k, _scr_r)
                for i in range(d):
                    acc = 0.0
                    for j in range(k):
                        acc += _scr_HiN[i * MAX_D + j] * _scr_r[j]
                    _scr_z[i] = _scr_Hin[i] - acc
            else:
                for i in range(d):
                    _scr_z[i] = _scr_Hin[i]

            denom = 0.0
            scale = 1.0
            for i in range(d):
                denom += _scr_z[i] * n_p[i]
                scale += n_p[i] * n_p[i]
            t1 = INFINITY
            j_drop = -1
            for idx in range(k):
                if _scr_r[idx] > _EPS_DEP:
                    t = lam[_scr_active[idx]] / _scr_r[idx]
                    if t < t1:
                        t1 = t
                        j_drop = idx
            t2 = -s_p / denom if denom > _EPS_DEP * scale else INFINITY
            t = t1 if t1 < t2 else t2
            if not isfinite(t):
                status = _INFEASIBLE
                break
            for idx in range(k):
                lam[_scr_active[idx]] -= t * _scr_r[idx]
            lam[p] += t
            if isfinite(t2):
                for i in range(d):
                    x[i] += t * _scr_z[i]
                s_p += t * denom
            if t2 <= t1:
                _scr_active[k] = p
                k += 1
                break
            lam[_scr_active[j_drop]] = 0.0
            for idx in range(j_drop, k - 1):
                _scr_active[idx] = _scr_active[idx + 1]
            k -= 1

    viol = 0.0
    for i in range(M):
        s_i = _scr_c[i]
        for j in range(d):
            s_i += _scr_R[i * MAX_D + j] * x[j]
        if -s_i > viol:
            viol = -s_i
    viol_out[0] = viol
    iters_out[0] = iters
    return status


cdef double _scr_WL[MAX_D * MAX_D]


cdef int _chol_w(int k) noexcept nogil:
    # factor the k x k leading block of _scr_W (MAX_D stride) into _scr_WL
    cdef int i, j, c
    cdef double acc
    for j in range(k):
        acc = _scr_W[j * MAX_D + j]
        for c in range(j):
            acc -= _scr_WL[j * MAX_D + c] * _scr_WL[j * MAX_D + c]
        if acc <= 0.0:
            return 1
        _scr_WL[j * MAX_D + j] = sqrt(acc)
        for i in range(j + 1, k):
            acc = _scr_W[i * MAX_D + j]
            for c in range(j):
                acc -= _scr_WL[i * MAX_D + c] * _scr_WL[j * MAX_D + c]
            _scr_WL[i * MAX_D + j] = acc / _scr_WL[j * MAX_D + j]
    return 0


cdef void _chol_solve_w(int k, double* b) noexcept nogil:
    cdef int i, c
    cdef double acc
    for i in range(k):
        acc = b[i]
        for c in range(i):
            acc -= _scr_WL[i * MAX_D + c] * b[c]
        b[i] = acc / _scr_WL[i * MAX_D + i]
    for i in range(k - 1, -1, -1):
        acc = b[i]
        for c in range(i + 1, k):
            acc -= _scr_WL[c * MAX_D + i] * b[c]
        b[i] = acc / _scr_WL[i * MAX_D + i]


def qp_solve(H, q, G, b, lo, hi, double tol=1e-8, int max_iter=0):
    """Dual active-set solve; see ``rtabench._pykernels.qp_solve``."""
    cdef cnp.ndarray[double, ndim=2] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef int d = Hv.shape[0]
    cdef cnp.ndarray[double, ndim=2] Gv = \
        np.ascontiguousarray(G, dtype=np.float64).reshape(-1, d)
    cdef cnp.ndarray[double, ndim=1] bv = \
        np.ascontiguousarray(b, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef int m = Gv.shape[0]
    cdef int i, j, M

    if d > MAX_D:
        raise ValueError(f"compiled QP supports dimension <= {MAX_D}")
    M = m
    for i in range(d):
        if isfinite(lov[i]):
            M += 1
        if isfinite(hiv[i]):
            M += 1
    if M > MAX_M:
        raise ValueError(f"compiled QP supports <= {MAX_M} constraint rows")

    for i in range(m):
        for j in range(d):
            _scr_R[i * MAX_D + j] = Gv[i, j]
        _scr_c[i] = bv[i]
    cdef int row = m
    for i in range(d):
        if isfinite(lov[i]):
            for j in range(d):
                _scr_R[row * MAX_D + j] = 0.0
            _scr_R[row * MAX_D + i] = 1.0
            _scr_c[row] = -lov[i]
            row += 1
    for i in range(d):
        if isfinite(hiv[i]):
            for j in range(d):
                _scr_R[row * MAX_D + j] = 0.0
            _scr_R[row * MAX_D + i] = -1.0
            _scr_c[row] = hiv[i]
            row += 1

    if max_iter <= 0:
        max_iter = 50 * (M + 1)

    cdef cnp.ndarray[double, ndim=1] x = np.empty(d)
    cdef cnp.ndarray[double, ndim=1] lam = np.empty(M)
    cdef int iters = 0
    cdef double viol = 0.0
    cdef int status = _qp_core(&Hv[0, 0], &qv[0], d, M, tol, max_iter,
                               &x[0], &lam[0], &iters, &viol)
    return status, x, lam, iters, viol


# ---------------------------------------------------------------------------
# barrier rows and backup trajectory

def barrier_rows(x, nodes, sens, double n, double inv_m, sp, alphas):
    """Barrier rows G u + c >= 0; see ``rtabench._pykernels.barrier_rows``."""
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] nod = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] D = np.ascontiguousarray(sens, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] spv = np.ascontiguousarray(sp, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] al = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef int K = nod.shape[0]
    cdef cnp.ndarray[double, ndim=2] G = np.empty((6 * K, 3))
    cdef cnp.ndarray[double, ndim=1] c = np.empty(6 * K)
    cdef double fx[6]
    cdef double vals[6]
    cdef double grads[36]
    cdef double gD[36]
    cdef int jn, i, j, k
    cdef double acc

    fx[0] = xv[3]
    fx[1] = xv[4]
    fx[2] = xv[5]
    fx[3] = 3.0 * n * n * xv[0] + 2.0 * n * xv[4]
    fx[4] = -2.0 * n * xv[3]
    fx[5] = -n * n * xv[2]

    for jn in range(K):
        _h_grads(&nod[jn, 0], &spv[0], vals, grads)
        for i in range(6):
            for j in range(6):
                acc = 0.0
                for k in range(6):
                    acc += grads[i * 6 + k] * D[jn, k, j]
                gD[i * 6 + j] = acc
        for i in range(6):
            G[6 * jn + i, 0] = inv_m * gD[i * 6 + 3]
            G[6 * jn + i, 1] = inv_m * gD[i * 6 + 4]
            G[6 * jn + i, 2] = inv_m * gD[i * 6 + 5]
            acc = 0.0
            for j in range(6):
                acc += gD[i * 6 + j] * fx[j]
            c[6 * jn + i] = acc + al[i] * vals[i]
    return G, c


cdef void _backup_raw(const double* x, double kv, double kp, double r_hold,
                      double* u) noexcept nogil:
    cdef double r = sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    cdef double gain
    u[0] = -kv * x[3]
    u[1] = -kv * x[4]
    u[2] = -kv * x[5]
    if 0.0 < r < r_hold:
        gain = kp * (r_hold - r) / r
        u[0] += gain * x[0]
        u[1] += gain * x[1]
        u[2] += gain * x[2]


cdef void _closed_loop(const double* x, double n, double inv_m, double kv,
                       double kp, double r_hold, double u_max, double* f,
                       double* J) noexcept nogil:
    cdef double u_raw[3]
    cdef double u[3]
    cdef double ph[3]
    cdef int i, k
    cdef double r, coef

    _backup_raw(x, kv, kp, r_hold, u_raw)
    for k in range(3):
        u[k] = u_raw[k]
        if u[k] > u_max:
            u[k] = u_max
        elif u[k] < -u_max:
            u[k] = -u_max
    f[0] = x[3]
    f[1] = x[4]
    f[2] = x[5]
    f[3] = 3.0 * n * n * x[0] + 2.0 * n * x[4] + inv_m * u[0]
    f[4] = -2.0 * n * x[3] + inv_m * u[1]
    f[5] = -n * n * x[2] + inv_m * u[2]

    for i in range(36):
        J[i] = 0.0
    J[3] = 1.0
    J[10] = 1.0
    J[17] = 1.0
    J[18] = 3.0 * n * n
    J[22] = 2.0 * n
    J[27] = -2.0 * n
    J[32] = -n * n

    r = sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    cdef bint inside = 0.0 < r < r_hold
    if inside:
        ph[0] = x[0] / r
        ph[1] = x[1] / r
        ph[2] = x[2] / r
        coef = kp * (r_hold - r) / r
    for k in range(3):
        if fabs(u_raw[k]) >= u_max:
            continue
        J[(3 + k) * 6 + 3 + k] += -inv_m * kv
        if inside:
            for i in range(3):
                J[(3 + k) * 6 + i] += inv_m * (
                    coef * ((1.0 if i == k else 0.0) - ph[k] * ph[i])
                    - kp * ph[k] * ph[i])


def backup_control_law(x, double kv, double kp, double r_hold, double u_max):
    """Saturated PD backup law (see the pure-python twin)."""
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] u = np.empty(3)
    _backup_raw(&xv[0], kv, kp, r_hold, &u[0])
    cdef int k
    for k in range(3):
        if u[k] > u_max:
            u[k] = u_max
        elif u[k] < -u_max:
            u[k] = -u_max
    return u


def backup_trajectory(x0, int num_nodes, double node_dt, int n_sub, double n,
                      double inv_m, double kv, double kp, double r_hold,
                      double u_max):
    """Backup trajectory and sensitivities via tangent-consistent RK4."""
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] nodes = np.empty((num_nodes + 1, 6))
    cdef cnp.ndarray[double, ndim=3] sens = np.empty((num_nodes + 1, 6, 6))
    cdef double x[6]
    cdef double D[36]
    cdef double xs[6]
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double J[36]
    cdef double K1[36]
    cdef double K2[36]
    cdef double K3[36]
    cdef double K4[36]
    cdef double Dtmp[36]
    cdef double h = node_dt / n_sub
    cdef int i, j, jn, sub

    for i in range(6):
        x[i] = xv[i]
        nodes[0, i] = x[i]
    for i in range(36):
        D[i] = 0.0
    for i in range(6):
        D[i * 6 + i] = 1.0
        for j in range(6):
            sens[0, i, j] = D[i * 6 + j]

    for jn in range(num_nodes):
        for sub in range(n_sub):
            _closed_loop(x, n, inv_m, kv, kp, r_hold, u_max, k1, J)
            _mat66(J, D, K1)
            for i in range(6):
                xs[i] = x[i] + 0.5 * h * k1[i]
            for i in range(36):
                Dtmp[i] = D[i] + 0.5 * h * K1[i]
            _closed_loop(xs, n, inv_m, kv, kp, r_hold, u_max, k2, J)
            _mat66(J, Dtmp, K2)
            for i in range(6):
                xs[i] = x[i] + 0.5 * h * k2[i]
            for i in range(36):
                Dtmp[i] = D[i] + 0.5 * h * K2[i]
            _closed_loop(xs, n, inv_m, kv, kp, r_hold, u_max, k3, J)
            _mat66(J, Dtmp, K3)
            for i in range(6):
                xs[i] = x[i] + h * k3[i]
            for i in range(36):
                Dtmp[i] = D[i] + h * K3[i]
            _closed_loop(xs, n, inv_m, kv, kp, r_hold, u_max, k4, J)
            _mat66(J, Dtmp, K4)
            for i in range(6):
                x[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(36):
                D[i] += (h / 6.0) * (K1[i] + 2.0 * K2[i] + 2.0 * K3[i] + K4[i])
        for i in range(6):
            nodes[jn + 1, i] = x[i]
            for j in range(6):
                sens[jn + 1, i, j] = D[i * 6 + j]
    return nodes, sens


cdef void _mat66(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(6):
        for j in range(6):
            acc = 0.0
            for k in range(6):
                acc += A[i * 6 + k] * B[k * 6 + j]
            C[i * 6 + j] = acc


def rk4_const(x0, u, double h, int steps, double n, double inv_m):
    """RK4 endpoint under constant control."""
    cdef cnp.ndarray[double, ndim=1] xv = \
        np.ascontiguousarray(x0, dtype=np.float64).copy()
    cdef cnp.ndarray[double, ndim=1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double x[6]
    cdef double xs[6]
    cdef double k1[6]
    cdef double k2[6]
    cdef double k3[6]
    cdef double k4[6]
    cdef double bu[3]
    cdef int i, step
    for i in range(6):
        x[i] = xv[i]
    for i in range(3):
        bu[i] = inv_m * uv[i]
    for step in range(steps):
        _cw_field(x, n, bu, k1)
        for i in range(6):
            xs[i] = x[i] + 0.5 * h * k1[i]
        _cw_field(xs, n, bu, k2)
        for i in range(6):
            xs[i] = x[i] + 0.5 * h * k2[i]
        _cw_field(xs, n, bu, k3)
        for i in range(6):
            xs[i] = x[i] + h * k3[i]
        _cw_field(xs, n, bu, k4)
        for i in range(6):
            x[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    cdef cnp.ndarray[double, ndim=1] out = np.empty(6)
    for i in range(6):
        out[i] = x[i]
    return out


cdef void _cw_field(const double* x, double n, const double* bu,
                    double* f) noexcept nogil:
    f[0] = x[3]
    f[1] = x[4]
    f[2] = x[5]
    f[3] = 3.0 * n * n * x[0] + 2.0 * n * x[4] + bu[0]
    f[4] = -2.0 * n * x[3] + bu[1]
    f[5] = -n * n * x[2] + bu[2]


# ---------------------------------------------------------------------------
# MLP forward pass

cdef double _scr_buf_a[MAX_WIDTH]
cdef double _scr_buf_b[MAX_WIDTH]


def mlp_forward(weights, biases, activations, x):
    """MLP forward pass; activation codes 0 (linear) and 1 (tanh)."""
    cdef cnp.ndarray[double, ndim=1] cur = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] W
    cdef cnp.ndarray[double, ndim=1] bvec
    cdef cnp.ndarray[cnp.int32_t, ndim=1] acts = \
        np.ascontiguousarray(activations, dtype=np.int32)
    cdef double* src = _scr_buf_a
    cdef double* dst = _scr_buf_b
    cdef double* swp
    cdef int n_in, n_out, i, j, layer
    cdef double acc
    n_in = cur.shape[0]
    if n_in > MAX_WIDTH:
        raise ValueError(f"compiled MLP supports width <= {MAX_WIDTH}")
    for i in range(n_in):
        src[i] = cur[i]
    for layer in range(len(weights)):
        W = weights[layer]
        bvec = biases[layer]
        n_out = W.shape[0]
        if n_out > MAX_WIDTH or W.shape[1] != n_in:
            raise ValueError("layer shape mismatch in compiled MLP")
        for i in range(n_out):
            acc = bvec[i]
            for j in range(n_in):
                acc += W[i, j] * src[j]
            dst[i] = tanh(acc) if acts[layer] == 1 else acc
        swp = src
        src = dst
        dst = swp
        n_in = n_out
    out = np.empty(n_in)
    for i in range(n_in):
        out[i] = src[i]
    return out


# ---------------------------------------------------------------------------
# discrete-filter residuals

def dasif_residuals(base, gamma, u, h0, double dt, gammas, sp):
    """Discrete barrier residuals (h(x') - h(x)) / dt + gamma_i h_i(x)."""
    cdef cnp.ndarray[double, ndim=1] bs = np.ascontiguousarray(base, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] Gm = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] h0v = np.ascontiguousarray(h0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] gv = np.ascontiguousarray(gammas, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] spv = np.ascontiguousarray(sp, dtype=np.float64)
    cdef double xn[6]
    cdef double h1[6]
    cdef int i, j
    for i in range(6):
        xn[i] = bs[i]
        for j in range(3):
            xn[i] += Gm[i, j] * uv[j]
    _h_vals(xn, &spv[0], h1)
    cdef cnp.ndarray[double, ndim=1] out = np.empty(6)
    for i in range(6):
        out[i] = (h1[i] - h0v[i]) / dt + gv[i] * h0v[i]
    return out


def dasif_jacobian(base, gamma, u, double dt, sp):
    """Jacobian of the discrete residuals with respect to the control."""
    cdef cnp.ndarray[double, ndim=1] bs = np.ascontiguousarray(base, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] Gm = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] spv = np.ascontiguousarray(sp, dtype=np.float64)
    cdef double xn[6]
    cdef double vals[6]
    cdef double grads[36]
    cdef int i, j, k
    cdef double acc
    for i in range(6):
        xn[i] = bs[i]
        for j in range(3):
            xn[i] += Gm[i, j] * uv[j]
    _h_grads(xn, &spv[0], vals, grads)
    cdef cnp.ndarray[double, ndim=2] out = np.empty((6, 3))
    for i in range(6):
        for j in range(3):
            acc = 0.0
            for k in range(6):
                acc += grads[i * 6 + k] * Gm[k, j]
            out[i, j] = acc / dt
    return out
