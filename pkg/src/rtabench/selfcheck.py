"""Quick invariant suite behind ``rta-bench verify``.

Runs seconds-scale spot checks of the load-bearing numerics (closed
form vs integrator, gradients vs finite differences, QP KKT conditions,
statistics, filter minimal invasiveness, implicit-to-explicit
reduction, backend parity) and prints one PASS/FAIL line each. The full
acceptance gate lives in the pytest suite.
"""

from __future__ import annotations

import numpy as np

from . import bench, dynamics, filters, safety
from ._backend import available_backends, get_backend
from .safety import AlphaSpec, SafetyParams
from .solvers import QpProblem, solve_qp


def _check(name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"{tag} {name}{suffix}")
    return bool(ok)


def run_verify(seed: int = 0) -> bool:
    ok = True
    rng = np.random.default_rng(seed)
    cw = dynamics.CwParams()
    sp = SafetyParams()

    # closed-form propagation vs RK4 and the semigroup property
    kern = get_backend(None)
    state = np.array([120.0, -40.0, 60.0, 0.2, -0.1, 0.15])
    u = np.array([0.3, -0.5, 0.2])
    closed = dynamics.propagate(state, u, 10.0, cw)
    rk = kern.rk4_const(state, u, 0.01, 1000, cw.n, 1.0 / cw.m)
    err = np.max(np.abs(closed - rk) / (1.0 + np.abs(rk)))
    ok &= _check("closed-form propagation vs RK4", err < 1e-9, f"rel err {err:.2e}")
    phi1, _ = dynamics.transition_matrices(7.0, cw)
    phi2, _ = dynamics.transition_matrices(3.0, cw)
    phi3, _ = dynamics.transition_matrices(10.0, cw)
    err = np.abs(phi2 @ phi1 - phi3).max()
    det = abs(np.linalg.det(phi3) - 1.0)
    ok &= _check("transition-matrix semigroup and determinant",
                 err < 1e-9 and det < 1e-9, f"{err:.2e}, {det:.2e}")

    # analytic gradients vs central differences
    worst = 0.0
    for _ in range(50):
        x = np.concatenate([rng.uniform(-500, 500, 3), rng.uniform(-0.8, 0.8, 3)])
        if np.linalg.norm(x[:3]) < sp.r_collision + 5.0:
            continue
        _, grads = safety.h_gradients(x, sp)
        for i in range(6):
            fd = np.empty(6)
            for j in range(6):
                e = np.zeros(6)
                e[j] = 1e-6
                fd[j] = (safety.h_values(x + e, sp)[i]
                         - safety.h_values(x - e, sp)[i]) / 2e-6
            denom = max(1.0, np.abs(fd).max())
            worst = max(worst, np.abs(grads[i] - fd).max() / denom)
    ok &= _check("constraint gradients vs finite differences", worst < 1e-4,
                 f"max rel err {worst:.2e}")

    # QP KKT conditions on random instances
    worst_kkt = 0.0
    for _ in range(50):
        A = rng.normal(size=(3, 3))
        prob = QpProblem(H=A @ A.T + 3.0 * np.eye(3), q=rng.normal(size=3),
                         G=rng.normal(size=(5, 3)), b=rng.normal(size=5),
                         lo=-np.ones(3), hi=np.ones(3))
        out = solve_qp(prob)
        if out.status != "optimal":
            continue
        rows, offs = _stacked_rows(prob)
        stat = prob.H @ out.x + prob.q - rows.T @ out.multipliers
        compl = np.abs(out.multipliers * (rows @ out.x + offs))
        worst_kkt = max(worst_kkt, np.abs(stat).max(), compl.max(),
                        max(0.0, -out.multipliers.min()))
    ok &= _check("QP KKT residuals", worst_kkt < 1e-8, f"{worst_kkt:.2e}")

    # statistics worked example
    rep = bench.compute_stats([4.0, 1.0, 3.0, 2.0])
    ok &= _check("IQM worked example [4,1,3,2]",
                 rep.iqm == 2.5 and rep.moet == 4.0 and rep.min == 1.0
                 and rep.median == 2.5)

    # minimal invasiveness and implicit->explicit reduction
    alpha = AlphaSpec()
    fe = filters.ExplicitAsif(filters.FilterConfig(kind="easif", alpha=alpha))
    f0 = filters.ImplicitAsif(filters.FilterConfig(kind="iasif", dt=1.0,
                                                   horizon=0.0, alpha=alpha))
    cases = bench.generate_states("safe", 100, seed, with_summaries=False)
    worst_dev = 0.0
    worst_red = 0.0
    n_checked = 0
    for case in cases:
        u_des = rng.uniform(-1.0, 1.0, 3)
        if fe.check_barrier(case.state, u_des).min() >= 0.0:
            res = fe.filter(case.state, u_des)
            worst_dev = max(worst_dev, np.abs(res.control - u_des).max())
            n_checked += 1
        ge, ce = fe._rows(case.state)
        gi, ci = f0._rows(case.state)
        worst_red = max(worst_red, np.abs(ge - gi).max(), np.abs(ce - ci).max())
    ok &= _check("explicit-filter minimal invasiveness", worst_dev <= 1e-6,
                 f"{n_checked} feasible cases, max dev {worst_dev:.2e}")
    ok &= _check("implicit filter with zero horizon reduces to explicit",
                 worst_red == 0.0, f"max row diff {worst_red:.2e}")

    # backend parity
    if "compiled" in available_backends():
        py = get_backend("python")
        cc = get_backend("compiled")
        worst_par = 0.0
        for case in cases[:25]:
            v1, g1 = py.h_gradients(case.state, sp.as_array())
            v2, g2 = cc.h_gradients(case.state, sp.as_array())
            worst_par = max(worst_par, np.abs(v1 - v2).max(),
                            np.abs(g1 - g2).max())
        ok &= _check("compiled/python kernel parity", worst_par < 1e-12,
                     f"{worst_par:.2e}")
    else:
        print("SKIP compiled/python kernel parity (extension not built)")

    print("verify:", "all checks passed" if ok else "FAILURES above")
    return bool(ok)


def _stacked_rows(prob: QpProblem):
    d = prob.H.shape[0]
    rows = [prob.G]
    offs = [prob.b]
    for i in range(d):
        if np.isfinite(prob.lo[i]):
            e = np.zeros(d)
            e[i] = 1.0
            rows.append(e[None, :])
            offs.append(np.array([-prob.lo[i]]))
    for i in range(d):
        if np.isfinite(prob.hi[i]):
            e = np.zeros(d)
            e[i] = -1.0
            rows.append(e[None, :])
            offs.append(np.array([prob.hi[i]]))
    return np.concatenate(rows), np.concatenate(offs)
