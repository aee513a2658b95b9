"""Acceptance gate: one test per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line
per criterion. Wall-clock budgets are asserted on the compiled backend
(the shipped configuration); the pure-python fallback is correct but
slower.
"""

import math
import time

import numpy as np
import pytest

import oracles
from rtabench import bench
from rtabench._backend import DEFAULT_BACKEND
from rtabench.bench import BenchConfig, compute_stats, generate_states, run_config
from rtabench.dynamics import CwParams, a_matrix, b_matrix, transition_matrices
from rtabench.filters import (DiscreteAsif, ExplicitAsif, FilterConfig,
                              ImplicitAsif, backup_control,
                              compute_backup_trajectory)
from rtabench.policy import build_observation, evaluate, random_network
from rtabench.safety import SafetyParams, h_gradients, h_values
from rtabench.solvers import QpProblem, solve_qp

CW = CwParams()
SP = SafetyParams()
COMPILED = DEFAULT_BACKEND == "compiled"


def _passed(num, detail):
    print(f"\nACCEPTANCE {num} PASS: {detail}")


def filter_under_test(kind):
    if kind == "easif":
        return ExplicitAsif(FilterConfig(kind="easif"))
    if kind == "iasif":
        return ImplicitAsif(FilterConfig(kind="iasif", dt=1.0, horizon=20.0))
    return DiscreteAsif(FilterConfig(kind="dasif", dt=1.0, tolerance=1e-4))


def feasible_pairs(filt, count, seed):
    """Seeded (state, u_des) pairs whose residuals at u_des are all >= 0."""
    rng = np.random.default_rng(seed)
    cases = generate_states("safe", 8000, seed, with_summaries=False)
    pairs = []
    for case in cases:
        u_des = rng.uniform(-CW.u_max, CW.u_max, 3)
        if filt.check_barrier(case.state, u_des).min() >= 0.0:
            pairs.append((case.state, u_des))
            if len(pairs) == count:
                return pairs
    raise AssertionError(f"only {len(pairs)} feasible pairs found")


@pytest.fixture(scope="module")
def invasiveness_runs():
    """Criterion 1 work product, reused by criterion 3."""
    results = {}
    start = time.perf_counter()
    for kind, tol in (("easif", 1e-6), ("iasif", 1e-6), ("dasif", 1e-4)):
        filt = filter_under_test(kind)
        deviations = []
        residual_mins = []
        for state, u_des in feasible_pairs(filt, 1000, 42):
            res = filt.filter(state, u_des)
            deviations.append(np.abs(res.control - u_des).max())
            if res.status == "optimal":
                residual_mins.append(
                    filt.check_barrier(state, res.control).min())
        results[kind] = (np.array(deviations), np.array(residual_mins), tol)
    results["elapsed"] = time.perf_counter() - start
    return results


def test_criterion_01_minimal_invasiveness(invasiveness_runs):
    for kind in ("easif", "iasif", "dasif"):
        deviations, _, tol = invasiveness_runs[kind]
        assert deviations.size == 1000
        assert deviations.max() <= tol, f"{kind}: {deviations.max():.2e}"
    elapsed = invasiveness_runs["elapsed"]
    if COMPILED:
        assert elapsed < 10.0
    _passed(1, "1000 feasible desired controls pass through each filter "
               f"(worst deviations: easif {invasiveness_runs['easif'][0].max():.1e}, "
               f"iasif {invasiveness_runs['iasif'][0].max():.1e}, "
               f"dasif {invasiveness_runs['dasif'][0].max():.1e}; "
               f"{elapsed:.1f}s)")


@pytest.fixture(scope="module")
def invariance_run():
    """Criterion 2 work product, reused by criterion 3."""
    filt = ExplicitAsif(FilterConfig(kind="easif"))
    mats = transition_matrices(1.0, CW)
    cases = generate_states("safe", 100, 2024, with_summaries=False)
    min_margin = math.inf
    residual_min = math.inf
    start = time.perf_counter()
    for i, case in enumerate(cases):
        rng = np.random.default_rng(20240000 + i)
        state = case.state.copy()
        for _ in range(1223):
            u_des = rng.uniform(-CW.u_max, CW.u_max, 3)
            res = filt.filter(state, u_des)
            if res.status == "optimal":
                residual_min = min(residual_min,
                                   filt.check_barrier(state, res.control).min())
            state = mats[0] @ state + mats[1] @ res.control
            min_margin = min(min_margin, h_values(state, SP).min())
    return {"min_margin": min_margin, "residual_min": residual_min,
            "elapsed": time.perf_counter() - start}


def test_criterion_02_forward_invariance(invariance_run):
    assert invariance_run["min_margin"] >= -1e-3
    if COMPILED:
        assert invariance_run["elapsed"] < 120.0
    _passed(2, "100 episodes x 1223 steps at 1 Hz keep min_i h_i >= -1e-3 "
               f"(worst {invariance_run['min_margin']:.4f}, "
               f"{invariance_run['elapsed']:.1f}s)")


def test_criterion_03_post_solve_feasibility(invasiveness_runs, invariance_run):
    for kind, qp_bound in (("easif", -1e-8), ("iasif", -1e-8)):
        _, residual_mins, _ = invasiveness_runs[kind]
        assert residual_mins.min() >= qp_bound
    _, dasif_res, tol = invasiveness_runs["dasif"]
    assert dasif_res.min() >= -tol
    assert invariance_run["residual_min"] >= -1e-8

    worst = {}
    for kind, bound in (("easif", 1e-8), ("iasif", 1e-8), ("dasif", 1e-4)):
        filt = filter_under_test(kind)
        rng = np.random.default_rng(9)
        low = math.inf
        for case in generate_states("not_safe", 1000, 31, with_summaries=False):
            u_des = rng.uniform(-CW.u_max, CW.u_max, 3)
            res = filt.filter(case.state, u_des)
            if res.status == "optimal":
                low = min(low, filt.check_barrier(case.state, res.control).min())
        assert low >= -bound, f"{kind}: {low:.2e}"
        worst[kind] = low
    _passed(3, "barrier residuals at every optimal filter output stay above "
               f"-1e-8 / -tolerance (not-safe-suite worst: "
               f"easif {worst['easif']:.1e}, iasif {worst['iasif']:.1e}, "
               f"dasif {worst['dasif']:.1e})")


def test_criterion_04_qp_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    n_optimal = 0
    for _ in range(500):
        A = rng.normal(size=(3, 3))
        H = A @ A.T + 3.0 * np.eye(3)
        q = rng.normal(size=3) * 2.0
        m = int(rng.integers(0, 8))
        G = rng.normal(size=(m, 3))
        b = rng.normal(size=m)
        prob = QpProblem(H=H, q=q, G=G, b=b, lo=-np.ones(3), hi=np.ones(3))
        out = solve_qp(prob)
        ref = oracles.qp_enumeration_oracle(H, q, G, b, prob.lo, prob.hi)
        if ref is None:
            assert out.status == "infeasible"
            continue
        x_ref, obj_ref = ref
        assert out.status == "optimal"
        assert np.abs(out.x - x_ref).max() < 1e-6
        obj = 0.5 * out.x @ H @ out.x + q @ out.x
        assert abs(obj - obj_ref) < 1e-8
        n_optimal += 1
    elapsed = time.perf_counter() - start
    if COMPILED:
        assert elapsed < 5.0
    _passed(4, f"500 random QPs match the active-set enumeration oracle "
               f"({n_optimal} optimal, {elapsed:.1f}s)")


def test_criterion_05_sensitivity_matrices():
    config = FilterConfig(kind="iasif", dt=1.0, horizon=20.0)
    eps = 1e-4
    worst = 0.0
    states = [c.state for c in generate_states("safe", 20, 77,
                                               with_summaries=False)]
    for state in states:
        traj = compute_backup_trajectory(state, config)
        assert traj.nodes.shape == (21, 6)
        for col in range(6):
            e = np.zeros(6)
            e[col] = eps
            plus = compute_backup_trajectory(state + e, config).nodes
            minus = compute_backup_trajectory(state - e, config).nodes
            fd = (plus - minus) / (2.0 * eps)
            for j in range(21):
                denom = max(1.0, np.linalg.norm(fd[j]))
                err = np.linalg.norm(traj.sens[j][:, col] - fd[j]) / denom
                worst = max(worst, err)
    assert worst <= 1e-3
    _passed(5, f"sensitivity columns match finite differences at all 21 nodes "
               f"for 20 states (worst rel err {worst:.1e})")


def test_criterion_06_dynamics_oracle():
    from scipy.linalg import expm
    rng = np.random.default_rng(6)
    states = np.column_stack([rng.uniform(-500, 500, (50, 3)),
                              rng.uniform(-0.5, 0.5, (50, 3))])
    controls = rng.uniform(-1.0, 1.0, (50, 3))
    mats = transition_matrices(1000.0, CW)
    closed = states @ mats[0].T + controls @ mats[1].T
    endpoints = oracles.rk4_batch(states, controls, 0.01, 100_000,
                                  n=CW.n, m=CW.m)
    rel = np.abs(closed - endpoints) / (1.0 + np.abs(endpoints))
    assert rel.max() <= 1e-5

    M = np.zeros((9, 9))
    M[:6, :6] = a_matrix(CW)
    M[:6, 6:] = b_matrix(CW)
    worst_phi = 0.0
    for dt in (1.0, 10.0):
        Phi, _ = transition_matrices(dt, CW)
        ref = expm(M * dt)[:6, :6]
        worst_phi = max(worst_phi, np.abs(Phi - ref).max())
    assert worst_phi <= 1e-10
    _passed(6, f"closed-form propagation matches RK4 over 1000 s at 50 states "
               f"(worst rel {rel.max():.1e}); Phi matches expm to "
               f"{worst_phi:.1e}")


def test_criterion_07_gradient_correctness():
    states = [c.state for c in generate_states("safe", 1000, 13,
                                               with_summaries=False)]
    eps = 1e-6
    worst = 0.0
    for state in states:
        _, grads = h_gradients(state, SP)
        for i in range(6):
            fd = np.empty(6)
            for j in range(6):
                e = np.zeros(6)
                e[j] = eps
                fd[j] = (h_values(state + e, SP)[i]
                         - h_values(state - e, SP)[i]) / (2.0 * eps)
            denom = max(1.0, np.abs(fd).max())
            worst = max(worst, np.abs(grads[i] - fd).max() / denom)
    assert worst <= 1e-4
    _passed(7, f"all six gradients match central differences at 1000 safe "
               f"states (worst rel err {worst:.1e})")


def test_criterion_08_statistics_fidelity():
    rep = compute_stats([4.0, 1.0, 3.0, 2.0])
    assert rep.iqm == 2.5 and rep.moet == 4.0
    rng = np.random.default_rng(8)
    for _ in range(1000):
        n = int(rng.integers(1, 258))
        values = rng.uniform(size=n)
        rep = compute_stats(values)
        ref = oracles.sort_and_trim_stats(values)
        assert rep.iqm == ref["iqm"]
        assert rep.moet == ref["moet"]
        assert rep.min == ref["min"]
        assert rep.median == ref["median"]
    _passed(8, "IQM/MOET equal the sort-and-trim oracle on 1000 sample "
               "vectors (n in 1..257) and the worked example")


def test_criterion_09_implicit_reduces_to_explicit():
    fe = ExplicitAsif(FilterConfig(kind="easif"))
    f0 = ImplicitAsif(FilterConfig(kind="iasif", dt=1.0, horizon=0.0))
    rng = np.random.default_rng(99)
    worst_u = 0.0
    for case in generate_states("safe", 200, 55, with_summaries=False):
        ge, ce = fe._rows(case.state)
        gi, ci = f0._rows(case.state)
        assert np.array_equal(ge, gi)
        assert np.array_equal(ce, ci)
        u_des = rng.uniform(-1.0, 1.0, 3)
        diff = np.abs(fe.filter(case.state, u_des).control
                      - f0.filter(case.state, u_des).control).max()
        worst_u = max(worst_u, diff)
    assert worst_u <= 1e-9
    _passed(9, f"zero-horizon implicit rows equal explicit rows exactly on "
               f"200 states (max control diff {worst_u:.1e})")


def _timing_run(kind, **kw):
    config = BenchConfig(
        controller="random",
        rta=FilterConfig(kind=kind, **kw),
        suite="safe", cases=1000, seed=7)
    samples, first = run_config(config)
    return compute_stats(samples, label=config.label, first_call=first.elapsed)


@pytest.mark.skipif(not COMPILED, reason="the timing trend is defined for the "
                    "shipped compiled backend; numpy call overhead dominates "
                    "the fallback's implicit-filter cost and inverts the ratio")
def test_criterion_10_trend_reproduction():
    rep_e = _timing_run("easif")
    rep_i = _timing_run("iasif", dt=1.0, horizon=20.0)
    rep_d = _timing_run("dasif", dt=10.0, tolerance=1e-4)
    assert rep_e.iqm < rep_i.iqm < rep_d.iqm, \
        (rep_e.iqm, rep_i.iqm, rep_d.iqm)
    _passed(10, "IQM ordering easif < iasif(dt=1) < dasif(dt=10, tol=1e-4): "
                f"{1e3 * rep_e.iqm:.3f} < {1e3 * rep_i.iqm:.3f} < "
                f"{1e3 * rep_d.iqm:.3f} ms")


def test_criterion_11_safe_actions_speed_up_dasif():
    config = FilterConfig(kind="dasif", dt=1.0, tolerance=1e-3)
    filt = DiscreteAsif(config)
    cases = generate_states("safe", 1000, 7, with_summaries=False)
    rng = np.random.default_rng(7)
    random_actions = rng.uniform(-CW.u_max, CW.u_max, (1000, 3))
    # feasibility-pre-checked controller: keep the random action when it
    # already satisfies the barrier pre-check, otherwise substitute the
    # first strictly feasible fallback (coast, backup law, scaled
    # backup), all decided outside the timed span
    safe_actions = np.empty_like(random_actions)
    n_substituted = 0
    for i, case in enumerate(cases):
        u_b = backup_control(case.state, config)
        for cand in (random_actions[i], np.zeros(3), u_b, 0.5 * u_b,
                     0.25 * u_b):
            if filt.check_barrier(case.state, cand).min() >= 0.0:
                safe_actions[i] = cand
                break
        else:
            safe_actions[i] = filt.filter(case.state, random_actions[i]).control
            n_substituted += 1
    assert n_substituted < 50

    def timed(actions):
        ts = []
        for case, u in zip(cases, actions):
            t0 = time.perf_counter_ns()
            filt.filter(case.state, u)
            ts.append((time.perf_counter_ns() - t0) * 1e-9)
        return compute_stats(ts[1:])

    timed(random_actions)  # warm caches before measuring
    iqm_random = timed(random_actions).iqm
    iqm_safe = timed(safe_actions).iqm
    assert iqm_safe < iqm_random
    _passed(11, f"dasif IQM with pre-checked safe actions "
                f"{1e3 * iqm_safe:.3f} ms < random actions "
                f"{1e3 * iqm_random:.3f} ms")


def test_criterion_12_policy_inference():
    rng = np.random.default_rng(12)
    for variant in ("no_sensors", "all_sensors"):
        net = random_network(variant, seed=3)
        assert [l.weight.shape[0] for l in net.layers] == [256, 256, 6]
        layers = [(l.weight, l.bias, l.activation) for l in net.layers]
        worst = 0.0
        for _ in range(100):
            obs = rng.normal(size=net.input_dim)
            worst = max(worst, np.abs(evaluate(net, obs)
                                      - oracles.mlp_forward_oracle(layers, obs)).max())
        assert worst <= 1e-6
    obs = build_observation([100.0, 0, 0, 0.5, 0, 0], 0.0, None, "no_sensors")
    assert np.allclose(obs, [1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    _passed(12, "forward pass matches the straight-line oracle for both "
                "architectures; observation normalization reproduces "
                "[100,0,0,0.5,0,0] -> [1,0,0,1,0,0]")


def test_criterion_13_dasif_liveness():
    config = FilterConfig(kind="dasif", dt=1.0, tolerance=1e-8,
                          time_limit=0.05)
    assert FilterConfig(kind="dasif", dt=1.0).time_limit == 60.0
    filt = DiscreteAsif(config)
    state = np.array([300.0, 0.0, 0.0, 20.0, 0.0, 0.0])
    start = time.perf_counter()
    res = filt.filter(state, np.array([1.0, 0.0, 0.0]))
    elapsed = time.perf_counter() - start
    assert elapsed < 0.2
    assert res.status != "optimal"
    assert res.fallback or res.solver is not None
    _passed(13, f"hard discrete instance returns {res.status} in "
                f"{elapsed * 1e3:.1f} ms under a 0.05 s limit "
                f"(default limit 60 s)")
