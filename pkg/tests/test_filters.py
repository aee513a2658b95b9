import time

import numpy as np
import pytest
from scipy.linalg import expm

from rtabench.bench import generate_states, simulate_episode
from rtabench.dynamics import CwParams, a_matrix
from rtabench.filters import (DiscreteAsif, ExplicitAsif, FilterConfig,
                              ImplicitAsif, backup_control, check_barrier,
                              compute_backup_trajectory, filter_dasif,
                              filter_easif, filter_iasif, make_filter)
from rtabench.safety import AlphaSpec, SafetyParams, h_values

CW = CwParams()
SP = SafetyParams()
INTERIOR = np.array([500.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def cfg(kind, **kw):
    return FilterConfig(kind=kind, **kw)


def safe_cases(count, seed):
    return [c.state for c in generate_states("safe", count, seed,
                                             with_summaries=False)]


# --- explicit filter -------------------------------------------------------

def test_easif_interior_state_is_untouched():
    res = filter_easif(INTERIOR, np.zeros(3), cfg("easif"))
    assert res.status == "optimal"
    assert not res.intervened
    assert np.abs(res.control).max() < 1e-12


def test_easif_axis_speed_boundary_kkt():
    # on the h4 boundary the filter must cap the x-acceleration so that
    # -2*vx*(accel_x) + alpha(0) = 0; the natural dynamics contribute
    # 3n^2 x, so u_x = -m * 3n^2 x
    state = np.array([500.0, 0.0, 0.0, SP.v_max, 0.0, 0.0])
    filt = ExplicitAsif(cfg("easif"))
    res = filt.filter(state, np.array([1.0, 0.0, 0.0]))
    assert res.status == "optimal"
    assert res.intervened
    expected_ux = -CW.m * 3.0 * CW.n ** 2 * 500.0
    assert res.control[0] == pytest.approx(expected_ux, abs=1e-8)
    assert abs(filt.check_barrier(state, res.control)[3]) < 1e-8
    assert np.abs(res.control[1:]).max() < 1e-12


def test_easif_feasible_desired_control_passes_through():
    rng = np.random.default_rng(41)
    filt = ExplicitAsif(cfg("easif"))
    checked = 0
    for state in safe_cases(300, 8):
        u_des = rng.uniform(-1.0, 1.0, 3)
        if filt.check_barrier(state, u_des).min() < 0.0:
            continue
        res = filt.filter(state, u_des)
        assert np.abs(res.control - u_des).max() <= 1e-6
        assert not res.intervened
        checked += 1
    assert checked > 30


def test_easif_residuals_nonnegative_after_solve():
    rng = np.random.default_rng(42)
    filt = ExplicitAsif(cfg("easif"))
    for state in safe_cases(100, 9):
        res = filt.filter(state, rng.uniform(-1.0, 1.0, 3))
        if res.status == "optimal":
            assert filt.check_barrier(state, res.control).min() >= -1e-8


def test_easif_residual_affine_in_control():
    filt = ExplicitAsif(cfg("easif"))
    rng = np.random.default_rng(43)
    state = safe_cases(1, 10)[0]
    for _ in range(20):
        u1, u2 = rng.uniform(-1, 1, (2, 3))
        w = rng.uniform()
        blend = filt.check_barrier(state, w * u1 + (1 - w) * u2)
        parts = w * filt.check_barrier(state, u1) \
            + (1 - w) * filt.check_barrier(state, u2)
        assert np.abs(blend - parts).max() < 1e-12


def test_easif_determinism():
    filt = ExplicitAsif(cfg("easif"))
    state = np.array([40.0, -20.0, 10.0, 0.5, 0.4, -0.6])
    u_des = np.array([0.9, -0.8, 0.7])
    a = filt.filter(state, u_des)
    b = filt.filter(state, u_des)
    assert np.array_equal(a.control, b.control)
    assert a.status == b.status and a.active == b.active


# --- backup law and trajectory ---------------------------------------------

def test_backup_control_zero_at_rest_beyond_hold_radius():
    config = cfg("iasif", dt=1.0)
    state = np.array([200.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    assert np.all(backup_control(state, config) == 0.0)


def test_backup_control_pushes_outward_inside_hold_radius():
    config = cfg("iasif", dt=1.0)
    state = np.array([20.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    u = backup_control(state, config)
    assert u[0] > 0.0
    assert np.abs(u[1:]).max() == 0.0


def test_backup_control_saturates():
    config = cfg("iasif", dt=1.0)
    state = np.array([200.0, 0.0, 0.0, 5.0, -5.0, 5.0])
    u = backup_control(state, config)
    assert np.allclose(np.abs(u), CW.u_max)


def test_backup_control_sampled_lipschitz():
    config = cfg("iasif", dt=1.0)
    rng = np.random.default_rng(3)
    ratios = []
    for _ in range(300):
        x = np.concatenate([rng.uniform(20.0, 400.0) * _unit(rng),
                            rng.uniform(-1.2, 1.2, 3)])
        d = rng.normal(size=6) * 1e-3
        du = backup_control(x + d, config) - backup_control(x, config)
        ratios.append(np.linalg.norm(du) / np.linalg.norm(d))
    # bounded by roughly max(K_v, K_p * r_hold-scale)
    assert max(ratios) < 10.0


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def test_backup_trajectory_degenerate_horizon():
    traj = compute_backup_trajectory(INTERIOR, cfg("iasif", dt=1.0, horizon=0.0))
    assert traj.nodes.shape == (1, 6)
    assert np.array_equal(traj.nodes[0], INTERIOR)
    assert np.array_equal(traj.sens[0], np.eye(6))


def test_backup_trajectory_linear_regime_matches_exponential():
    # far from the hold radius with slow velocity the law is pure
    # damping, so the closed loop is linear
    config = cfg("iasif", dt=1.0, horizon=20.0)
    state = np.array([400.0, 100.0, -200.0, 0.1, -0.2, 0.15])
    traj = compute_backup_trajectory(state, config)
    A_cl = a_matrix(CW).copy()
    for k in range(3):
        A_cl[3 + k, 3 + k] -= config.backup_kv / CW.m
    for j in (1, 5, 20):
        ref = expm(A_cl * (j * config.dt))
        assert np.abs(traj.sens[j] - ref).max() < 1e-6
        assert np.abs(traj.nodes[j] - ref @ state).max() < 1e-6


def test_backup_trajectory_sensitivity_matches_finite_differences():
    config = cfg("iasif", dt=1.0, horizon=20.0)
    eps = 1e-4
    for state in [np.array([60.0, 10.0, -20.0, 0.9, -0.85, 0.6]),
                  np.array([30.0, -5.0, 8.0, -0.7, 0.75, -0.8])]:
        traj = compute_backup_trajectory(state, config)
        for col in range(6):
            e = np.zeros(6)
            e[col] = eps
            plus = compute_backup_trajectory(state + e, config).nodes
            minus = compute_backup_trajectory(state - e, config).nodes
            fd = (plus - minus) / (2.0 * eps)
            for j in range(traj.nodes.shape[0]):
                denom = max(1.0, np.linalg.norm(fd[j]))
                err = np.linalg.norm(traj.sens[j][:, col] - fd[j]) / denom
                assert err <= 1e-3


def test_backup_trajectory_requires_implicit_config():
    with pytest.raises(ValueError):
        compute_backup_trajectory(INTERIOR, cfg("easif"))


# --- implicit filter --------------------------------------------------------

def test_iasif_zero_horizon_reduces_to_explicit():
    alpha = AlphaSpec()
    fe = ExplicitAsif(cfg("easif", alpha=alpha))
    fi = ImplicitAsif(cfg("iasif", dt=1.0, horizon=0.0, alpha=alpha))
    rng = np.random.default_rng(4)
    for state in safe_cases(30, 12):
        ge, ce = fe._rows(state)
        gi, ci = fi._rows(state)
        assert np.array_equal(ge, gi)
        assert np.array_equal(ce, ci)
        u_des = rng.uniform(-1.0, 1.0, 3)
        assert np.abs(fe.filter(state, u_des).control
                      - fi.filter(state, u_des).control).max() <= 1e-9


def test_iasif_row_count():
    fi = ImplicitAsif(cfg("iasif", dt=1.0, horizon=20.0))
    G, c = fi._rows(INTERIOR)
    assert G.shape == (126, 3)
    assert c.shape == (126,)
    fi10 = ImplicitAsif(cfg("iasif", dt=10.0, horizon=20.0))
    G10, _ = fi10._rows(INTERIOR)
    assert G10.shape == (18, 3)


def test_iasif_interior_state_is_untouched():
    res = filter_iasif(INTERIOR, np.zeros(3), cfg("iasif", dt=1.0))
    assert res.status == "optimal"
    assert not res.intervened


def test_iasif_residuals_nonnegative_after_solve():
    filt = ImplicitAsif(cfg("iasif", dt=1.0))
    rng = np.random.default_rng(44)
    for state in safe_cases(50, 13):
        res = filt.filter(state, rng.uniform(-1.0, 1.0, 3))
        if res.status == "optimal":
            assert filt.check_barrier(state, res.control).min() >= -1e-8


def test_iasif_config_validation():
    with pytest.raises(ValueError):
        cfg("iasif", dt=3.0, horizon=20.0)
    with pytest.raises(ValueError):
        cfg("unknown")


# --- discrete filter --------------------------------------------------------

def test_dasif_interior_state_fast_path():
    filt = DiscreteAsif(cfg("dasif", dt=1.0, tolerance=1e-4))
    res = filt.filter(INTERIOR, np.zeros(3))
    assert res.status == "optimal"
    assert not res.intervened
    assert res.solver is None  # feasible desired control skips the solver


def test_dasif_residuals_above_tolerance_after_solve():
    tol = 1e-4
    filt = DiscreteAsif(cfg("dasif", dt=10.0, tolerance=tol))
    rng = np.random.default_rng(45)
    engaged = 0
    for state in safe_cases(150, 14):
        u_des = rng.uniform(-1.0, 1.0, 3)
        res = filt.filter(state, u_des)
        if res.status != "optimal":
            continue
        assert filt.check_barrier(state, res.control).min() >= -tol
        if res.solver is not None:
            engaged += 1
    assert engaged > 20


def test_dasif_larger_timestep_is_at_least_as_restrictive():
    # near the per-axis speed boundary both timesteps bind; the longer
    # lever arm of dt=10 forces the control at least as far from the
    # desired one
    f1 = DiscreteAsif(cfg("dasif", dt=1.0, tolerance=1e-6))
    f10 = DiscreteAsif(cfg("dasif", dt=10.0, tolerance=1e-6))
    for vx in (0.5, 0.6, 0.7):
        state = np.array([500.0, 0.0, 0.0, vx, 0.0, 0.0])
        u_des = np.array([1.0, 0.0, 0.0])
        r1 = f1.filter(state, u_des)
        r10 = f10.filter(state, u_des)
        assert r1.status == "optimal" and r10.status == "optimal"
        d1 = np.linalg.norm(r1.control - u_des)
        d10 = np.linalg.norm(r10.control - u_des)
        assert d10 >= d1 - 1e-6
        assert r1.solver is not None and r10.solver is not None


def test_dasif_liveness_under_wall_clock_limit():
    # the axis-speed constraint needs an improvement rate far beyond the
    # braking authority, so no admissible control is feasible
    config = cfg("dasif", dt=1.0, tolerance=1e-8, time_limit=0.05)
    filt = DiscreteAsif(config)
    state = np.array([300.0, 0.0, 0.0, 20.0, 0.0, 0.0])
    start = time.perf_counter()
    res = filt.filter(state, np.array([1.0, 0.0, 0.0]))
    elapsed = time.perf_counter() - start
    assert elapsed < 0.2
    assert res.status in ("timeout", "iteration-limit", "infeasible")
    assert res.fallback
    assert np.array_equal(res.control, backup_control(state, config))


def test_dasif_uses_exact_propagation_in_residuals():
    from rtabench.dynamics import propagate
    config = cfg("dasif", dt=10.0, tolerance=1e-4)
    filt = DiscreteAsif(config)
    state = np.array([80.0, -40.0, 30.0, 0.3, 0.2, -0.4])
    u = np.array([0.5, -0.5, 0.25])
    nxt = propagate(state, u, 10.0, CW)
    expected = (h_values(nxt, SP) - h_values(state, SP)) / 10.0 \
        + np.array(config.alpha.discrete) * h_values(state, SP)
    assert np.abs(filt.check_barrier(state, u) - expected).max() < 1e-12


# --- generic behaviour ------------------------------------------------------

def test_check_barrier_matches_filter_kinds():
    state = safe_cases(1, 15)[0]
    u = np.array([0.2, -0.3, 0.4])
    assert check_barrier(state, u, cfg("easif")).shape == (6,)
    assert check_barrier(state, u, cfg("iasif", dt=1.0)).shape == (126,)
    assert check_barrier(state, u, cfg("dasif", dt=1.0)).shape == (6,)


def test_filter_functions_match_classes():
    state = safe_cases(1, 16)[0]
    uated = np.array([0.9, 0.1, -0.5])
    for fn, kind, kw in ((filter_easif, "easif", {}),
                         (filter_iasif, "iasif", {"dt": 1.0}),
                         (filter_dasif, "dasif", {"dt": 1.0})):
        config = cfg(kind, **kw)
        res_fn = fn(state, uated, config)
        res_cls = make_filter(config).filter(state, uated)
        assert np.array_equal(res_fn.control, res_cls.control)


def test_infeasible_explicit_qp_falls_back_to_backup_law():
    # deep inside the keep-out sphere with inward speed: the braking
    # constraint cannot be met by any admissible control
    config = cfg("easif")
    filt = ExplicitAsif(config)
    state = np.array([5.0, 0.0, 0.0, -2.5, 0.0, 0.0])
    res = filt.filter(state, np.zeros(3))
    if res.status != "optimal":
        assert res.fallback
        assert np.array_equal(res.control, backup_control(state, config))
        assert res.intervened


def test_control_always_inside_box():
    rng = np.random.default_rng(46)
    filters = [ExplicitAsif(cfg("easif")),
               ImplicitAsif(cfg("iasif", dt=10.0)),
               DiscreteAsif(cfg("dasif", dt=1.0, tolerance=1e-4))]
    states = [c.state for c in generate_states("not_safe", 40, 17)]
    for state in states:
        u_des = rng.uniform(-2.0, 2.0, 3)
        for filt in filters:
            res = filt.filter(state, u_des)
            assert np.abs(res.control).max() <= CW.u_max + 1e-12


def test_dasif_reports_active_constraints():
    filt = DiscreteAsif(cfg("dasif", dt=1.0, tolerance=1e-6))
    state = np.array([500.0, 0.0, 0.0, 0.6, 0.0, 0.0])
    res = filt.filter(state, np.array([1.0, 0.0, 0.0]))
    assert res.status == "optimal"
    assert 3 in res.active  # the x-axis speed constraint binds


def test_dasif_determinism():
    filt = DiscreteAsif(cfg("dasif", dt=10.0, tolerance=1e-4))
    state = np.array([120.0, -60.0, 40.0, 0.7, -0.6, 0.5])
    u_des = np.array([0.9, -0.9, 0.9])
    a = filt.filter(state, u_des)
    b = filt.filter(state, u_des)
    assert np.array_equal(a.control, b.control)
    assert a.status == b.status
    if a.solver is not None:
        assert a.solver.iterations == b.solver.iterations


def test_short_forward_invariance_run():
    filt = ExplicitAsif(cfg("easif"))
    for i, state in enumerate(safe_cases(5, 18)):
        rng = np.random.default_rng(100 + i)
        margins = simulate_episode(state, filt, 200, 1.0, rng)
        assert margins.min() >= -1e-3


def test_per_thread_filters_match_serial_results():
    # one filter instance per thread over a shared config must agree
    # with a serial pass
    from concurrent.futures import ThreadPoolExecutor
    config = cfg("iasif", dt=1.0)
    states = safe_cases(40, 19)
    rng = np.random.default_rng(5)
    controls = [rng.uniform(-1.0, 1.0, 3) for _ in states]
    serial = ImplicitAsif(config)
    expected = [serial.filter(s, u).control for s, u in zip(states, controls)]

    def worker(chunk):
        filt = ImplicitAsif(config)
        return [filt.filter(s, u).control for s, u in chunk]

    chunks = [list(zip(states[i::4], controls[i::4])) for i in range(4)]
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(worker, chunks))
    for i, chunk_result in enumerate(results):
        for got, want in zip(chunk_result, expected[i::4]):
            assert np.array_equal(got, want)
