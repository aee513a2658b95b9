"""Timing-benchmark harness.

Generates deterministic state suites ("safe" states are
rejection-sampled into the safe set with margin, "not safe" states are
drawn from widened ranges unchecked), runs a controller-filter pipeline
once per case on a single thread with monotonic-clock timing around the
input-to-output span, and reduces the samples to interquartile mean,
MOET and companion statistics. The first call of every run is recorded
separately and excluded from the statistics, mirroring the first-call
compilation effect of deployed runtimes.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import inspection, policy
from .dynamics import CwParams, transition_matrices
from .filters import FilterConfig, make_filter
from .safety import SafetyParams, h_values

CONTROLLERS = ("random", "no_sensors", "all_sensors")
SUITES = ("safe", "not_safe")

# suite-generation ranges; positions are sampled by radius in an annulus
# with this margin off the keep-out and keep-in boundaries, velocities
# per axis inside the scaled velocity box
SAFE_POSITION_MARGIN = 10.0
SAFE_VELOCITY_SCALE = 0.8
SAFE_MIN_MARGIN = 0.01
UNSAFE_RADIUS_SPAN = (0.5, 1.1)    # fractions of r_collision .. r_max
UNSAFE_VELOCITY_SCALE = 2.0
MAX_REJECTION_ATTEMPTS = 10 ** 6

CSV_HEADER = "label,iqm,mean,std,min,median,moet,first_call,n"


@dataclass
class BenchCase:
    """One test case: state plus the all-sensors observation inputs."""

    state: np.ndarray
    sun_theta: float
    summary: inspection.InspectionSummary


@dataclass
class BenchConfig:
    """One benchmark configuration row."""

    controller: str = "random"
    rta: FilterConfig | None = None
    suite: str = "safe"
    cases: int = 1000
    seed: int = 0
    out: str | None = None
    fmt: str = "csv"
    weights: str | None = None
    backend: str | None = None
    safety: SafetyParams = field(default_factory=SafetyParams)
    cw: CwParams = field(default_factory=CwParams)
    label: str = ""

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller: {self.controller!r}")
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite: {self.suite!r}")
        if self.cases < 1:
            raise ValueError("cases must be at least 1")
        if self.fmt not in ("csv", "json"):
            raise ValueError(f"unknown format: {self.fmt!r}")
        if self.controller == "random" and self.rta is None:
            raise ValueError("the random controller is only valid with an RTA filter")
        if not self.label:
            self.label = self._default_label()

    def _default_label(self) -> str:
        parts = [self.controller]
        if self.rta is None:
            parts.append("none")
        else:
            parts.append(self.rta.kind)
            if self.rta.kind in ("iasif", "dasif"):
                parts.append(f"dt={self.rta.dt:g}")
            if self.rta.kind == "dasif":
                parts.append(f"tol={self.rta.tolerance:g}")
        parts.append(self.suite)
        return " ".join(parts)


@dataclass
class TimingSample:
    """Wall time of one pipeline call."""

    index: int
    elapsed: float
    intervened: bool
    status: str

    def __post_init__(self):
        if self.elapsed < 0.0:
            raise ValueError("wall time must be nonnegative")


@dataclass
class TimingReport:
    """Per-configuration sample statistics (seconds)."""

    label: str
    iqm: float
    mean: float
    std: float
    min: float
    median: float
    moet: float
    first_call: float
    count: int


def generate_states(suite: str, count: int, seed: int,
                    safety: SafetyParams | None = None,
                    with_summaries: bool = True) -> list[BenchCase]:
    """Deterministic state suite with sun angles and inspection summaries.

    Safe-suite positions are rejection-sampled in the annulus between
    the keep-out and keep-in radii (with margin) and velocities in the
    scaled per-axis box until every constraint margin is at least
    ``SAFE_MIN_MARGIN``; the not-safe suite draws from widened ranges
    with no check.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if suite not in SUITES:
        raise ValueError(f"unknown suite: {suite!r}")
    sp = safety or SafetyParams()
    rng = np.random.default_rng(seed)
    sphere = inspection.generate_sphere()

    def random_direction():
        vec = rng.normal(size=3)
        norm = np.linalg.norm(vec)
        while norm < 1e-12:
            vec = rng.normal(size=3)
            norm = np.linalg.norm(vec)
        return vec / norm

    states = []
    if suite == "safe":
        r_lo = sp.r_collision + SAFE_POSITION_MARGIN
        r_hi = sp.r_max - SAFE_POSITION_MARGIN
        v_lim = SAFE_VELOCITY_SCALE * sp.v_max
        attempts = 0
        while len(states) < count:
            attempts += 1
            if attempts > MAX_REJECTION_ATTEMPTS:
                raise RuntimeError(
                    "safe-suite rejection sampling failed; check SafetyParams")
            p = random_direction() * rng.uniform(r_lo, r_hi)
            v = rng.uniform(-v_lim, v_lim, size=3)
            state = np.concatenate([p, v])
            if h_values(state, sp).min() >= SAFE_MIN_MARGIN:
                states.append(state)
    else:
        r_lo = UNSAFE_RADIUS_SPAN[0] * sp.r_collision
        r_hi = UNSAFE_RADIUS_SPAN[1] * sp.r_max
        v_lim = UNSAFE_VELOCITY_SCALE * sp.v_max
        for _ in range(count):
            p = random_direction() * rng.uniform(r_lo, r_hi)
            v = rng.uniform(-v_lim, v_lim, size=3)
            states.append(np.concatenate([p, v]))

    cases = []
    for state in states:
        theta = float(rng.uniform(0.0, 2.0 * math.pi))
        if with_summaries:
            n_seen = int(rng.integers(0, inspection.NUM_POINTS + 1))
            flags = np.zeros(inspection.NUM_POINTS, dtype=bool)
            flags[rng.choice(inspection.NUM_POINTS, size=n_seen,
                             replace=False)] = True
            marked = inspection.PointSphere(points=sphere.points, inspected=flags)
            summary = inspection.nearest_uninspected_cluster(marked, state[0:3])
        else:
            summary = inspection.InspectionSummary(
                n_points=0, r_ups=inspection.ALL_INSPECTED_DIRECTION.copy())
        cases.append(BenchCase(state=state, sun_theta=theta, summary=summary))
    return cases


def _load_controller(config: BenchConfig):
    if config.controller == "random":
        return None
    variant = config.controller
    if config.weights:
        network = policy.load_network(config.weights)
        if network.input_dim != policy.VARIANT_INPUTS[variant]:
            raise ValueError(
                f"weights file input width {network.input_dim} does not match "
                f"controller {variant!r}")
        return network
    try:
        return policy.load_default_network(variant)
    except (FileNotFoundError, policy.WeightsError):
        return policy.random_network(variant, seed=config.seed)


def run_config(config: BenchConfig):
    """Execute one configuration; returns (samples, first_call_sample).

    The pipeline is controller inference (when configured) followed by
    the RTA filter, timed per case with a monotonic high-resolution
    clock around exactly the input-to-output span. The first call is
    returned separately and excluded from statistics.
    """
    cases = generate_states(config.suite, config.cases, config.seed,
                            config.safety,
                            with_summaries=config.controller == "all_sensors")
    network = _load_controller(config)
    filt = make_filter(config.rta, backend=config.backend) \
        if config.rta is not None else None
    u_max = config.cw.u_max
    rng = np.random.default_rng(config.seed)
    actions = rng.uniform(-u_max, u_max, size=(config.cases, 3))
    variant = config.controller if network is not None else None

    samples = []
    for idx, case in enumerate(cases):
        state = case.state
        if network is not None:
            t0 = time.perf_counter_ns()
            obs = policy.build_observation(state, case.sun_theta, case.summary,
                                           variant)
            u_des = policy.act(network, obs, u_max, backend=config.backend)
            if filt is not None:
                res = filt.filter(state, u_des)
                t1 = time.perf_counter_ns()
                intervened, status = res.intervened, res.status
            else:
                t1 = time.perf_counter_ns()
                intervened, status = False, "optimal"
        else:
            u_des = actions[idx]
            t0 = time.perf_counter_ns()
            res = filt.filter(state, u_des)
            t1 = time.perf_counter_ns()
            intervened, status = res.intervened, res.status
        samples.append(TimingSample(index=idx, elapsed=(t1 - t0) * 1e-9,
                                    intervened=intervened, status=status))
    return samples[1:], samples[0]


def compute_stats(samples, label: str = "", first_call: float = math.nan) -> TimingReport:
    """Reduce wall-time samples to the benchmark statistics.

    IQM drops floor(n/4) samples from each end after sorting and
    averages the rest; MOET is the maximum; std is the population
    standard deviation.
    """
    values = np.asarray([s.elapsed if isinstance(s, TimingSample) else float(s)
                         for s in samples], dtype=float)
    if values.size == 0:
        raise ValueError("compute_stats needs at least one sample")
    ordered = np.sort(values)
    drop = values.size // 4
    trimmed = ordered[drop:values.size - drop]
    # fsum keeps the means correctly rounded regardless of sample count
    return TimingReport(
        label=label,
        iqm=math.fsum(trimmed) / trimmed.size,
        mean=math.fsum(values) / values.size,
        std=float(values.std()),
        min=float(ordered[0]),
        median=float(np.median(values)),
        moet=float(ordered[-1]),
        first_call=first_call,
        count=int(values.size),
    )


def report_for_run(config: BenchConfig, samples, first: TimingSample) -> TimingReport:
    """Statistics for one run; with a single case the statistical sample
    set is empty and only the first call is reported."""
    if samples:
        return compute_stats(samples, label=config.label,
                             first_call=first.elapsed)
    return TimingReport(label=config.label, iqm=math.nan, mean=math.nan,
                        std=math.nan, min=math.nan, median=math.nan,
                        moet=math.nan, first_call=first.elapsed, count=0)


def write_report(reports, path, fmt: str = "csv") -> None:
    """Write reports as CSV (milliseconds, 6 decimals) or JSON (seconds)."""
    path = str(path)
    if fmt == "csv":
        lines = [CSV_HEADER]
        for r in reports:
            ms = [r.iqm, r.mean, r.std, r.min, r.median, r.moet, r.first_call]
            cells = ",".join(f"{1e3 * v:.6f}" for v in ms)
            lines.append(f"{r.label},{cells},{r.count}")
        text = "\n".join(lines) + "\n"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif fmt == "json":
        doc = [{"label": r.label, "iqm": r.iqm, "mean": r.mean, "std": r.std,
                "min": r.min, "median": r.median, "moet": r.moet,
                "first_call": r.first_call, "n": r.count} for r in reports]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format: {fmt!r}")


def read_report(path) -> list[TimingReport]:
    """Read back a JSON report written by ``write_report``."""
    with open(str(path), "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return [TimingReport(label=row["label"], iqm=row["iqm"], mean=row["mean"],
                         std=row["std"], min=row["min"], median=row["median"],
                         moet=row["moet"], first_call=row["first_call"],
                         count=row["n"]) for row in doc]


def matrix_configs(base: BenchConfig) -> list[BenchConfig]:
    """The full benchmark grid: filter kinds x dt x tolerance x suite x controller."""
    rta_specs = [("easif", None, None)]
    for dt in (1.0, 10.0):
        rta_specs.append(("iasif", dt, None))
    for dt in (1.0, 10.0):
        for tol in (1e-3, 1e-4):
            rta_specs.append(("dasif", dt, tol))
    configs = []
    for controller in CONTROLLERS:
        for kind, dt, tol in rta_specs:
            for suite in SUITES:
                rta = FilterConfig(kind=kind, dt=dt if dt else 1.0,
                                   tolerance=tol if tol else 1e-4,
                                   safety=base.safety, cw=base.cw)
                configs.append(replace(base, controller=controller, rta=rta,
                                       suite=suite, label=""))
    return configs


def run_matrix(base: BenchConfig, parallel: bool = False) -> list[TimingReport]:
    """Run the complete grid; sequential by default (co-scheduling
    configurations perturbs timing, so ``parallel`` is opt-in)."""
    configs = matrix_configs(base)
    if not parallel:
        return [report_for_run(c, *run_config(c)) for c in configs]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor() as pool:
        results = list(pool.map(lambda c: report_for_run(c, *run_config(c)),
                                configs))
    return results


def simulate_episode(state0, filt, steps: int, dt: float, rng,
                     safety: SafetyParams | None = None,
                     cw: CwParams | None = None) -> np.ndarray:
    """Closed-loop episode with uniformly random desired controls.

    Propagates with the exact zero-order-hold solution at ``dt`` and
    returns the minimum constraint margin after every step.
    """
    sp = safety or SafetyParams()
    cwp = cw or CwParams()
    mats = transition_matrices(dt, cwp)
    state = np.asarray(state0, dtype=float).copy()
    margins = np.empty(steps)
    u_max = cwp.u_max
    for k in range(steps):
        u_des = rng.uniform(-u_max, u_max, size=3)
        res = filt.filter(state, u_des)
        state = mats[0] @ state + mats[1] @ res.control
        margins[k] = h_values(state, sp).min()
    return margins
