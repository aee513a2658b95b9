"""Benchmark command line: ``rta-bench``.

Subcommands: ``run`` (one configuration), ``matrix`` (the full
configuration grid), ``verify`` (quick invariant suite) and ``kernels``
(compiled-vs-python backend comparison). A flat ``key = value`` config
file can seed any option; explicit flags win. ``RTA_BENCH_SEED``
provides the default seed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import bench, policy
from ._backend import available_backends, get_backend
from .dynamics import CwParams
from .filters import FilterConfig, make_filter
from .safety import AlphaSpec, SafetyParams
from .selfcheck import run_verify

_SUITE_FLAGS = {"safe": "safe", "unsafe": "not_safe"}
_CONTROLLER_FLAGS = {"random": "random", "no-sensors": "no_sensors",
                     "all-sensors": "all_sensors"}
_POLICY_FLAGS = {"none": "random", "no-sensors": "no_sensors",
                 "all-sensors": "all_sensors"}

_FLOAT_KEYS = {"dt", "tol", "horizon", "time_limit", "n", "m", "u_max",
               "a_max", "r_deputy", "r_chief", "r_max", "nu0", "nu1", "v_max"}
_INT_KEYS = {"cases", "seed"}
# one coefficient broadcasts; a comma list gives per-constraint values
_FLOAT_LIST_KEYS = {"alpha_continuous", "alpha_discrete"}


def load_config_file(path) -> dict:
    """Parse a flat ``key = value`` document (# starts a comment)."""
    values = {}
    with open(str(path), "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_LIST_KEYS:
                parts = [float(v) for v in value.split(",")]
                values[key] = parts[0] if len(parts) == 1 else tuple(parts)
            else:
                values[key] = value
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rta-bench",
        description="Timing benchmarks for run-time-assurance filters")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one benchmark configuration")
    run.add_argument("--controller", choices=sorted(_CONTROLLER_FLAGS),
                     default=None, help="primary controller")
    run.add_argument("--policy", choices=sorted(_POLICY_FLAGS), default=None,
                     help="alias for --controller (none = random actions)")
    run.add_argument("--rta", choices=["none", "easif", "iasif", "dasif"],
                     default=None)
    run.add_argument("--dt", type=float, default=None,
                     help="filter timestep in seconds (1 or 10 in the benchmark grid)")
    run.add_argument("--tol", type=float, default=None,
                     help="discrete-filter solver tolerance")
    run.add_argument("--suite", choices=sorted(_SUITE_FLAGS), default=None)
    run.add_argument("--cases", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None, help="report path (default stdout)")
    run.add_argument("--format", choices=["csv", "json"], default=None)
    run.add_argument("--weights", default=None, help="policy weights file")
    run.add_argument("--backend", choices=["auto", "python", "compiled"],
                     default=None)
    run.add_argument("--config", default=None, help="flat key=value config file")

    matrix = sub.add_parser("matrix", help="run the full configuration grid")
    matrix.add_argument("--config", default=None)
    matrix.add_argument("--cases", type=int, default=None)
    matrix.add_argument("--seed", type=int, default=None)
    matrix.add_argument("--out", default=None)
    matrix.add_argument("--format", choices=["csv", "json"], default=None)
    matrix.add_argument("--parallel-configs", action="store_true",
                        help="run configurations on worker threads "
                             "(co-scheduling perturbs timing; default sequential)")

    verify = sub.add_parser("verify", help="run the quick invariant suite")
    verify.add_argument("--seed", type=int, default=None)

    kernels = sub.add_parser("kernels",
                             help="compare compiled and python kernel backends")
    kernels.add_argument("--cases", type=int, default=300)
    kernels.add_argument("--seed", type=int, default=None)
    return parser


def _default_seed(args, cfg) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in cfg:
        return cfg["seed"]
    env = os.environ.get("RTA_BENCH_SEED")
    return int(env) if env else 0


def _params_from_config(cfg):
    cw_kwargs = {k: cfg[k] for k in ("n", "m", "u_max") if k in cfg}
    sp_kwargs = {k: cfg[k] for k in ("a_max", "r_deputy", "r_chief", "r_max",
                                     "nu0", "nu1", "v_max") if k in cfg}
    al_kwargs = {}
    if "alpha_continuous" in cfg:
        al_kwargs["continuous"] = cfg["alpha_continuous"]
    if "alpha_discrete" in cfg:
        al_kwargs["discrete"] = cfg["alpha_discrete"]
    return CwParams(**cw_kwargs), SafetyParams(**sp_kwargs), AlphaSpec(**al_kwargs)


def _rta_config(kind, cfg, args, cw, sp, alpha):
    if kind in (None, "none"):
        return None
    dt = args.dt if getattr(args, "dt", None) is not None else cfg.get("dt", 1.0)
    tol = args.tol if getattr(args, "tol", None) is not None \
        else cfg.get("tol", 1e-4)
    return FilterConfig(kind=kind, dt=dt, horizon=cfg.get("horizon", 20.0),
                        tolerance=tol, time_limit=cfg.get("time_limit", 60.0),
                        alpha=alpha, safety=sp, cw=cw)


def _cmd_run(args) -> int:
    cfg = load_config_file(args.config) if args.config else {}
    cw, sp, alpha = _params_from_config(cfg)
    controller_flag = args.controller or args.policy
    controller = _CONTROLLER_FLAGS.get(controller_flag) \
        or _POLICY_FLAGS.get(controller_flag) \
        or cfg.get("controller", "random")
    rta_kind = args.rta if args.rta is not None else cfg.get("rta", "easif")
    suite = _SUITE_FLAGS[args.suite] if args.suite else \
        _SUITE_FLAGS.get(cfg.get("suite", "safe"), cfg.get("suite", "safe"))
    config = bench.BenchConfig(
        controller=controller,
        rta=_rta_config(rta_kind, cfg, args, cw, sp, alpha),
        suite=suite,
        cases=args.cases if args.cases is not None else cfg.get("cases", 1000),
        seed=_default_seed(args, cfg),
        weights=args.weights or cfg.get("weights"),
        backend=args.backend or cfg.get("backend"),
        safety=sp,
        cw=cw,
    )
    samples, first = bench.run_config(config)
    report = bench.report_for_run(config, samples, first)
    fmt = args.format or cfg.get("format", "csv")
    out = args.out or cfg.get("out")
    if out:
        bench.write_report([report], out, fmt)
        print(f"wrote {out}")
    else:
        _print_reports([report])
    return 0


def _cmd_matrix(args) -> int:
    cfg = load_config_file(args.config) if args.config else {}
    cw, sp, _ = _params_from_config(cfg)
    base = bench.BenchConfig(
        controller="random",
        rta=FilterConfig(kind="easif", safety=sp, cw=cw),
        cases=args.cases if args.cases is not None else cfg.get("cases", 1000),
        seed=_default_seed(args, cfg),
        weights=cfg.get("weights"),
        backend=cfg.get("backend"),
        safety=sp,
        cw=cw,
    )
    reports = bench.run_matrix(base, parallel=args.parallel_configs)
    fmt = args.format or cfg.get("format", "csv")
    out = args.out or cfg.get("out")
    if out:
        bench.write_report(reports, out, fmt)
        print(f"wrote {out}")
    else:
        _print_reports(reports)
    return 0


def _cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    return 0 if run_verify(seed) else 1


def _cmd_kernels(args) -> int:
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled backend unavailable; showing python backend only")
    seed = _default_seed(args, {})
    cases = bench.generate_states("safe", args.cases, seed)
    rng = np.random.default_rng(seed)
    actions = rng.uniform(-1.0, 1.0, size=(args.cases, 3))
    network = policy.random_network("all_sensors", seed)
    obs = rng.normal(size=(args.cases, 11))

    def time_filter(kind, backend, **kw):
        filt = make_filter(FilterConfig(kind=kind, **kw), backend=backend)
        filt.filter(cases[0].state, actions[0])
        ts = []
        for case, u in zip(cases, actions):
            t0 = time.perf_counter_ns()
            filt.filter(case.state, u)
            ts.append((time.perf_counter_ns() - t0) * 1e-9)
        return bench.compute_stats(ts[1:])

    def time_mlp(backend):
        kern = get_backend(backend)
        kern.mlp_forward(network._weights, network._biases, network._acts, obs[0])
        ts = []
        for row in obs:
            t0 = time.perf_counter_ns()
            kern.mlp_forward(network._weights, network._biases, network._acts, row)
            ts.append((time.perf_counter_ns() - t0) * 1e-9)
        return bench.compute_stats(ts[1:])

    rows = []
    jobs = [("easif filter", lambda b: time_filter("easif", b)),
            ("iasif filter dt=1", lambda b: time_filter("iasif", b, dt=1.0)),
            ("iasif filter dt=10", lambda b: time_filter("iasif", b, dt=10.0)),
            ("dasif filter dt=10 tol=1e-4",
             lambda b: time_filter("dasif", b, dt=10.0, tolerance=1e-4)),
            ("mlp forward (all sensors)", time_mlp)]
    for label, fn in jobs:
        py = fn("python")
        if "compiled" in backends:
            cc = fn("compiled")
            rows.append((label, py.iqm, cc.iqm, py.iqm / cc.iqm))
        else:
            rows.append((label, py.iqm, float("nan"), float("nan")))

    print(f"{'kernel':<30} {'python iqm':>12} {'compiled iqm':>13} {'speedup':>8}")
    for label, p, c, s in rows:
        print(f"{label:<30} {1e3 * p:>10.4f}ms {1e3 * c:>11.4f}ms {s:>7.1f}x")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "matrix": _cmd_matrix, "verify": _cmd_verify,
                "kernels": _cmd_kernels}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"rta-bench: {exc}", file=sys.stderr)
        return 2


def _print_reports(reports) -> None:
    print(bench.CSV_HEADER)
    for r in reports:
        ms = [r.iqm, r.mean, r.std, r.min, r.median, r.moet, r.first_call]
        cells = ",".join(f"{1e3 * v:.6f}" for v in ms)
        print(f"{r.label},{cells},{r.count}")


if __name__ == "__main__":
    sys.exit(main())
