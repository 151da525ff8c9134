"""Operator entry point: run experiments, inspect graphs, benchmark algorithms.

Subcommands:
  run    one simulation, JSON metrics report (optional per-slot event CSV)
  graph  interaction-graph edge list and degree summary, with threshold sweeps
  bench  mean/stddev comparison table across algorithms and seeds (CSV)

The CRABNET_THREADS environment variable caps the bench worker pool.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .graph import CRITERIA, build_graph
from .scenario import ScenarioError, load_scenario, occupancy
from .simulate import ALGORITHMS, EVENT_COLUMNS, SimConfig, make_policy, run


def _add_sim_flags(p: argparse.ArgumentParser):
    p.add_argument("--scenario", required=True, help="scenario TOML file")
    p.add_argument("--algo", default="crab", choices=ALGORITHMS)
    p.add_argument("--criterion", default="coverage", choices=CRITERIA)
    p.add_argument("--threshold", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=10.0, help="seconds")
    p.add_argument("--decision-period", type=float, default=1.0)
    p.add_argument("--slot", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--max-configs", type=int, default=None,
                   help="override the scenario's candidate cap")
    p.add_argument("--ucb-c", type=float, default=math.sqrt(2.0))
    p.add_argument("--ucb-iters", type=int, default=10_000)
    p.add_argument("--dbscan-eps", type=float, default=15.0)
    p.add_argument("--dbscan-min-pts", type=int, default=2)


def _load(args):
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(2)
    if getattr(args, "max_configs", None):
        scenario = dataclasses.replace(
            scenario,
            limits=dataclasses.replace(scenario.limits, max_configs=args.max_configs),
        )
    return scenario


def _sim_config(args, algo=None, seed=None) -> SimConfig:
    return SimConfig(
        duration_s=args.duration,
        decision_period_s=args.decision_period,
        slot_s=args.slot,
        seed=args.seed if seed is None else seed,
        algorithm=algo or args.algo,
        criterion=args.criterion,
        threshold=args.threshold,
        max_iters=args.max_iters,
        ucb_c=args.ucb_c,
        ucb_train_iters=args.ucb_iters,
        dbscan_eps_m=args.dbscan_eps,
        dbscan_min_pts=args.dbscan_min_pts,
    )


def cmd_run(args) -> int:
    scenario = _load(args)
    sim = _sim_config(args)
    if args.events_csv:
        with open(args.events_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(EVENT_COLUMNS)
            report = run(sim, scenario, events_writer=writer)
    else:
        report = run(sim, scenario)
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def _parse_sweep(spec: str):
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise SystemExit(f"bad --sweep '{spec}', expected lo:hi:step")
    if step <= 0:
        raise SystemExit("sweep step must be positive")
    out = []
    v = lo
    while v <= hi + 1e-12:
        out.append(round(v, 12))
        v += step
    return out


def _graph_summary(graph):
    n = len(graph.nodes)
    degrees = [len(graph.neighbors(g)) for g in graph.nodes]
    mean_deg = sum(degrees) / n if n else 0.0
    return n, len(graph.edges), mean_deg


def cmd_graph(args) -> int:
    scenario = _load(args)
    t = args.t
    if t is None:
        span = scenario.trace.span
        t = span[0] if span else 0.0
    if args.sweep:
        rows = ["threshold,nodes,edges,mean_degree"]
        for thr in _parse_sweep(args.sweep):
            g = build_graph(scenario.sites, args.criterion, thr, scenario, t)
            n, e, d = _graph_summary(g)
            rows.append(f"{thr},{n},{e},{d:.4f}")
        text = "\n".join(rows) + "\n"
    else:
        g = build_graph(scenario.sites, args.criterion, args.threshold, scenario, t)
        n, e, d = _graph_summary(g)
        lines = [f"{a} {b} {w!r}" for (a, b), w in sorted(g.edges.items())]
        lines.append(f"# nodes={n} edges={e} mean_degree={d:.4f}")
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _bench_one(payload):
    """Worker: one (algorithm, seed) simulation. Top level for pickling."""
    scenario_path, algo, seed, sim_kwargs, max_configs = payload
    scenario = load_scenario(scenario_path)
    if max_configs:
        scenario = dataclasses.replace(
            scenario, limits=dataclasses.replace(scenario.limits, max_configs=max_configs)
        )
    sim = SimConfig(algorithm=algo, seed=seed, **sim_kwargs)
    report = run(sim, scenario)
    return (algo, seed, report.total_bits, report.covered_vehicle_fraction, report.jain_fairness)


def cmd_bench(args) -> int:
    _load(args)  # fail fast on a bad scenario before fanning out
    algos = args.algos
    seeds = args.seeds
    sim_kwargs = dict(
        duration_s=args.duration,
        decision_period_s=args.decision_period,
        slot_s=args.slot,
        criterion=args.criterion,
        threshold=args.threshold,
        max_iters=args.max_iters,
        ucb_c=args.ucb_c,
        ucb_train_iters=args.ucb_iters,
        dbscan_eps_m=args.dbscan_eps,
        dbscan_min_pts=args.dbscan_min_pts,
    )
    jobs = [
        (args.scenario, algo, seed, sim_kwargs, args.max_configs)
        for algo in algos
        for seed in seeds
    ]
    workers = int(os.environ.get("CRABNET_THREADS", os.cpu_count() or 1))
    if workers <= 1 or len(jobs) == 1:
        results = [_bench_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bench_one, jobs))
    results.sort(key=lambda r: (algos.index(r[0]), r[1]))

    rows = ["algo,seeds,mean_total_bits,std_total_bits,mean_coverage,std_coverage,mean_fairness,std_fairness"]
    for algo in algos:
        got = [r for r in results if r[0] == algo]
        bits = np.array([r[2] for r in got])
        cov = np.array([r[3] for r in got])
        fair = np.array([r[4] for r in got])
        rows.append(
            f"{algo},{len(got)},{bits.mean()!r},{bits.std()!r},"
            f"{cov.mean()!r},{cov.std()!r},{fair.mean()!r},{fair.std()!r}"
        )
    text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crabnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation and write a metrics report")
    _add_sim_flags(p_run)
    p_run.add_argument("--out", default=None, help="metrics JSON path (stdout by default)")
    p_run.add_argument("--events-csv", default=None, help="per-slot event log path")
    p_run.set_defaults(func=cmd_run)

    p_graph = sub.add_parser("graph", help="export the interaction graph edge list")
    p_graph.add_argument("--scenario", required=True)
    p_graph.add_argument("--criterion", default="coverage", choices=CRITERIA)
    p_graph.add_argument("--threshold", type=float, default=0.15)
    p_graph.add_argument("--sweep", default=None, help="lo:hi:step threshold sweep")
    p_graph.add_argument("--t", type=float, default=None, help="evaluation time (s)")
    p_graph.add_argument("--max-configs", type=int, default=None)
    p_graph.add_argument("--out", default=None)
    p_graph.set_defaults(func=cmd_graph)

    p_bench = sub.add_parser("bench", help="compare algorithms across seeds")
    _add_sim_flags(p_bench)
    p_bench.add_argument("--algos", nargs="+", default=["crab", "dbscan", "random"],
                         choices=ALGORITHMS)
    p_bench.add_argument("--seeds", nargs="+", type=int, default=[0])
    p_bench.add_argument("--out", default=None, help="comparison CSV path")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
