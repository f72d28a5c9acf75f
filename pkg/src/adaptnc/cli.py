"""Command-line front-end for solving, simulating, and sweeping experiments.

Every command reads one YAML config (plus optional --seed/--out overrides),
writes plain CSV files and a run manifest into the output directory, and is
deterministic given (config, seed). Exit codes: 0 success, 2 bad
configuration, 3 a runtime invariant check failed (a bug signal, never
silenced).

CSV schemas (schema version 1):
  solve.csv      t, k_star, k_greedy, value
  simulate.csv   epsilon, policy, mean, stderr
  learn.csv / learn_perfect.csv   frame, eps_hat, delivered
  multiflow.csv  frame, flow, s_star, arrivals, delivered, nu_hat
  region.csv     grid_x, grid_y, stable_nc, stable_retx
  threshold.csv  t, receivers, eps_star
  trace CSV (FrameTrace.write_csv)  slot, state_t, block_id, receiver_id, received_bit
"""

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelModel
from .config import ExperimentConfig, config_digest, load_config, serialize_config
from .errors import ConfigError, InvariantViolation
from .multiflow import rate_region_sweep, run_online
from .policies import LearningPolicy, OptimalPolicy, make_policy
from .rng import RngSpec
from .simulate import learning_run, monte_carlo_throughput, simulate_frame
from .solver import retransmission_threshold, solve_monotone

SCHEMA_VERSION = 1


def _out_dir(config: ExperimentConfig) -> Path:
    path = Path(config.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(config: ExperimentConfig, out: Path, files: list):
    manifest = {
        "command": config.kind,
        "schema_version": SCHEMA_VERSION,
        "config_sha256": config_digest(config),
        "seed": config.seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": sys.version.split()[0],
        "files": sorted(files),
    }
    with open(out / "run_manifest.json", "w", encoding="utf-8") as fp:
        json.dump(manifest, fp, indent=2, sort_keys=True)
        fp.write("\n")
    with open(out / "config.yaml", "w", encoding="utf-8") as fp:
        fp.write(serialize_config(config))


def cmd_solve(config: ExperimentConfig, workers: int = 1) -> int:
    channel = config.channel.to_model()
    table = solve_monotone(config.horizon, channel)
    out = _out_dir(config)
    with open(out / "solve.csv", "w", newline="", encoding="utf-8") as fp:
        table.write_csv(fp)

    k = table.k_star
    checks = {
        "k_star non-decreasing": bool((np.diff(k) >= 0).all()),
        "k_star <= k_greedy": bool((k[1:] <= table.k_greedy[1:]).all()),
        "value within [0, t]": bool(
            (table.value >= -1e-12).all()
            and (table.value <= np.arange(config.horizon + 1) + 1e-9).all()
        ),
    }
    for name, ok in checks.items():
        print(f"{name}: {'ok' if ok else 'VIOLATED'}")
    if not all(checks.values()):
        raise InvariantViolation("solved table violates a structural property")
    _write_manifest(config, out, ["solve.csv"])
    print(f"solved horizon {config.horizon} for {channel.n_receivers} receivers -> {out/'solve.csv'}")
    return 0


def _simulate_cell(args):
    eps, kind, horizon, receivers, backlog, replications, seed, stream, params = args
    channel = ChannelModel.homogeneous(eps, receivers)
    policy = make_policy(kind, channel, horizon, **params)
    summary = monte_carlo_throughput(
        policy, horizon, backlog, channel, replications, RngSpec(seed, stream)
    )
    return eps, kind, summary.mean, summary.stderr


def cmd_simulate(config: ExperimentConfig, workers: int = 1) -> int:
    receivers = config.channel.n_receivers
    backlog = config.backlog if config.backlog is not None else config.horizon
    params = {
        "sigma2": config.policy.sigma2,
        "delta": config.policy.delta,
        "eps_init": config.policy.eps_init,
    }
    jobs = []
    for i, eps in enumerate(config.epsilon_grid):
        for j, kind in enumerate(config.policies):
            stream = (i * len(config.policies) + j) << 32
            jobs.append((eps, kind, config.horizon, receivers, backlog,
                         config.replications, config.seed, stream, params))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_simulate_cell, jobs))
    else:
        rows = [_simulate_cell(job) for job in jobs]

    out = _out_dir(config)
    with open(out / "simulate.csv", "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(["epsilon", "policy", "mean", "stderr"])
        for eps, kind, mean, stderr in rows:
            writer.writerow([repr(float(eps)), kind, repr(mean), repr(stderr)])
    _write_manifest(config, out, ["simulate.csv"])
    print(f"simulated {len(jobs)} (epsilon, policy) cells x {config.replications} replications")
    return 0


def cmd_learn(config: ExperimentConfig, workers: int = 1) -> int:
    channel = config.channel.to_model()
    backlog = config.backlog if config.backlog is not None else config.horizon
    policy = LearningPolicy(
        n_receivers=channel.n_receivers,
        horizon=config.horizon,
        delta=config.policy.delta,
        eps_init=config.policy.eps_init,
    )
    records = learning_run(
        policy, config.frames, config.horizon, channel, RngSpec(config.seed, 0), backlog
    )
    perfect = OptimalPolicy(solve_monotone(config.horizon, channel))
    perfect_records = learning_run(
        perfect, config.frames, config.horizon, channel, RngSpec(config.seed, 0), backlog
    )

    out = _out_dir(config)
    for name, recs, eps_col in (
        ("learn.csv", records, None),
        ("learn_perfect.csv", perfect_records, channel.worst_erasure()),
    ):
        with open(out / name, "w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["frame", "eps_hat", "delivered"])
            for r in recs:
                eps_hat = r["eps_hat"] if eps_col is None else eps_col
                writer.writerow([r["frame"], repr(float(eps_hat)), r["delivered"]])

    half = config.frames // 2
    mean_learn = float(np.mean([r["delivered"] for r in records[half:]]))
    mean_perfect = float(np.mean([r["delivered"] for r in perfect_records[half:]]))
    print(f"eps_hat final: {records[-1]['eps_hat']:.4f}")
    print(f"late-run throughput: learning {mean_learn:.4f}, perfect-info {mean_perfect:.4f}")
    _write_manifest(config, out, ["learn.csv", "learn_perfect.csv"])
    return 0


def cmd_multiflow(config: ExperimentConfig, workers: int = 1) -> int:
    out = _out_dir(config)
    flows = [f.to_spec() for f in config.flows]
    if not flows:
        with open(out / "multiflow.csv", "w", newline="", encoding="utf-8") as fp:
            csv.writer(fp).writerow(["frame", "flow", "s_star", "arrivals", "delivered", "nu_hat"])
        _write_manifest(config, out, ["multiflow.csv"])
        print("no flows configured; wrote empty trace")
        return 0
    trace = run_online(
        flows, config.frames, config.horizon, config.rho, RngSpec(config.seed, 0),
        intra=config.intra,
    )
    with open(out / "multiflow.csv", "w", newline="", encoding="utf-8") as fp:
        trace.write_csv(fp)
    ratios = trace.delivery_ratio()
    slopes = trace.deficit_slopes()
    for i, fid in enumerate(trace.flow_ids):
        print(f"flow {fid}: delivery ratio {ratios[i]:.4f}, deficit slope {slopes[i]:+.6f}/frame")
    print(f"weighted throughput: {trace.weighted_throughput(tail=0.5):.4f} "
          f"(schedule value {trace.schedule_weighted_throughput(tail=0.5):.4f})")
    _write_manifest(config, out, ["multiflow.csv"])
    return 0


def cmd_region(config: ExperimentConfig, workers: int = 1) -> int:
    flows = [f.to_spec() for f in config.flows]
    region = rate_region_sweep(
        flows, config.grid, config.horizon, config.rho, config.frames,
        RngSpec(config.seed, 0), axis=config.axis, workers=workers,
    )
    out = _out_dir(config)
    with open(out / "region.csv", "w", newline="", encoding="utf-8") as fp:
        region.write_csv(fp)
    nc, rx = int(region.stable_nc.sum()), int(region.stable_retx.sum())
    print(f"stable cells: coded {nc}/{region.stable_nc.size}, retransmission {rx}/{region.stable_retx.size}")
    _write_manifest(config, out, ["region.csv"])
    return 0


def cmd_threshold(config: ExperimentConfig, workers: int = 1) -> int:
    print("t=1 rows skipped: a single slot fits only one packet, no threshold exists")
    rows = []
    for t in range(2, config.t_max + 1):
        for n in range(1, config.receivers_max + 1):
            rows.append((t, n, retransmission_threshold(t, n)))

    by_n = {}
    by_t = {}
    for t, n, eps in rows:
        by_n.setdefault(n, []).append(eps)
        by_t.setdefault(t, []).append(eps)
    if not all((np.diff(v) > 0).all() for v in by_n.values()):
        raise InvariantViolation("threshold failed to increase with the horizon")
    if not all((np.diff(v) < 0).all() for v in by_t.values()):
        raise InvariantViolation("threshold failed to decrease with the receiver count")

    out = _out_dir(config)
    with open(out / "threshold.csv", "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(["t", "receivers", "eps_star"])
        for t, n, eps in rows:
            writer.writerow([t, n, repr(eps)])
    _write_manifest(config, out, ["threshold.csv"])
    print(f"tabulated {len(rows)} thresholds (t in 2..{config.t_max}, receivers in 1..{config.receivers_max})")
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "multiflow": cmd_multiflow,
    "region": cmd_region,
    "threshold": cmd_threshold,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptnc",
        description="Deadline-aware network-coded broadcast: solver, simulator, schedulers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment from a config file")
        p.add_argument("--config", required=True, help="path to a YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel workers for sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if config.kind != args.command:
            raise ConfigError(
                f"config kind {config.kind!r} does not match subcommand {args.command!r}"
            )
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        if overrides:
            from dataclasses import replace
            config = replace(config, **overrides)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return _COMMANDS[args.command](config, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
