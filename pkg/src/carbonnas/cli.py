"""Command-line surface: benchmark generation, forecast scoring, RL training,
simulation runs, and report aggregation.

Exit codes are a stable contract: 0 success, 1 usage error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import agent as rl
from .forecast import make_forecaster, rolling_evaluate
from .partition import TreeConfig
from .sim import AllocationEnv, SimConfig, run_simulation, write_result
from .surrogate import (
    ArchSpace,
    BenchmarkError,
    calibrate_proxy,
    gen_synthetic_benchmark,
    load_benchmark,
    write_benchmark,
)
from .trace import TraceError, load_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures onto the exit contract
        raise UsageError(message)


def load_sim_config(path: str | Path | None, overrides: dict | None = None) -> SimConfig:
    """SimConfig from a TOML or JSON file; every default is overridable."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        if path.suffix == ".toml":
            data = tomllib.loads(path.read_text())
        else:
            data = json.loads(path.read_text())
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    tree = TreeConfig(**data.pop("tree", {}))
    try:
        return SimConfig(tree=tree, **data)
    except TypeError as exc:
        raise UsageError(f"bad config field: {exc}") from exc


def _parse_seeds(raw: str) -> list[int]:
    seeds = [int(s) for s in raw.replace(";", ",").split(",") if s.strip()]
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def _load_bench(args):
    space = ArchSpace(genes=args.genes, arity=args.arity)
    if args.benchmark:
        table = load_benchmark(args.benchmark, space)
        proxy = calibrate_proxy(table, args.spearman, args.seed)
    else:
        table, proxy = gen_synthetic_benchmark(
            seed=args.seed, shape=(args.genes, args.arity), target_spearman=args.spearman)
    return table, proxy


def _add_bench_args(p):
    p.add_argument("--benchmark", help="benchmark CSV; omitted means synthesize from --seed")
    p.add_argument("--genes", type=int, default=6)
    p.add_argument("--arity", type=int, default=5)
    p.add_argument("--spearman", type=float, default=0.7, help="proxy rank-correlation target")


def cmd_gen_bench(args) -> int:
    table, proxy = gen_synthetic_benchmark(
        seed=args.seed, shape=(args.genes, args.arity), target_spearman=args.spearman)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "seed": args.seed,
        "shape": {"genes": args.genes, "arity": args.arity},
        "rows": table.space.size,
        "spearman_target": args.spearman,
        "proxy_noise_scale": proxy.noise_scale,
    }
    write_benchmark(table, out, manifest)
    print(f"wrote {table.space.size} rows to {out}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    trace = load_trace(args.trace)
    methods = args.method.split(",")
    report = {"trace": str(args.trace), "test_start": args.test_start, "days": args.days,
              "methods": {}}
    for method in methods:
        forecaster = make_forecaster(method, trace=trace, lags=args.lags)
        d1, d2, d3 = rolling_evaluate(forecaster, trace, args.test_start, args.days)
        report["methods"][method] = {"day1_mape": d1, "day2_mape": d2, "day3_mape": d3}
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"wrote MAPE report to {out}")
    return EXIT_OK


def cmd_train_rl(args) -> int:
    trace = load_trace(args.trace)
    table, proxy = _load_bench(args)
    cfg = load_sim_config(args.config, {"seed": args.seed})
    forecaster = make_forecaster(args.forecast_method, trace=trace)
    env = AllocationEnv(cfg, trace, table, proxy, forecaster=forecaster)
    if args.checkpoint_in:
        policy = rl.load_policy(args.checkpoint_in)
    else:
        policy_cfg = rl.PolicyConfig(state_dim=env.state_dim, head=args.head)
        policy = rl.Policy(policy_cfg, seed=args.seed)
    train_cfg = rl.TrainConfig(
        lr_actor=args.lr_actor, lr_critic=args.lr_critic,
        entropy_weight=args.entropy_weight, gamma=args.gamma)
    best, curve = rl.train_agent(env, args.episodes, policy, train_cfg, seed=args.seed)
    out = Path(args.checkpoint_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rl.save_policy(best, out, extra_meta={"episodes": args.episodes, "seed": args.seed})
    if args.curve_out:
        curve_path = Path(args.curve_out)
        with curve_path.open("w", newline="") as fh:
            cols = ["episode", "return", "steps", "mean_advantage", "mean_entropy",
                    "critic_loss", "val_return"]
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in curve:
                writer.writerow({c: row.get(c, "") for c in cols})
        print(f"wrote learning curve to {curve_path}")
    print(f"saved checkpoint to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    trace = load_trace(args.trace)
    table, proxy = _load_bench(args)
    strategies = args.strategies.split(",")
    seeds = _parse_seeds(args.seeds)
    policy = rl.load_policy(args.policy) if args.policy else None
    if "rl" in strategies and policy is None:
        raise UsageError("strategy 'rl' requires --policy")
    overrides = {"seed": None}
    if args.budget is not None:
        overrides["budget"] = args.budget
    if args.budget_mode is not None:
        overrides["budget_mode"] = args.budget_mode
    base_cfg = load_sim_config(args.config, overrides)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    forecaster = make_forecaster(args.forecast_method, trace=trace)
    combined = []
    for strategy in strategies:
        for seed in seeds:
            cfg = replace(base_cfg, seed=seed)
            result = run_simulation(cfg, trace, table, proxy, strategy,
                                    policy=policy, forecaster=forecaster)
            write_result(result, out_dir)
            combined.append({
                "strategy": strategy, "seed": seed,
                "final_hv": result.final_hv,
                "carbon_g": result.cumulative_carbon,
                "relative_carbon": result.cumulative_relative_carbon,
                "hours": result.hours,
                "num_evaluated": result.num_evaluated,
            })
    with (out_dir / "comparison.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(combined[0].keys()))
        writer.writeheader()
        writer.writerows(combined)
    print(f"wrote {len(combined)} runs to {out_dir}")
    return EXIT_OK


def _quartiles(values: list[float]) -> dict:
    arr = np.sort(np.asarray(values, dtype=float))
    return {
        "median": float(np.median(arr)),
        "q1": float(np.percentile(arr, 25)),
        "q3": float(np.percentile(arr, 75)),
        "n": int(arr.size),
    }


def cmd_report(args) -> int:
    run_dir = Path(args.runs)
    results = sorted(run_dir.glob("*_seed*.json"))
    if not results:
        raise BenchmarkError(f"no result files in {run_dir}")
    by_strategy: dict[str, dict] = {}
    curves = []
    for path in results:
        data = json.loads(path.read_text())
        s = data["strategy"]
        by_strategy.setdefault(s, {"final_hv": [], "carbon_g": [], "relative_carbon": []})
        by_strategy[s]["final_hv"].append(data["final_hv"])
        by_strategy[s]["carbon_g"].append(data["cumulative_carbon"])
        by_strategy[s]["relative_carbon"].append(data["cumulative_relative_carbon"])
        for row in data["trajectory"]:
            curves.append({"strategy": s, "seed": data["seed"], "hour": row["hour"],
                           "hv": row["hv"], "carbon_g": row["carbon_g"]})
    summary = {
        strategy: {metric: _quartiles(vals) for metric, vals in metrics.items()}
        for strategy, metrics in by_strategy.items()
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    with (out / "hv_vs_carbon.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["strategy", "seed", "hour", "hv", "carbon_g"])
        writer.writeheader()
        writer.writerows(curves)
    print(f"wrote summary for {len(by_strategy)} strategies to {out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="carbonnas", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="root seed for all sub-streams")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-bench", help="synthesize a benchmark table")
    p.add_argument("--genes", type=int, default=6)
    p.add_argument("--arity", type=int, default=5)
    p.add_argument("--spearman", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_bench)

    p = sub.add_parser("forecast", help="daywise MAPE evaluation of forecasters")
    p.add_argument("--trace", required=True)
    p.add_argument("--method", default="persistence",
                   help="comma list of persistence|seasonal|ar|oracle")
    p.add_argument("--lags", type=int, default=24)
    p.add_argument("--test-start", type=int, required=True, dest="test_start")
    p.add_argument("--days", type=int, default=3)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("train-rl", help="train the allocation agent")
    p.add_argument("--trace", required=True)
    _add_bench_args(p)
    p.add_argument("--config", help="SimConfig TOML/JSON")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--head", choices=["discrete", "continuous"], default="discrete")
    p.add_argument("--lr-actor", type=float, default=1e-4)
    p.add_argument("--lr-critic", type=float, default=1e-3)
    p.add_argument("--entropy-weight", type=float, default=0.01)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--forecast-method", default="oracle")
    p.add_argument("--checkpoint-in")
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--curve-out")
    p.set_defaults(func=cmd_train_rl)

    p = sub.add_parser("simulate", help="run strategies against a trace")
    p.add_argument("--trace", required=True)
    _add_bench_args(p)
    p.add_argument("--config", help="SimConfig TOML/JSON")
    p.add_argument("--strategies", default="vanilla,one_shot,heuristic")
    p.add_argument("--seeds", default="0")
    p.add_argument("--budget", type=float)
    p.add_argument("--budget-mode", choices=["carbon", "time"], dest="budget_mode")
    p.add_argument("--policy", help="RL checkpoint for the rl strategy")
    p.add_argument("--forecast-method", default="oracle")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="aggregate simulation runs")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceError, BenchmarkError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - contract: internal failures exit 3
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
