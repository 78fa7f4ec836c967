#!/usr/bin/env python3
"""Compare allocation strategies on a two-level carbon trace.

Runs vanilla / one-shot / heuristic sweeps over a seed range on the default
synthetic benchmark and writes per-run artifacts plus a quartile summary,
mirroring the hv-vs-carbon comparison figures.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from carbonnas.sim import SimConfig, run_simulation, write_result
from carbonnas.surrogate import gen_synthetic_benchmark
from carbonnas.trace import square_wave_trace


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/strategy_comparison"))
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--bench-seed", type=int, default=0)
    ap.add_argument("--hours", type=int, default=96)
    ap.add_argument("--low", type=float, default=80.0)
    ap.add_argument("--high", type=float, default=400.0)
    args = ap.parse_args()

    table, proxy = gen_synthetic_benchmark(seed=args.bench_seed)
    trace = square_wave_trace(args.low, args.high, 12, args.hours)
    args.out.mkdir(parents=True, exist_ok=True)

    summary: dict[str, dict] = {}
    for strategy in ("one_shot", "heuristic", "vanilla"):
        hv, carbon = [], []
        for seed in range(args.seeds):
            cfg = SimConfig(num_gpus=8, budget=1e9, max_hours=args.hours,
                            cap_r=8, sampler_batch=2, seed=seed)
            result = run_simulation(cfg, trace, table, proxy, strategy)
            write_result(result, args.out)
            hv.append(result.final_hv)
            carbon.append(result.cumulative_carbon)
        summary[strategy] = {
            "median_hv": float(np.median(hv)),
            "median_carbon_g": float(np.median(carbon)),
        }
        print(f"{strategy:>10}: median HV {summary[strategy]['median_hv']:8.2f}  "
              f"median carbon {summary[strategy]['median_carbon_g']:10.1f} g")

    ratio = summary["vanilla"]["median_carbon_g"] / summary["heuristic"]["median_carbon_g"]
    print(f"vanilla / heuristic carbon ratio: {ratio:.2f}x")
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
