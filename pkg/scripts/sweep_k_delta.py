"""Grid search over the negative-term weight K and length scale delta.

Trains the continuous head once per (K, delta) pair with shared data and
seeds and writes one table per metric (rows K, columns delta) plus an SVG
of AVP@8 against delta, one curve per K.

    python scripts/sweep_k_delta.py --out runs/kdelta
    python scripts/sweep_k_delta.py --k 64,640 --delta 0.5,1 --iterations 3000
"""

import argparse
import csv
from dataclasses import replace
from pathlib import Path

from viewpose.harness import ExperimentConfig, evaluate, make_training_data, summarize, train
from viewpose.losses import LossHyper
from viewpose.metrics import METRIC_COLUMNS
from viewpose.svgplot import line_plot


def floats(text):
    return [float(v) for v in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/kdelta"))
    ap.add_argument("--k", type=floats, default=[64.0, 640.0, 6400.0])
    ap.add_argument("--delta", type=floats, default=[0.25, 0.5, 1.0])
    ap.add_argument("--iterations", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    base = ExperimentConfig.preset("continuous", max_iterations=args.iterations, seed=args.seed)
    data = make_training_data(base)
    grid = {}
    for K in args.k:
        for delta in args.delta:
            cfg = replace(base, hyper=LossHyper(K=K, delta=delta))
            model, _ = train(cfg, data)
            grid[K, delta] = summarize(evaluate(model, cfg))
            print(f"K={K:g} delta={delta:g} " + " ".join(f"{c}={grid[K, delta][c]:.3f}" for c in METRIC_COLUMNS), flush=True)

    with open(args.out / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for metric in METRIC_COLUMNS:
            w.writerow([metric, *(f"delta={d:g}" for d in args.delta)])
            for K in args.k:
                w.writerow([f"K={K:g}", *(f"{grid[K, d][metric]:.4f}" for d in args.delta)])
    series = {f"K={K:g}": (args.delta, [grid[K, d]["AVP@8"] for d in args.delta]) for K in args.k}
    line_plot(args.out / "avp8_vs_delta.svg", series, title="AVP@8 vs delta", xlabel="delta", ylabel="AVP@8", ylim=(0, 1), markers=True)
    print(f"wrote {args.out / 'grid.csv'}")


if __name__ == "__main__":
    main()
