"""Train every head on the default world and write one comparison table.

Rows follow the run list below (discrete, continuous, detection-only
baseline, joint heads at several lambda values and pose norms); columns
are AP and AVP@{4,8,16,24}, class means.  The lambda = 0 runs share the
baseline classifier, so the whole table costs about eleven trainings.

    python scripts/compare_representations.py --out runs/compare
    python scripts/compare_representations.py --iterations 2000 --seed 1 --criterion angle
"""

import argparse
import csv
import time
from dataclasses import replace
from pathlib import Path

from viewpose.harness import ExperimentConfig, evaluate, make_training_data, summarize, train
from viewpose.losses import LossHyper
from viewpose.metrics import METRIC_COLUMNS, write_metrics_csv


def run_list():
    yield "discrete", ExperimentConfig.preset("discrete"), False
    yield "continuous (class 1)", ExperimentConfig.preset("continuous"), False
    yield "baseline classifier", ExperimentConfig.preset("joint-b2", hyper=LossHyper(lam=0.0)).classifier_config(), False
    for rep in ("joint-a", "joint-b1", "joint-b2"):
        for lam in (1.0, 10.0):
            yield f"{rep} lambda={lam:g}", ExperimentConfig.preset(rep, hyper=LossHyper(lam=lam)), False
    for norm in ("l1", "l2", "sql2"):
        yield f"joint-b2 lambda=0 {norm}", ExperimentConfig.preset("joint-b2", hyper=LossHyper(lam=0.0, norm=norm)), True


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/compare"))
    ap.add_argument("--iterations", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--criterion", choices=["bin", "angle"], default="bin")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    data_cache, classifier, rows = {}, None, []
    for name, cfg, uses_classifier in run_list():
        cfg = replace(cfg, max_iterations=args.iterations, seed=args.seed, viewpoint_criterion=args.criterion)
        cfg = replace(cfg, world=replace(cfg.world, seed=args.seed))
        key = (cfg.N, cfg.plan)
        if key not in data_cache:
            data_cache[key] = make_training_data(cfg)
        t0 = time.perf_counter()
        model, _ = train(cfg, data_cache[key], classifier=classifier if uses_classifier else None)
        if cfg.classifier_only:
            classifier = model.net
        results = evaluate(model, cfg)
        metrics = summarize(results)
        slug = name.replace(" ", "_").replace("=", "").replace("(", "").replace(")", "")
        write_metrics_csv(args.out / f"{slug}.csv", results)
        rows.append([name, *(f"{metrics[c]:.4f}" for c in METRIC_COLUMNS)])
        print(f"{name:28s} " + " ".join(f"{c}={metrics[c]:.3f}" for c in METRIC_COLUMNS) + f"  ({time.perf_counter() - t0:.0f}s)", flush=True)

    with open(args.out / "comparison.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows([["run", *METRIC_COLUMNS], *rows])
    print(f"wrote {args.out / 'comparison.csv'}")


if __name__ == "__main__":
    main()
