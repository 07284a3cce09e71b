"""Built-in consistency checks behind ``viewpose selfcheck``.

Two suites: loss-head gradients against central differences, and the fast
AP/AVP code against a slow threshold-by-threshold evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import SampleSet
from .harness import ExperimentConfig, batch_objective, output_dim
from .losses import LossHyper, Norm
from .metrics import (
    DEFAULT_VIEWS,
    Detection,
    GroundTruth,
    Label,
    average_precision,
    average_viewpoint_precision,
    match_detections,
    relabel_by_viewpoint,
)

GRAD_TOLERANCE = 1e-5
METRIC_TOLERANCE = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def numeric_gradient(f: Callable[[np.ndarray], float], y: np.ndarray, step: float = 1e-6) -> np.ndarray:
    y = np.array(y, dtype=float)
    g = np.zeros_like(y)
    flat, gflat = y.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(y)
        flat[i] = orig - step
        lo = f(y)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return g


def relative_error(a, b) -> float:
    """``||a - b|| / max(||a||, ||b||)``, zero when both vanish."""
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def head_configs() -> dict[str, ExperimentConfig]:
    """One config per loss head: discrete, continuous, joint variant x norm."""
    heads = {
        "discrete": ExperimentConfig.preset("discrete", N=2, P=4),
        "continuous": ExperimentConfig.preset("continuous", hyper=LossHyper(K=640.0, delta=1.0)),
    }
    for rep in ("joint-a", "joint-b1", "joint-b2"):
        for norm in Norm:
            heads[f"{rep}/{norm.value}"] = ExperimentConfig.preset(rep, N=2, hyper=LossHyper(lam=10.0, norm=norm))
    return heads


def random_head_instance(config: ExperimentConfig, rng: np.random.Generator, size: int = 6):
    """Random raw outputs and a labeled batch with at least one positive and one negative."""
    n_classes = config.N
    cls = rng.integers(0, n_classes + 1, size=size)
    cls[0], cls[1] = 0, rng.integers(1, n_classes + 1)
    theta = np.where(cls > 0, rng.uniform(0, 2 * math.pi, size), np.nan)
    batch = SampleSet(np.zeros((size, 1)), cls, theta)
    out = rng.normal(0.0, 1.5, size=(size, output_dim(config)))
    return out, batch


def gradient_suite(instances: int = 50, seed: int = 0, step: float = 1e-6) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, cfg in head_configs().items():
        worst = 0.0
        for _ in range(instances):
            out, batch = random_head_instance(cfg, rng)
            _, analytic = batch_objective(cfg, out, batch)
            numeric = numeric_gradient(lambda y: batch_objective(cfg, y, batch)[0], out, step)
            worst = max(worst, relative_error(analytic, numeric))
        results.append(
            CheckResult(f"gradient {name}", worst < GRAD_TOLERANCE, f"max relative error {worst:.2e} over {instances} instances")
        )
    return results


# ---------------------------------------------------------------------------
# metric oracle


def threshold_ap(dets: Sequence[Detection], gts: Sequence[GroundTruth], views: int | None = None, criterion: str = "bin") -> float:
    """AP by re-running the evaluation at every distinct score threshold.

    At threshold ``t`` only detections scoring ``>= t`` exist.  Interpolated
    precision at recall ``r`` is the best precision at any threshold reaching
    recall ``>= r``.
    """
    n_pos = sum(1 for g in gts if not g.difficult)
    if n_pos == 0:
        return 0.0
    points = []
    for t in sorted({d.score for d in dets}, reverse=True):
        kept = [d for d in dets if d.score >= t]
        match = match_detections(kept, gts)
        labels = match.labels if views is None else relabel_by_viewpoint(match, kept, gts, views, criterion)
        tp = sum(1 for lab in labels if lab is Label.TP)
        fp = sum(1 for lab in labels if lab is Label.FP)
        if tp + fp:
            points.append((tp / n_pos, tp / (tp + fp)))
    ap, prev = 0.0, 0.0
    for r in sorted({r for r, _ in points}):
        ap += (r - prev) * max(p for rr, p in points if rr >= r)
        prev = r
    return ap


def random_metric_instance(rng: np.random.Generator, max_dets: int = 12, max_gts: int = 6):
    """Small single-class instance with overlapping boxes, ties and difficult objects."""
    images = ["a", "b"]
    gts = []
    for _ in range(rng.integers(0, max_gts + 1)):
        x, y = rng.integers(0, 4, size=2) * 10.0
        gts.append(
            GroundTruth(str(rng.choice(images)), 1, (x, y, x + 20, y + 20), float(rng.uniform(0, 2 * math.pi)), bool(rng.random() < 0.2))
        )
    dets = []
    for _ in range(rng.integers(0, max_dets + 1)):
        x, y = rng.integers(0, 4, size=2) * 10.0 + rng.choice([0.0, 2.0, 5.0])
        score = float(rng.integers(0, 6)) if rng.random() < 0.5 else float(rng.random())
        dets.append(Detection(str(rng.choice(images)), 1, score, (x, y, x + 20, y + 20), float(rng.uniform(0, 2 * math.pi))))
    return dets, gts


def metric_suite(instances: int = 1000, seed: int = 0, views: Sequence[int] = DEFAULT_VIEWS) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst, ordering_violations = 0.0, 0
    for _ in range(instances):
        dets, gts = random_metric_instance(rng)
        match = match_detections(dets, gts)
        ap = average_precision(match.labels, match.n_positives, match.scores(dets)).ap
        worst = max(worst, abs(ap - threshold_ap(dets, gts)))
        for v in views:
            avp = average_viewpoint_precision(dets, gts, views=v, match=match).ap
            worst = max(worst, abs(avp - threshold_ap(dets, gts, v)))
            ordering_violations += avp > ap
    return [
        CheckResult("metric oracle", worst <= METRIC_TOLERANCE, f"max |fast - oracle| {worst:.1e} over {instances} instances"),
        CheckResult("AVP <= AP", ordering_violations == 0, f"{ordering_violations} violations"),
    ]


def run_all(grad_instances: int = 50, metric_instances: int = 1000, seed: int = 0) -> list[CheckResult]:
    return gradient_suite(grad_instances, seed) + metric_suite(metric_instances, seed)
