"""Detection matching, AP and Average Viewpoint Precision.

AP is the all-points area under the precision/recall curve after making
precision monotonically non-increasing (VOC 2010+ devkit style).  Detections
with equal scores form a single operating point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import angular_distance, discretize

DEFAULT_VIEWS = (4, 8, 16, 24)
METRIC_COLUMNS = ("AP",) + tuple(f"AVP@{v}" for v in DEFAULT_VIEWS)


class Label(str, Enum):
    TP = "TP"
    FP = "FP"
    IGNORED = "IGN"


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    score: float
    box: tuple[float, float, float, float]
    azimuth: float

    def __post_init__(self):
        _check_box(self.box)


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: tuple[float, float, float, float]
    azimuth: float
    difficult: bool = False

    def __post_init__(self):
        _check_box(self.box)


def _check_box(box) -> None:
    x1, y1, x2, y2 = box
    if not (x1 < x2 and y1 < y2):
        raise ValueError(f"degenerate box {box!r}")


def iou(a, b) -> float:
    """Intersection over union of two ``(x1, y1, x2, y2)`` boxes."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


@dataclass
class MatchResult:
    order: list[int]  # detection indices, descending score (stable)
    labels: list[Label]  # aligned with ``order``
    matched_gt: list[int | None]  # gt index per ranked detection
    n_positives: int  # non-difficult ground truths

    def scores(self, dets: Sequence[Detection]) -> list[float]:
        return [dets[i].score for i in self.order]


def match_detections(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_threshold: float = 0.5
) -> MatchResult:
    """Greedy score-ordered matching of one class's detections.

    A detection takes the highest-IoU ground truth among those it overlaps by
    at least ``iou_threshold`` that are either still unmatched or difficult
    (ties go to the lowest index).  Difficult matches are ignored and do not
    consume the ground truth; no candidate means false positive.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError("iou_threshold must lie in (0, 1]")
    by_image: dict[str, list[int]] = {}
    for j, g in enumerate(gts):
        by_image.setdefault(g.image_id, []).append(j)

    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    used = [False] * len(gts)
    labels, matched = [], []
    for i in order:
        d = dets[i]
        best, best_iou = None, -1.0
        for j in by_image.get(d.image_id, ()):
            g = gts[j]
            if used[j] and not g.difficult:
                continue
            o = iou(d.box, g.box)
            if o >= iou_threshold and o > best_iou:
                best, best_iou = j, o
        if best is None:
            labels.append(Label.FP)
            matched.append(None)
        elif gts[best].difficult:
            labels.append(Label.IGNORED)
            matched.append(best)
        else:
            used[best] = True
            labels.append(Label.TP)
            matched.append(best)
    n_pos = sum(1 for g in gts if not g.difficult)
    return MatchResult(order, labels, matched, n_pos)


@dataclass
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    ap: float
    thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))


def average_precision(labels: Sequence[Label], n_positives: int, scores: Sequence[float] | None = None) -> PRCurve:
    """All-points AP of a ranked label sequence.

    ``labels`` are in descending score order.  When ``scores`` are supplied,
    runs of equal score are collapsed to one operating point.
    """
    keep = [k for k, lab in enumerate(labels) if Label(lab) is not Label.IGNORED]
    tp = np.array([Label(labels[k]) is Label.TP for k in keep], dtype=float)
    if scores is not None:
        s = np.asarray([scores[k] for k in keep], dtype=float)
        last = np.ones(len(keep), dtype=bool)
        last[:-1] = s[1:] != s[:-1]
    else:
        s = np.arange(len(keep), 0, -1, dtype=float)
        last = np.ones(len(keep), dtype=bool)
    if n_positives <= 0 or len(keep) == 0:
        return PRCurve(np.zeros(0), np.zeros(0), 0.0, np.zeros(0))

    ctp = np.cumsum(tp)[last]
    rank = (np.arange(1, len(keep) + 1, dtype=float))[last]
    recall = ctp / n_positives
    precision = ctp / rank
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    d_recall = np.diff(np.concatenate([[0.0], recall]))
    ap = float(np.sum(d_recall * envelope))
    return PRCurve(recall, precision, ap, s[last])


def relabel_by_viewpoint(
    result: MatchResult,
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    views: int,
    criterion: str = "bin",
) -> list[Label]:
    """Demote true positives whose azimuth is wrong at ``views`` resolution.

    ``criterion="bin"`` compares centered bin indices; ``"angle"`` requires
    angular error below half a bin width.
    """
    out = []
    for i, lab, j in zip(result.order, result.labels, result.matched_gt):
        if lab is Label.TP:
            a, b = dets[i].azimuth, gts[j].azimuth
            if criterion == "bin":
                ok = discretize(a, views) == discretize(b, views)
            elif criterion == "angle":
                ok = angular_distance(a, b) < math.pi / views
            else:
                raise ValueError(f"unknown viewpoint criterion {criterion!r}")
            out.append(Label.TP if ok else Label.FP)
        else:
            out.append(lab)
    return out


def average_viewpoint_precision(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float = 0.5,
    views: int = 8,
    criterion: str = "bin",
    match: MatchResult | None = None,
) -> PRCurve:
    match = match if match is not None else match_detections(dets, gts, iou_threshold)
    labels = relabel_by_viewpoint(match, dets, gts, views, criterion)
    return average_precision(labels, match.n_positives, match.scores(dets))


def mean_over_classes(per_class: Mapping[object, float]) -> float:
    if not per_class:
        raise ValueError("cannot average over an empty set of classes")
    return float(sum(per_class.values()) / len(per_class))


@dataclass
class ClassResult:
    class_id: int
    metrics: dict[str, float]
    curves: dict[str, PRCurve]


def evaluate_detections(
    dets: Iterable[Detection],
    gts: Iterable[GroundTruth],
    classes: Sequence[int] | None = None,
    iou_threshold: float = 0.5,
    views: Sequence[int] = DEFAULT_VIEWS,
    criterion: str = "bin",
) -> dict[int, ClassResult]:
    """AP and AVP@views for every class, keyed by class id."""
    dets, gts = list(dets), list(gts)
    if classes is None:
        classes = sorted({g.class_id for g in gts})
    out = {}
    for c in classes:
        cd = [d for d in dets if d.class_id == c]
        cg = [g for g in gts if g.class_id == c]
        match = match_detections(cd, cg, iou_threshold)
        curves = {"AP": average_precision(match.labels, match.n_positives, match.scores(cd))}
        for v in views:
            curves[f"AVP@{v}"] = average_viewpoint_precision(cd, cg, iou_threshold, v, criterion, match)
        out[c] = ClassResult(c, {k: cur.ap for k, cur in curves.items()}, curves)
    return out


def metrics_rows(results: Mapping[int, ClassResult], columns: Sequence[str] = METRIC_COLUMNS) -> list[list[str]]:
    """CSV rows: header, one row per class, then the class mean."""
    rows = [["class", *columns]]
    for c in sorted(results):
        rows.append([str(c), *(format(results[c].metrics[k], ".6f") for k in columns)])
    rows.append(
        ["mean", *(format(mean_over_classes({c: r.metrics[k] for c, r in results.items()}), ".6f") for k in columns)]
    )
    return rows


def write_metrics_csv(path, results: Mapping[int, ClassResult], columns: Sequence[str] = METRIC_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(metrics_rows(results, columns))


def read_metrics_csv(path) -> dict[str, dict[str, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return {row["class"]: {k: float(v) for k, v in row.items() if k != "class"} for row in reader}


def write_pr_svgs(out_dir, results: Mapping[int, ClassResult], title_prefix: str = "") -> list[Path]:
    from .svgplot import line_plot

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for c, res in sorted(results.items()):
        series = {}
        for name, cur in res.curves.items():
            if len(cur.recall):
                series[f"{name} ({cur.ap:.3f})"] = (
                    np.concatenate([[0.0], cur.recall]).tolist(),
                    np.concatenate([[cur.precision[0]], cur.precision]).tolist(),
                )
        p = out_dir / f"pr_class{c}.svg"
        line_plot(p, series, title=f"{title_prefix}class {c}", xlabel="recall", ylabel="precision", xlim=(0, 1), ylim=(0, 1))
        paths.append(p)
    return paths
