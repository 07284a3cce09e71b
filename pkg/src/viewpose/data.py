"""Synthetic stand-in for labeled detection patches with azimuth annotations.

Each object class owns an orthonormal frame in feature space.  A positive
patch of class ``c`` seen from azimuth ``theta`` is

    mu_c + r * (cos(theta) u1 + sin(theta) u2)
         + h * (cos(2 theta) u3 + sin(2 theta) u4) + sigma * noise

so appearance varies continuously with the viewpoint.  The second harmonic
(amplitude ``h``) is symmetric under ``theta -> theta + pi`` and makes
front/back views look alike when ``r`` is small relative to the noise.
Negatives are broad background noise, a fraction of them blended with a
faint object ("hard negatives", like proposals that only partially cover an
object).

Two nuisances, both active in the default world, make the representations
behave differently:

* ``class_blend``: a positive may borrow up to this share of its appearance
  from another class (same azimuth), so class membership becomes ambiguous.
* ``mirror_label_rate``: in generated training samples this fraction of
  azimuth annotations is recorded as ``pi - theta`` (left/right mirror confusion).
  Proposal scenarios always carry the true azimuth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .geometry import TWO_PI, canon
from .metrics import Detection, GroundTruth, Label

FRAME_SIZE = 5  # mean direction + two circle axes + two harmonic axes


class DatasetFormatError(ValueError):
    def __init__(self, path, line: int, record: int, message: str):
        super().__init__(f"{path}: line {line} (record {record}): {message}")
        self.line = line
        self.record = record


class InsufficientPoolError(ValueError):
    pass


@dataclass(frozen=True)
class WorldSpec:
    n_classes: int = 3
    dim: int = 32
    mean_scale: float = 6.0
    radius: float = 4.0
    harmonic: float = 0.0
    sigma: float = 0.2
    background_spread: float = 1.0
    hard_negative_fraction: float = 0.3
    hard_negative_max_blend: float = 0.8
    difficult_fraction: float = 0.1
    class_blend: float = 0.55
    mirror_label_rate: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("need at least one class")
        if self.dim < FRAME_SIZE:
            raise ValueError(f"feature dimension must be >= {FRAME_SIZE}")
        if self.radius <= 0 or self.background_spread <= 0 or self.sigma < 0:
            raise ValueError("radius and background spread must be positive, sigma nonnegative")


@dataclass
class World:
    """Concrete class geometry drawn from a ``WorldSpec``."""

    spec: WorldSpec
    means: np.ndarray  # (N, D)
    frames: np.ndarray  # (N, D, FRAME_SIZE); column 0 is the mean direction
    radii: np.ndarray  # (N,)

    @classmethod
    def from_spec(cls, spec: WorldSpec) -> "World":
        rng = np.random.default_rng([spec.seed, 0x5EED])
        frames = np.empty((spec.n_classes, spec.dim, FRAME_SIZE))
        for c in range(spec.n_classes):
            q, _ = np.linalg.qr(rng.standard_normal((spec.dim, FRAME_SIZE)))
            frames[c] = q
        means = spec.mean_scale * frames[:, :, 0]
        for a in range(spec.n_classes):
            for b in range(a + 1, spec.n_classes):
                if np.linalg.norm(means[a] - means[b]) <= 4 * spec.sigma:
                    raise ValueError(f"classes {a + 1} and {b + 1} are too close for sigma={spec.sigma}")
        return cls(spec, means, frames, np.full(spec.n_classes, spec.radius))

    def signal(self, class_id: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Noise-free positive features; ``class_id`` is 1-based."""
        c = np.asarray(class_id) - 1
        f = self.frames[c]
        r = self.radii[c][:, None]
        h = self.spec.harmonic
        return (
            self.means[c]
            + r * (np.cos(theta)[:, None] * f[:, :, 1] + np.sin(theta)[:, None] * f[:, :, 2])
            + h * (np.cos(2 * theta)[:, None] * f[:, :, 3] + np.sin(2 * theta)[:, None] * f[:, :, 4])
        )

    def draw_nuisance(self, class_id: np.ndarray, rng: np.random.Generator, sigma: float | None = None):
        """Blend partner, blend share and noise for a batch of positives."""
        n, N = len(class_id), self.spec.n_classes
        s = self.spec.sigma if sigma is None else sigma
        if self.spec.class_blend > 0 and N > 1:
            other = (class_id - 1 + rng.integers(1, N, size=n)) % N + 1
            beta = rng.uniform(0, self.spec.class_blend, size=n)
        else:
            other, beta = class_id, np.zeros(n)
        return other, beta, s * rng.standard_normal((n, self.spec.dim))

    def compose(self, class_id, theta, other, beta, noise) -> np.ndarray:
        b = np.asarray(beta)[:, None]
        return (1 - b) * self.signal(class_id, theta) + b * self.signal(other, theta) + noise

    def positives(self, class_id, theta, rng: np.random.Generator, sigma: float | None = None) -> np.ndarray:
        class_id = np.atleast_1d(np.asarray(class_id, dtype=int))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return self.compose(class_id, theta, *self.draw_nuisance(class_id, rng, sigma))

    def negatives(self, n: int, rng: np.random.Generator, hard_fraction: float | None = None) -> np.ndarray:
        spec = self.spec
        frac = spec.hard_negative_fraction if hard_fraction is None else hard_fraction
        x = spec.background_spread * rng.standard_normal((n, spec.dim))
        hard = rng.random(n) < frac
        k = int(hard.sum())
        if k:
            cls = rng.integers(1, spec.n_classes + 1, size=k)
            th = rng.uniform(0, TWO_PI, size=k)
            alpha = rng.uniform(0, spec.hard_negative_max_blend, size=k)[:, None]
            x[hard] = alpha * self.positives(cls, th, rng) + (1 - alpha) * x[hard]
        return x

    def plane_coordinates(self, x: np.ndarray, class_id) -> np.ndarray:
        """Project features onto a class's circle plane: ``(r cos, r sin)``."""
        c = np.asarray(class_id) - 1
        f = self.frames[c]
        centered = np.asarray(x) - self.means[c]
        return np.stack([np.einsum("nd,nd->n", centered, f[:, :, 1]), np.einsum("nd,nd->n", centered, f[:, :, 2])], axis=1)


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    class_id: int
    azimuth: float  # nan for background


@dataclass
class SampleSet:
    """Column-oriented collection of samples."""

    features: np.ndarray  # (n, D)
    class_id: np.ndarray  # (n,) int, 0 = background
    azimuth: np.ndarray  # (n,) float, nan for background

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        self.features = f if f.ndim == 2 and len(f) == len(self.class_id) else f.reshape(len(self.class_id), -1)
        self.class_id = np.asarray(self.class_id, dtype=int)
        self.azimuth = np.asarray(self.azimuth, dtype=float)

    def __len__(self) -> int:
        return len(self.class_id)

    def __getitem__(self, k: int) -> Sample:
        return Sample(self.features[k], int(self.class_id[k]), float(self.azimuth[k]))

    def __iter__(self) -> Iterator[Sample]:
        for k in range(len(self)):
            yield self[k]

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.features[idx], self.class_id[idx], self.azimuth[idx])

    @property
    def is_positive(self) -> np.ndarray:
        return self.class_id > 0

    @classmethod
    def concat(cls, parts: Sequence["SampleSet"]) -> "SampleSet":
        return cls(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.class_id for p in parts]),
            np.concatenate([p.azimuth for p in parts]),
        )

    def equals(self, other: "SampleSet") -> bool:
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.class_id, other.class_id)
            and np.array_equal(self.azimuth, other.azimuth, equal_nan=True)
        )


def generate_samples(
    spec: WorldSpec,
    n: int,
    positive_fraction: float,
    seed: int | None = None,
    flip: bool = False,
    classes: Sequence[int] | None = None,
) -> SampleSet:
    """Draw ``n`` labeled patches.

    Each patch is positive with probability ``positive_fraction``; positives
    pick a class uniformly (from ``classes`` if given) and an azimuth
    uniformly on the circle.  With ``flip`` every positive is followed by its
    mirrored copy, so the set grows by the number of positives.
    """
    if n < 0:
        raise ValueError(f"sample count must be nonnegative, got {n}")
    if not 0.0 <= positive_fraction <= 1.0:
        raise ValueError("positive_fraction must lie in [0, 1]")
    world = World.from_spec(spec)
    rng = np.random.default_rng([spec.seed, 1 if seed is None else 2, 0 if seed is None else seed])
    pos = rng.random(n) < positive_fraction
    k = int(pos.sum())
    pool = np.arange(1, spec.n_classes + 1) if classes is None else np.asarray(classes)
    cls = np.zeros(n, dtype=int)
    theta = np.full(n, np.nan)
    cls[pos] = rng.choice(pool, size=k)
    theta[pos] = rng.uniform(0.0, TWO_PI, size=k)
    feats = np.empty((n, spec.dim))
    if k:
        nuisance = world.draw_nuisance(cls[pos], rng)
        feats[pos] = world.compose(cls[pos], theta[pos], *nuisance)
    if n - k:
        feats[~pos] = world.negatives(n - k, rng)
    label = theta.copy()
    if spec.mirror_label_rate > 0 and k:
        confused = pos & (rng.random(n) < spec.mirror_label_rate)
        label[confused] = canon(np.pi - theta[confused])
    out = SampleSet(feats, cls, label)
    if flip and k:
        # flipping maps the annotation too, so a confused label stays confused
        mirrored_x = world.compose(cls[pos], -theta[pos], *nuisance)
        mirrored = SampleSet(mirrored_x, cls[pos], canon(-label[pos]))
        out = SampleSet.concat([out, mirrored])
    return out


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 128
    positives_per_batch: int = 32
    negatives_per_batch: int = 96

    def __post_init__(self):
        if self.positives_per_batch + self.negatives_per_batch != self.batch_size:
            raise ValueError("positives + negatives must equal the batch size")
        if self.positives_per_batch < 0 or self.negatives_per_batch < 0:
            raise ValueError("batch composition must be nonnegative")


CONTINUOUS_PLAN = BatchPlan(128, 8, 120)


class BatchSampler:
    """Balanced batches drawn with replacement across batches.

    Within a batch nothing repeats.  Each positive slot first picks a class
    uniformly, then a sample of that class.
    """

    def __init__(self, pool: SampleSet, plan: BatchPlan, rng: np.random.Generator):
        self.pool = pool
        self.plan = plan
        self.rng = rng
        self.neg_idx = np.flatnonzero(pool.class_id == 0)
        self.classes = np.unique(pool.class_id[pool.class_id > 0])
        self.by_class = {int(c): np.flatnonzero(pool.class_id == c) for c in self.classes}
        n_pos = sum(len(v) for v in self.by_class.values())
        if n_pos < plan.positives_per_batch:
            raise InsufficientPoolError(
                f"positive side: pool has {n_pos} positives, batch needs {plan.positives_per_batch}"
            )
        if len(self.neg_idx) < plan.negatives_per_batch:
            raise InsufficientPoolError(
                f"negative side: pool has {len(self.neg_idx)} negatives, batch needs {plan.negatives_per_batch}"
            )

    def indices(self) -> np.ndarray:
        plan, rng = self.plan, self.rng
        picks = []
        if plan.positives_per_batch:
            counts = np.bincount(rng.integers(0, len(self.classes), size=plan.positives_per_batch), minlength=len(self.classes))
            groups = [self.by_class[int(c)] for c in self.classes]
            if all(n <= len(g) for n, g in zip(counts, groups)):
                picks.extend(rng.choice(g, size=n, replace=False) for n, g in zip(counts, groups) if n)
            else:
                # some class is too small for its draw: fall back to the whole positive pool
                picks.append(rng.choice(np.concatenate(groups), size=plan.positives_per_batch, replace=False))
        if plan.negatives_per_batch:
            picks.append(rng.choice(self.neg_idx, size=plan.negatives_per_batch, replace=False))
        return np.concatenate(picks) if picks else np.zeros(0, dtype=int)

    def sample(self) -> SampleSet:
        return self.pool.subset(self.indices())


def sample_batch(pool: SampleSet, plan: BatchPlan, rng: np.random.Generator) -> SampleSet:
    return BatchSampler(pool, plan, rng).sample()


def split_validation(pool: SampleSet, size: int, plan: BatchPlan, rng: np.random.Generator) -> tuple[SampleSet, SampleSet]:
    """Hold out ``size`` samples with the batch plan's positive share.

    Returns ``(train, validation)``; the two are disjoint.
    """
    n_pos = int(round(size * plan.positives_per_batch / plan.batch_size))
    n_neg = size - n_pos
    pos_idx = np.flatnonzero(pool.class_id > 0)
    neg_idx = np.flatnonzero(pool.class_id == 0)
    if n_pos > len(pos_idx) or n_neg > len(neg_idx):
        raise InsufficientPoolError(f"cannot hold out {n_pos} positives and {n_neg} negatives")
    val = np.concatenate([rng.choice(pos_idx, n_pos, replace=False), rng.choice(neg_idx, n_neg, replace=False)])
    mask = np.ones(len(pool), dtype=bool)
    mask[val] = False
    return pool.subset(np.flatnonzero(mask)), pool.subset(np.sort(val))


# ---------------------------------------------------------------------------
# detection scenarios

CELL = 100.0  # image side is GRID * CELL
GRID = 4


@dataclass
class DetectionScenario:
    detections: list[Detection]
    ground_truth: list[GroundTruth]
    expected: list[Label]  # per detection, before any viewpoint check


def _cell_box(cell: int, rng: np.random.Generator) -> tuple[float, float, float, float]:
    cx, cy = (cell % GRID) * CELL, (cell // GRID) * CELL
    w, h = rng.uniform(40, 70, size=2)
    x1, y1 = cx + rng.uniform(5, CELL - 5 - w), cy + rng.uniform(5, CELL - 5 - h)
    return (float(x1), float(y1), float(x1 + w), float(y1 + h))


def _jitter_box(box, amount: float, rng: np.random.Generator):
    """Shift each edge by at most ``amount`` times the box size."""
    x1, y1, x2, y2 = box
    w, h = x2 - x1, y2 - y1
    d = rng.uniform(-amount, amount, size=4) * np.array([w, h, w, h])
    return (float(x1 + d[0]), float(y1 + d[1]), float(x2 + d[2]), float(y2 + d[3]))


def _shifted_box(box, frac: float):
    x1, y1, x2, y2 = box
    s = frac * (x2 - x1)
    return (x1 + s, y1, x2 + s, y2)


def generate_detection_scenario(
    spec: WorldSpec,
    n_images: int,
    seed: int,
    objects_per_image: tuple[int, int] = (1, 3),
    jitter: float = 0.08,
    azimuth_error: float | None = None,
    azimuth_noise: float = 0.0,
    distractor_fraction: float = 0.0,
    difficult_fraction: float | None = None,
) -> DetectionScenario:
    """Ground truth plus scored detections with a known TP/FP labeling.

    Every object gets one detection whose box overlaps it with IoU >= 0.5
    (edges jittered by at most ``jitter`` of the size, capped at 0.1).
    Detection azimuths are the truth plus ``azimuth_error`` (fixed) or
    uniform noise of half-width ``azimuth_noise``.  Distractors sit in empty
    cells and are false positives; with ``distractor_fraction = q`` about
    ``q`` of all detections are distractors.  Scores are uniform in [0, 1].
    """
    if n_images < 1:
        raise ValueError("need at least one image")
    jitter = min(jitter, 0.1)
    rng = np.random.default_rng([spec.seed, 3, seed])
    diff_frac = spec.difficult_fraction if difficult_fraction is None else difficult_fraction
    dets, gts, expected = [], [], []
    for im in range(n_images):
        image_id = f"img{im:05d}"
        n_obj = int(rng.integers(objects_per_image[0], objects_per_image[1] + 1))
        cells = rng.permutation(GRID * GRID)
        for k in range(n_obj):
            box = _cell_box(int(cells[k]), rng)
            c = int(rng.integers(1, spec.n_classes + 1))
            theta = float(rng.uniform(0, TWO_PI))
            difficult = bool(rng.random() < diff_frac)
            gts.append(GroundTruth(image_id, c, box, theta, difficult))
            if azimuth_error is not None:
                az = canon(theta + azimuth_error)
            else:
                az = canon(theta + rng.uniform(-azimuth_noise, azimuth_noise))
            dbox = _jitter_box(box, jitter, rng)  # IoU stays above 0.6 for jitter <= 0.1
            dets.append(Detection(image_id, c, float(rng.random()), dbox, az))
            expected.append(Label.IGNORED if difficult else Label.TP)
        if distractor_fraction > 0:
            n_dis = int(rng.binomial(n_obj, distractor_fraction / (1 - distractor_fraction))) if distractor_fraction < 1 else n_obj
            for k in range(n_obj, min(n_obj + n_dis, GRID * GRID)):
                c = int(rng.integers(1, spec.n_classes + 1))
                dets.append(Detection(image_id, c, float(rng.random()), _cell_box(int(cells[k]), rng), float(rng.uniform(0, TWO_PI))))
                expected.append(Label.FP)
    return DetectionScenario(dets, gts, expected)


@dataclass
class ProposalSet:
    """Candidate boxes with features, awaiting scores from a trained model."""

    image_id: list[str]
    boxes: np.ndarray  # (n, 4)
    features: np.ndarray  # (n, D)
    source: np.ndarray  # (n,) ground-truth index the proposal was cut from, -1 for background
    ground_truth: list[GroundTruth] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.image_id)


def generate_proposal_scenario(
    spec: WorldSpec,
    n_images: int,
    seed: int,
    objects_per_image: tuple[int, int] = (1, 3),
    background_per_image: int = 6,
    partial_per_object: int = 1,
    classes: Sequence[int] | None = None,
) -> ProposalSet:
    """Held-out images for end-to-end evaluation of a trained head.

    Each object yields one well-aligned proposal (IoU >= 0.5, positive
    features of its class and azimuth) and ``partial_per_object`` shifted
    proposals (IoU 1/3, hard-negative features blended from that object).
    Background proposals fill empty cells with background features.
    Difficult objects get doubled feature noise.
    """
    if n_images < 1:
        raise ValueError("need at least one image")
    world = World.from_spec(spec)
    rng = np.random.default_rng([spec.seed, 4, seed])
    pool = np.arange(1, spec.n_classes + 1) if classes is None else np.asarray(classes)
    image_ids, boxes, feats, source, gts = [], [], [], [], []
    for im in range(n_images):
        image_id = f"img{im:05d}"
        n_obj = int(rng.integers(objects_per_image[0], objects_per_image[1] + 1))
        cells = rng.permutation(GRID * GRID)
        for k in range(n_obj):
            box = _cell_box(int(cells[k]), rng)
            c = int(rng.choice(pool))
            theta = float(rng.uniform(0, TWO_PI))
            difficult = bool(rng.random() < spec.difficult_fraction)
            g = len(gts)
            gts.append(GroundTruth(image_id, c, box, theta, difficult))
            sigma = spec.sigma * (2.0 if difficult else 1.0)
            image_ids.append(image_id)
            boxes.append(_jitter_box(box, 0.08, rng))
            feats.append(world.positives([c], [theta], rng, sigma=sigma)[0])
            source.append(g)
            for _ in range(partial_per_object):
                alpha = rng.uniform(0, spec.hard_negative_max_blend)
                bg = spec.background_spread * rng.standard_normal(spec.dim)
                image_ids.append(image_id)
                boxes.append(_shifted_box(box, 0.5))
                feats.append(alpha * world.positives([c], [theta], rng)[0] + (1 - alpha) * bg)
                source.append(-1)
        n_bg = min(background_per_image, GRID * GRID - n_obj)
        for k in range(n_obj, n_obj + n_bg):
            image_ids.append(image_id)
            boxes.append(_cell_box(int(cells[k]), rng))
            feats.append(world.negatives(1, rng, hard_fraction=0.0)[0])
            source.append(-1)
    return ProposalSet(image_ids, np.array(boxes, dtype=float).reshape(-1, 4), np.array(feats).reshape(-1, spec.dim), np.array(source, dtype=int), gts)


# ---------------------------------------------------------------------------
# file formats


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else format(float(v), ".17g")


def _records(path) -> Iterator[tuple[int, int, list[str]]]:
    """Yield ``(line_number, record_index, fields)`` skipping blanks and comments."""
    record = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            yield lineno, record, line.split()
            record += 1


def save_samples(path, samples: SampleSet) -> None:
    with open(path, "w") as fh:
        fh.write("# class_id azimuth_radians f_1 ... f_D\n")
        for c, a, f in zip(samples.class_id, samples.azimuth, samples.features):
            fh.write(f"{int(c)} {_fmt(a)} " + " ".join(_fmt(v) for v in f) + "\n")


def load_samples(path) -> SampleSet:
    cls, az, feats = [], [], []
    dim = None
    for lineno, rec, fields in _records(path):
        try:
            c = int(fields[0])
            a = float(fields[1])
            f = [float(v) for v in fields[2:]]
        except (ValueError, IndexError) as exc:
            raise DatasetFormatError(path, lineno, rec, f"cannot parse sample ({exc})") from exc
        if dim is None:
            dim = len(f)
        if len(f) != dim or dim == 0:
            raise DatasetFormatError(path, lineno, rec, f"expected {dim} features, got {len(f)}")
        if c < 0 or (c > 0 and math.isnan(a)) or not all(math.isfinite(v) for v in f):
            raise DatasetFormatError(path, lineno, rec, "invalid class, azimuth or non-finite feature")
        cls.append(c)
        az.append(a)
        feats.append(f)
    if not cls:
        return SampleSet(np.zeros((0, 0)), np.zeros(0, dtype=int), np.zeros(0))
    return SampleSet(np.array(feats), np.array(cls), np.array(az))


def save_detections(path, dets: Sequence[Detection]) -> None:
    with open(path, "w") as fh:
        fh.write("# image_id class_id score x1 y1 x2 y2 azimuth_radians\n")
        for d in dets:
            fh.write(" ".join([d.image_id, str(d.class_id), _fmt(d.score), *map(_fmt, d.box), _fmt(d.azimuth)]) + "\n")


def load_detections(path) -> list[Detection]:
    out = []
    for lineno, rec, f in _records(path):
        try:
            if len(f) != 8:
                raise ValueError(f"expected 8 fields, got {len(f)}")
            out.append(Detection(f[0], int(f[1]), float(f[2]), tuple(float(v) for v in f[3:7]), float(f[7])))
        except ValueError as exc:
            raise DatasetFormatError(path, lineno, rec, str(exc)) from exc
    return out


def save_ground_truth(path, gts: Sequence[GroundTruth]) -> None:
    with open(path, "w") as fh:
        fh.write("# image_id class_id x1 y1 x2 y2 azimuth_radians difficult\n")
        for g in gts:
            fh.write(" ".join([g.image_id, str(g.class_id), *map(_fmt, g.box), _fmt(g.azimuth), str(int(g.difficult))]) + "\n")


def load_ground_truth(path) -> list[GroundTruth]:
    out = []
    for lineno, rec, f in _records(path):
        try:
            if len(f) != 8:
                raise ValueError(f"expected 8 fields, got {len(f)}")
            if f[7] not in ("0", "1"):
                raise ValueError(f"difficult flag must be 0 or 1, got {f[7]!r}")
            out.append(GroundTruth(f[0], int(f[1]), tuple(float(v) for v in f[2:6]), float(f[6]), f[7] == "1"))
        except ValueError as exc:
            raise DatasetFormatError(path, lineno, rec, str(exc)) from exc
    return out


def save_proposals(path, proposals: ProposalSet) -> None:
    """Proposal rows: ``image_id source x1 y1 x2 y2 f_1 ... f_D``."""
    with open(path, "w") as fh:
        fh.write("# image_id source_gt x1 y1 x2 y2 f_1 ... f_D\n")
        for im, s, b, f in zip(proposals.image_id, proposals.source, proposals.boxes, proposals.features):
            fh.write(" ".join([im, str(int(s)), *map(_fmt, b), *map(_fmt, f)]) + "\n")


def load_proposals(path, ground_truth: Sequence[GroundTruth] = ()) -> ProposalSet:
    ims, src, boxes, feats = [], [], [], []
    for lineno, rec, f in _records(path):
        try:
            ims.append(f[0])
            src.append(int(f[1]))
            boxes.append([float(v) for v in f[2:6]])
            feats.append([float(v) for v in f[6:]])
        except (ValueError, IndexError) as exc:
            raise DatasetFormatError(path, lineno, rec, f"cannot parse proposal ({exc})") from exc
        if len(feats[-1]) != len(feats[0]) or len(boxes[-1]) != 4:
            raise DatasetFormatError(path, lineno, rec, "inconsistent field count")
    dim = len(feats[0]) if feats else 0
    return ProposalSet(ims, np.array(boxes, dtype=float).reshape(-1, 4), np.array(feats, dtype=float).reshape(-1, dim), np.array(src, dtype=int), list(ground_truth))


@dataclass
class Dataset:
    train: SampleSet
    proposals: ProposalSet | None = None

    FILES = {"train": "train_samples.txt", "proposals": "test_proposals.txt", "ground_truth": "test_ground_truth.txt"}


def save_dataset(directory, dataset: Dataset) -> dict[str, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"train": d / Dataset.FILES["train"]}
    save_samples(paths["train"], dataset.train)
    if dataset.proposals is not None:
        paths["proposals"] = d / Dataset.FILES["proposals"]
        paths["ground_truth"] = d / Dataset.FILES["ground_truth"]
        save_proposals(paths["proposals"], dataset.proposals)
        save_ground_truth(paths["ground_truth"], dataset.proposals.ground_truth)
    return paths


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    train = load_samples(d / Dataset.FILES["train"])
    proposals = None
    if (d / Dataset.FILES["proposals"]).exists():
        gts = load_ground_truth(d / Dataset.FILES["ground_truth"])
        proposals = load_proposals(d / Dataset.FILES["proposals"], gts)
    return Dataset(train, proposals)
