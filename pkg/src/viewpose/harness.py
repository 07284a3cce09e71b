"""Training protocol, prediction and evaluation for every representation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from . import geometry as geo
from .data import (
    CONTINUOUS_PLAN,
    BatchPlan,
    BatchSampler,
    ProposalSet,
    SampleSet,
    WorldSpec,
    generate_proposal_scenario,
    generate_samples,
    split_validation,
)
from .losses import (
    LossHyper,
    Variant,
    circle_loss,
    discrete_index,
    discrete_nll,
    joint_target,
    joint_terms,
    pose_dim,
    softmax,
)
from .metrics import DEFAULT_VIEWS, ClassResult, Detection, evaluate_detections, mean_over_classes
from .nnet import DivergedError, Network, OptimizerState, backward, build_network, forward, sgd_step


class ConfigError(ValueError):
    pass


class Representation(str, Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"
    JOINT_A = "joint-a"
    JOINT_B1 = "joint-b1"
    JOINT_B2 = "joint-b2"

    @property
    def variant(self) -> Variant | None:
        return {"joint-a": Variant.A, "joint-b1": Variant.B1, "joint-b2": Variant.B2}.get(self.value)

    @property
    def is_joint(self) -> bool:
        return self.variant is not None


@dataclass(frozen=True)
class ExperimentConfig:
    representation: Representation = Representation.DISCRETE
    N: int = 3
    P: int = 8
    hyper: LossHyper = field(default_factory=LossHyper)
    plan: BatchPlan = field(default_factory=BatchPlan)
    initial_lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_halving_patience: int = 10
    eval_every: int = 500
    validation_size: int = 6400
    max_iterations: int = 20000
    lr_floor: float = 1e-7
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    world: WorldSpec = field(default_factory=WorldSpec)
    train_draws: int = 40000
    train_positive_fraction: float = 0.25
    flip: bool = True
    test_images: int = 400
    test_partials: int = 2
    iou_threshold: float = 0.5
    viewpoint_criterion: str = "bin"
    # internal: a detection-only classifier (softmax over N+1) used for fixed-classifier runs
    classifier_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "representation", Representation(self.representation))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.world.n_classes != self.N:
            object.__setattr__(self, "world", replace(self.world, n_classes=self.N))
        rep = self.representation
        if rep is Representation.DISCRETE and not self.classifier_only and self.P < 2:
            raise ConfigError(f"discrete representation needs P >= 2 bins, got P={self.P}")
        if rep is Representation.CONTINUOUS and self.N != 1:
            raise ConfigError(
                f"continuous representation handles a single class only (N must be 1, got N={self.N})"
            )
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        for name in ("initial_lr", "lr_floor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.eval_every < 1 or self.lr_halving_patience < 1 or self.max_iterations < 0:
            raise ConfigError("eval_every and lr_halving_patience must be >= 1, max_iterations >= 0")
        if self.viewpoint_criterion not in ("bin", "angle"):
            raise ConfigError(f"unknown viewpoint criterion {self.viewpoint_criterion!r}")

    @classmethod
    def preset(cls, representation, **overrides) -> "ExperimentConfig":
        """Defaults for a representation, matching the published protocol."""
        rep = Representation(representation)
        base: dict = {"representation": rep}
        if rep is Representation.CONTINUOUS:
            base.update(N=1, plan=CONTINUOUS_PLAN, initial_lr=5e-5)
        base.update(overrides)
        return cls(**base)

    @property
    def uses_fixed_classifier(self) -> bool:
        return self.representation.is_joint and self.hyper.lam == 0

    def classifier_config(self) -> "ExperimentConfig":
        return replace(self, representation=Representation.DISCRETE, P=1, classifier_only=True)


# ---------------------------------------------------------------------------
# heads


def output_dim(config: ExperimentConfig) -> int:
    rep, N = config.representation, config.N
    if rep is Representation.DISCRETE:
        return N * config.P + 1
    if rep is Representation.CONTINUOUS:
        return 3
    return N + 1 + pose_dim(N, rep.variant)


def batch_objective(config: ExperimentConfig, out: np.ndarray, batch: SampleSet):
    """Batch error and its gradient with respect to the raw outputs ``(B, out)``.

    Discrete: mean NLL.  Continuous: mean positive loss + K * mean negative
    loss.  Joint: lam * mean class NLL over all samples + pose error summed
    over positives and divided by their count.
    """
    rep, hyper = config.representation, config.hyper
    B = len(batch)
    pos = batch.class_id > 0
    n_pos, n_neg = int(pos.sum()), int(B - pos.sum())
    theta = np.where(pos, batch.azimuth, 0.0)
    if rep is Representation.DISCRETE:
        if config.classifier_only:
            idx = batch.class_id
        else:
            idx = discrete_index(batch.class_id, geo.discretize(theta, config.P), config.P)
        loss, grad = discrete_nll(out, idx)
        return float(loss.mean()), grad / B
    if rep is Representation.CONTINUOUS:
        loss, grad = circle_loss(out, geo.embed(theta), pos, hyper.delta)
        w = np.where(pos, 1.0 / max(n_pos, 1), hyper.K / max(n_neg, 1))
        return float(np.sum(w * loss)), grad * w[:, None]
    N = config.N
    t = joint_target(batch.class_id, theta, N, rep.variant)
    e_class, g_class, e_pose, g_pose = joint_terms(out[:, : N + 1], out[:, N + 1 :], t, hyper)
    denom = max(n_pos, 1)
    loss = hyper.lam * e_class.mean() + e_pose.sum() / denom
    grad = np.concatenate([hyper.lam * g_class / B, g_pose / denom], axis=1)
    return float(loss), grad


@dataclass
class Prediction:
    scores: np.ndarray  # (n, N): detection score per object class 1..N
    azimuth: np.ndarray  # (n, N): predicted azimuth if the patch belongs to that class


def decode_outputs(config: ExperimentConfig, out: np.ndarray) -> Prediction:
    """Turn raw network outputs into per-class scores and azimuths."""
    out = np.atleast_2d(np.asarray(out, dtype=float))
    if out.shape[1] != output_dim(config):
        raise ConfigError(
            f"{config.representation.value} head expects {output_dim(config)} outputs, got {out.shape[1]}"
        )
    rep, N, P = config.representation, config.N, config.P
    n = len(out)
    if rep is Representation.DISCRETE:
        probs = softmax(out)
        if config.classifier_only:
            return Prediction(probs[:, 1:], np.zeros((n, N)))
        per_class = probs[:, 1:].reshape(n, N, P)
        best_bin = per_class.argmax(axis=2) + 1
        return Prediction(per_class.sum(axis=2), geo.bin_center(best_bin, P))
    if rep is Representation.CONTINUOUS:
        return Prediction(-geo.distance_to_circle(out)[:, None], geo.angle_from_feature(out)[:, None])
    scores = softmax(out[:, : N + 1])[:, 1:]
    pose = out[:, N + 1 :]
    if rep.variant is Variant.A:
        az = np.repeat(geo.angle_from_feature(pose)[:, None], N, axis=1)
    else:
        az = np.stack([geo.angle_from_feature(pose, (2 * i, 2 * i + 1)) for i in range(N)], axis=1)
    return Prediction(scores, az)


@dataclass
class Model:
    """A trained head, plus the frozen detector for fixed-classifier runs."""

    config: ExperimentConfig
    net: Network
    classifier: Network | None = None

    def predict(self, features) -> Prediction:
        return predict(self, features)


def predict(model: Model, features) -> Prediction:
    pred = decode_outputs(model.config, forward(model.net, np.atleast_2d(features), keep=False))
    if model.classifier is not None:
        ref = decode_outputs(model.config.classifier_config(), forward(model.classifier, np.atleast_2d(features), keep=False))
        pred = Prediction(ref.scores, pred.azimuth)
    return pred


# ---------------------------------------------------------------------------
# learning-rate schedule


class PlateauHalving:
    """Halve the rate after ``patience`` evaluations without a new best.

    Improvement means strictly below the best validation loss seen so far.
    The counter restarts after each halving; the best value is kept.
    """

    def __init__(self, lr: float, patience: int = 10):
        self.lr = lr
        self.patience = patience
        self.best = math.inf
        self.stale = 0

    def update(self, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.stale = 0
            return False
        self.stale += 1
        if self.stale >= self.patience:
            self.lr /= 2.0
            self.stale = 0
            return True
        return False


# ---------------------------------------------------------------------------
# training


@dataclass
class TraceRecord:
    iteration: int
    train_loss: float
    val_loss: float
    lr: float  # rate in force after this evaluation


@dataclass
class TrainingTrace:
    records: list[TraceRecord] = field(default_factory=list)
    halvings: list[int] = field(default_factory=list)  # iterations at which the rate halved
    stop_reason: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "train_loss", "val_loss", "lr"])
            for r in self.records:
                w.writerow([r.iteration, format(r.train_loss, ".17g"), format(r.val_loss, ".17g"), format(r.lr, ".17g")])


@dataclass
class TrainingData:
    train: SampleSet
    validation: SampleSet


def make_training_data(config: ExperimentConfig, pool: SampleSet | None = None) -> TrainingData:
    """Generate (or take) a sample pool and hold out a validation split."""
    if pool is None:
        pool = generate_samples(config.world, config.train_draws, config.train_positive_fraction, seed=config.seed, flip=config.flip)
    rng = np.random.default_rng([config.seed, 11])
    train, val = split_validation(pool, config.validation_size, config.plan, rng)
    return TrainingData(train, val)


ValLossHook = Callable[[int, Network], float]
StepHook = Callable[[int, np.ndarray], None]


def train(
    config: ExperimentConfig,
    data: TrainingData | None = None,
    val_loss_hook: ValLossHook | None = None,
    step_hook: StepHook | None = None,
    classifier: Network | None = None,
) -> tuple[Model, TrainingTrace]:
    """Balanced-batch momentum SGD with plateau halving of the learning rate.

    Fixed-classifier joint runs (lam = 0) first train a detection-only
    classifier with the same budget and seed, then train the pose head.
    ``val_loss_hook(eval_index, net)`` replaces the validation loss (for
    exercising the schedule); ``step_hook(iteration, output_grad)`` observes
    every batch gradient.  A ``classifier`` trained earlier with the same
    data and seed may be passed in to skip retraining it.
    """
    data = data if data is not None else make_training_data(config)
    if not config.uses_fixed_classifier:
        classifier = None
    elif classifier is None:
        ref_model, _ = train(config.classifier_config(), data, val_loss_hook=val_loss_hook)
        classifier = ref_model.net

    rng = np.random.default_rng([config.seed, 7])
    net = build_network(config.world.dim, config.hidden, output_dim(config), rng)
    model = Model(config, net, classifier)
    trace = TrainingTrace()
    if config.max_iterations == 0:
        trace.stop_reason = "max_iterations"
        return model, trace

    sampler = BatchSampler(data.train, config.plan, rng)
    state = OptimizerState(config.initial_lr, config.momentum, config.weight_decay)
    sched = PlateauHalving(config.initial_lr, config.lr_halving_patience)
    running, seen = 0.0, 0
    trace.stop_reason = "max_iterations"
    for it in range(1, config.max_iterations + 1):
        batch = sampler.sample()
        out = forward(net, batch.features)
        loss, g = batch_objective(config, out, batch)
        if not math.isfinite(loss):
            raise DivergedError(f"training loss became {loss} at iteration {it}", trace=trace)
        if step_hook is not None:
            step_hook(it, g)
        grads = backward(net, batch.features, g)
        try:
            sgd_step(net, state, grads)
        except DivergedError as exc:
            exc.trace = trace
            raise
        running += loss
        seen += 1
        if it % config.eval_every == 0:
            if val_loss_hook is not None:
                val = float(val_loss_hook(len(trace.records), net))
            else:
                val = validation_loss(config, net, data.validation)
            if sched.update(val):
                trace.halvings.append(it)
            state.learning_rate = sched.lr
            trace.records.append(TraceRecord(it, running / seen, val, sched.lr))
            running, seen = 0.0, 0
            if sched.lr < config.lr_floor:
                trace.stop_reason = "lr_floor"
                break
    return model, trace


def validation_loss(config: ExperimentConfig, net: Network, validation: SampleSet) -> float:
    out = forward(net, validation.features, keep=False)
    return batch_objective(config, out, validation)[0]


# ---------------------------------------------------------------------------
# evaluation


def proposals_to_detections(proposals: ProposalSet, pred: Prediction) -> list[Detection]:
    """One detection per (proposal, class) pair."""
    dets = []
    n_classes = pred.scores.shape[1]
    for k in range(len(proposals)):
        box = tuple(float(v) for v in proposals.boxes[k])
        for c in range(n_classes):
            dets.append(Detection(proposals.image_id[k], c + 1, float(pred.scores[k, c]), box, float(pred.azimuth[k, c])))
    return dets


def evaluate(
    model: Model | Callable[[np.ndarray], Prediction],
    config: ExperimentConfig,
    proposals: ProposalSet | None = None,
    views: Sequence[int] = DEFAULT_VIEWS,
) -> dict[int, ClassResult]:
    """Score a held-out proposal scenario and compute AP and AVP per class.

    ``model`` may be any callable mapping features to a ``Prediction``.
    """
    if proposals is None:
        proposals = test_scenario(config)
    predictor = model.predict if isinstance(model, Model) else model
    pred = predictor(proposals.features)
    dets = proposals_to_detections(proposals, pred)
    return evaluate_detections(
        dets,
        proposals.ground_truth,
        classes=range(1, config.N + 1),
        iou_threshold=config.iou_threshold,
        views=views,
        criterion=config.viewpoint_criterion,
    )


def test_scenario(config: ExperimentConfig) -> ProposalSet:
    return generate_proposal_scenario(
        config.world, config.test_images, seed=config.seed + 1000, partial_per_object=config.test_partials
    )


def summarize(results: Mapping[int, ClassResult]) -> dict[str, float]:
    keys = next(iter(results.values())).metrics.keys()
    return {k: mean_over_classes({c: r.metrics[k] for c, r in results.items()}) for k in keys}


# ---------------------------------------------------------------------------
# sweeps

HYPER_AXES = {"K": "K", "delta": "delta", "lambda": "lam"}
CONFIG_AXES = (
    "P",
    "initial_lr",
    "momentum",
    "weight_decay",
    "lr_halving_patience",
    "eval_every",
    "validation_size",
    "max_iterations",
    "lr_floor",
    "seed",
    "train_draws",
    "test_images",
    "iou_threshold",
)


def sweep_axes() -> list[str]:
    return [*HYPER_AXES, *CONFIG_AXES]


def with_axis(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis not in sweep_axes():
        raise ConfigError(f"unknown sweep axis {axis!r}; valid axes: {', '.join(sweep_axes())}")
    if axis in HYPER_AXES:
        return replace(config, hyper=replace(config.hyper, **{HYPER_AXES[axis]: float(value)}))
    current = getattr(config, axis)
    return replace(config, **{axis: type(current)(value)})


@dataclass
class SweepReport:
    axis: str
    values: list[float]
    metrics: dict[str, list[float]]  # metric name -> value per sweep point

    def rows(self) -> list[list[str]]:
        rows = [["metric", *(f"{self.axis}={v:g}" for v in self.values)]]
        for name, vals in self.metrics.items():
            rows.append([name, *(format(v, ".6f") for v in vals)])
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows())

    def write_svg(self, path) -> None:
        from .svgplot import line_plot

        series = {name: (list(map(float, self.values)), vals) for name, vals in self.metrics.items()}
        line_plot(path, series, title=f"metrics vs {self.axis}", xlabel=self.axis, ylabel="score", ylim=(0, 1), markers=True)


def sweep(axis: str, values: Sequence[float], base: ExperimentConfig, data: TrainingData | None = None) -> SweepReport:
    """Train and evaluate once per value, all points sharing seeds and data."""
    configs = [with_axis(base, axis, v) for v in values]
    metrics: dict[str, list[float]] = {}
    cache = {} if data is None else {_data_key(base): data}
    for cfg in configs:
        key = _data_key(cfg)
        if key not in cache:
            cache[key] = make_training_data(cfg)
        model, _ = train(cfg, cache[key])
        for k, v in summarize(evaluate(model, cfg)).items():
            metrics.setdefault(k, []).append(v)
    return SweepReport(axis, [float(v) for v in values], metrics)


def _data_key(config: ExperimentConfig) -> tuple:
    return (config.world, config.train_draws, config.train_positive_fraction, config.seed, config.flip, config.validation_size, config.plan)
