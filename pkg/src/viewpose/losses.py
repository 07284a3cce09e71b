"""Per-sample losses for the four output representations.

Every function works on a single sample or on a batch stacked along the
leading axis, and returns the loss together with its gradient with respect
to the raw network outputs (logits for softmax heads).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import project_to_circle

PROB_FLOOR = 1e-12


class Norm(str, Enum):
    L1 = "l1"
    L2 = "l2"
    SQL2 = "sql2"


class Variant(str, Enum):
    A = "a"
    B1 = "b1"
    B2 = "b2"


class LossConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossHyper:
    K: float = 640.0
    delta: float = 1.0
    lam: float = 10.0
    norm: Norm = Norm.L1

    def __post_init__(self):
        if not self.K > 0:
            raise LossConfigError(f"K must be positive, got {self.K}")
        if not self.delta > 0:
            raise LossConfigError(f"delta must be positive, got {self.delta}")
        if not self.lam >= 0:
            raise LossConfigError(f"lambda must be nonnegative, got {self.lam}")
        object.__setattr__(self, "norm", Norm(self.norm))


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def nll(probs, index):
    """``-log p[index]`` with probabilities floored at ``PROB_FLOOR``."""
    probs = np.asarray(probs, dtype=float)
    index = np.asarray(index)
    p = np.take_along_axis(probs, index[..., None], axis=-1)[..., 0]
    out = -np.log(np.maximum(p, PROB_FLOOR))
    return float(out) if out.ndim == 0 else out


def discrete_nll(logits, index):
    """Softmax negative log-likelihood of the hot class ``index``.

    Returns ``(loss, d loss / d logits)``; the gradient is ``softmax - onehot``.
    """
    logits = np.asarray(logits, dtype=float)
    index = np.asarray(index)
    probs = softmax(logits)
    loss = nll(probs, index)
    grad = probs.copy()
    np.put_along_axis(grad, index[..., None], np.take_along_axis(grad, index[..., None], axis=-1) - 1.0, axis=-1)
    return loss, grad


def discrete_index(class_id, bin_index, P: int):
    """Output coordinate of (class, bin); class 0 is background at index 0."""
    class_id = np.asarray(class_id)
    idx = np.where(class_id == 0, 0, 1 + (class_id - 1) * P + (np.asarray(bin_index) - 1))
    return int(idx) if idx.ndim == 0 else idx


def circle_loss(y, target, positive, delta: float = 1.0):
    """Attraction to ``target`` for positives, repulsion from the circle for negatives.

    Positive: ``||y - t||^2``.  Negative: ``exp(-dist(y, circle) / delta)``.
    The caller applies the ``K`` weight and per-set averaging.
    """
    y = np.asarray(y, dtype=float)
    target = np.asarray(target, dtype=float)
    positive = np.asarray(positive, dtype=bool)

    diff = y - target
    pos_loss = np.sum(diff**2, axis=-1)
    pos_grad = 2.0 * diff

    away = y - project_to_circle(y)
    dist = np.linalg.norm(away, axis=-1)
    safe = np.where(dist > 0.0, dist, 1.0)
    # d dist / d y = (y - pi(y)) / dist, since the projection moves orthogonally to y - pi(y)
    ddist = np.where((dist > 0.0)[..., None], away / safe[..., None], 0.0)
    neg_loss = np.exp(-dist / delta)
    neg_grad = -(neg_loss / delta)[..., None] * ddist

    loss = np.where(positive, pos_loss, neg_loss)
    grad = np.where(positive[..., None], pos_grad, neg_grad)
    return (float(loss) if loss.ndim == 0 else loss), grad


def norm_loss(d, norm: Norm, mask=None):
    """Value and gradient of ``||d||`` under ``norm`` on the last axis.

    ``mask`` (0/1, same shape as ``d``) restricts which coordinates count.
    Kinks get the zero subgradient.
    """
    d = np.asarray(d, dtype=float)
    if mask is not None:
        d = d * mask
    norm = Norm(norm)
    if norm is Norm.L1:
        return np.abs(d).sum(axis=-1), np.sign(d)
    if norm is Norm.SQL2:
        return np.sum(d**2, axis=-1), 2.0 * d
    n = np.sqrt(np.sum(d**2, axis=-1))
    safe = np.where(n > 0.0, n, 1.0)
    return n, np.where((n > 0.0)[..., None], d / safe[..., None], 0.0)


@dataclass
class JointTarget:
    """Targets for a joint head, batched along the leading axis if arrays are given."""

    class_index: np.ndarray
    t_class: np.ndarray
    t_pose: np.ndarray
    pose_mask: np.ndarray
    variant: Variant


def joint_target(class_index, theta, N: int, variant) -> JointTarget:
    """Build class one-hot, pose target and pose mask.

    Negatives (class 0) get a zero mask: their pose output is unconstrained.
    """
    variant = Variant(variant)
    class_index = np.asarray(class_index, dtype=int)
    theta = np.where(class_index > 0, np.asarray(theta, dtype=float), 0.0)
    if np.any(class_index < 0) or np.any(class_index > N):
        raise LossConfigError(f"class index outside [0, {N}]")
    t_class = np.zeros(class_index.shape + (N + 1,))
    np.put_along_axis(t_class, class_index[..., None], 1.0, axis=-1)

    pos = (class_index > 0)[..., None]
    cs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if variant is Variant.A:
        t_pose = np.where(pos, cs, 0.0)
        mask = np.broadcast_to(pos, t_pose.shape).astype(float)
    else:
        t_pose = np.zeros(class_index.shape + (2 * N,))
        pair = np.zeros(class_index.shape + (2 * N,), dtype=bool)
        for i in range(1, N + 1):
            sel = (class_index == i)[..., None]
            t_pose[..., 2 * i - 2 : 2 * i] = np.where(sel, cs, 0.0)
            pair[..., 2 * i - 2 : 2 * i] = sel
        if variant is Variant.B1:
            mask = np.broadcast_to(pos, t_pose.shape).astype(float)
        else:
            mask = pair.astype(float)
    return JointTarget(class_index, t_class, t_pose, mask, variant)


def pose_dim(N: int, variant) -> int:
    return 2 if Variant(variant) is Variant.A else 2 * N


def joint_terms(y_class, y_pose, t: JointTarget, hyper: LossHyper):
    """Unweighted class and pose terms: ``(e_class, g_class, e_pose, g_pose)``."""
    y_class = np.asarray(y_class, dtype=float)
    y_pose = np.asarray(y_pose, dtype=float)
    if y_pose.shape[-1] != t.t_pose.shape[-1]:
        raise LossConfigError(
            f"variant {t.variant.value} expects pose dimension {t.t_pose.shape[-1]}, got {y_pose.shape[-1]}"
        )
    if y_class.shape[-1] != t.t_class.shape[-1]:
        raise LossConfigError(f"class output has {y_class.shape[-1]} entries, expected {t.t_class.shape[-1]}")
    e_class, g_class = discrete_nll(y_class, t.class_index)
    e_pose, g_pose = norm_loss(y_pose - t.t_pose, hyper.norm, t.pose_mask)
    g_pose = g_pose * t.pose_mask
    return e_class, g_class, e_pose, g_pose


def joint_loss(y_class, y_pose, t: JointTarget, hyper: LossHyper):
    """``lam * class NLL + pose norm``; returns ``(loss, grad_class, grad_pose)``."""
    e_class, g_class, e_pose, g_pose = joint_terms(y_class, y_pose, t, hyper)
    loss = hyper.lam * e_class + e_pose
    loss = float(loss) if np.ndim(loss) == 0 else loss
    return loss, hyper.lam * g_class, g_pose
