"""Angle arithmetic on the azimuth circle.

Covers the positive circle ``{(cos t, sin t, 0)}`` living in 3D output space,
the nearest-point projection onto it, recovery of an angle from a pair of
output coordinates, and the centered azimuth binning used by the discrete
head and by viewpoint-aware metrics.

Bins are 1-based and centered on multiples of ``2*pi/P``; bin 1 is centered
at azimuth 0.
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi

# Below this squared radius the projection direction is undefined.
DEGENERATE_RADIUS_SQ = 1e-30
# Squared radii this close to 1 are already on the circle; skipping the
# division keeps the projection exactly idempotent.
UNIT_RADIUS_SQ_TOL = 8 * np.finfo(float).eps


class InvalidBinCount(ValueError):
    pass


def canon(theta):
    """Wrap angle(s) into ``[0, 2*pi)``."""
    wrapped = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def embed(theta, dim: int = 3) -> np.ndarray:
    """Map azimuth(s) to ``(cos, sin, 0, ...)`` of length ``dim`` (>= 2)."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape + (dim,))
    out[..., 0] = np.cos(theta)
    out[..., 1] = np.sin(theta)
    return out


def project_to_circle(y) -> np.ndarray:
    """Nearest point of the positive circle to a 3-vector (or rows of them).

    Degenerate inputs on the vertical axis project to ``(1, 0, 0)``.
    """
    y = np.asarray(y, dtype=float)
    r2 = y[..., 0] ** 2 + y[..., 1] ** 2
    degenerate = r2 < DEGENERATE_RADIUS_SQ
    unit = np.abs(r2 - 1.0) <= UNIT_RADIUS_SQ_TOL
    r = np.sqrt(np.where(degenerate | unit, 1.0, r2))
    out = np.zeros(y.shape)
    out[..., 0] = np.where(degenerate, 1.0, y[..., 0] / r)
    out[..., 1] = np.where(degenerate, 0.0, y[..., 1] / r)
    return out


def distance_to_circle(y):
    """Euclidean distance from ``y`` to its projection on the circle."""
    y = np.asarray(y, dtype=float)
    d = np.linalg.norm(y - project_to_circle(y), axis=-1)
    if d.ndim == 0:
        return float(d)
    return d


def angle_from_feature(y, pair: tuple[int, int] = (0, 1)):
    """Azimuth encoded by a (cosine, sine) coordinate pair, in ``[0, 2*pi)``.

    ``pair`` holds 0-based indices of the cosine and sine coordinates.  A pair
    that is exactly zero maps to 0, matching the degenerate projection.
    """
    y = np.asarray(y, dtype=float)
    c = y[..., pair[0]]
    s = y[..., pair[1]]
    return canon(np.arctan2(s, c))


def angular_distance(a, b):
    """Shortest arc between two azimuths, in ``[0, pi]``."""
    diff = np.abs(canon(a) - canon(b))
    d = np.minimum(diff, TWO_PI - diff)
    if np.ndim(d) == 0:
        return float(d)
    return d


def _check_bins(P: int) -> None:
    if int(P) != P or P < 2:
        raise InvalidBinCount(f"bin count must be an integer >= 2, got {P!r}")


def discretize(theta, P: int):
    """1-based bin index of azimuth(s) among ``P`` centered bins.

    Bin ``j`` covers ``[(j-1)*w - w/2, (j-1)*w + w/2)`` modulo ``2*pi`` with
    ``w = 2*pi/P``.
    """
    _check_bins(P)
    width = TWO_PI / P
    idx = np.floor((canon(theta) + 0.5 * width) / width).astype(int) % P + 1
    if np.ndim(idx) == 0:
        return int(idx)
    return idx


def bin_center(index, P: int):
    """Azimuth at the center of 1-based bin ``index``."""
    _check_bins(P)
    index = np.asarray(index)
    if np.any(index < 1) or np.any(index > P):
        raise ValueError(f"bin index out of range [1, {P}]: {index!r}")
    center = (index - 1) * (TWO_PI / P)
    if np.ndim(center) == 0:
        return float(center)
    return center
