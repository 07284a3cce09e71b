import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from viewpose.geometry import (
    TWO_PI,
    InvalidBinCount,
    angle_from_feature,
    angular_distance,
    bin_center,
    canon,
    discretize,
    distance_to_circle,
    embed,
    project_to_circle,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
angles = st.floats(-20.0, 20.0, allow_nan=False)


def dense_circle_distance(y, n=1_000_000):
    t = np.linspace(0, TWO_PI, n, endpoint=False)
    pts = np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)
    d = np.linalg.norm(pts - y, axis=1)
    k = int(np.argmin(d))
    return d[k], pts[k]


# ---- canon -------------------------------------------------------------


@given(angles)
def test_canon_range_and_idempotence(t):
    c = canon(t)
    assert 0.0 <= c < TWO_PI
    assert canon(c) == c


def test_canon_tiny_negative_wraps_below_two_pi():
    assert canon(-1e-20) < TWO_PI


# ---- projection --------------------------------------------------------


def test_project_radial_example():
    np.testing.assert_array_equal(project_to_circle([2.0, 0.0, 0.0]), [1.0, 0.0, 0.0])


@given(angles)
def test_project_fixed_point(t):
    p = np.array([math.cos(t), math.sin(t), 0.0])
    np.testing.assert_allclose(project_to_circle(p), p, atol=1e-15)


def test_project_example_against_dense_sampling():
    y = np.array([0.0, 3.0, 4.0])
    d_oracle, p_oracle = dense_circle_distance(y)
    np.testing.assert_allclose(project_to_circle(y), [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(project_to_circle(y), p_oracle, atol=1e-5)
    assert distance_to_circle(y) == pytest.approx(math.sqrt(20), abs=1e-12)
    assert distance_to_circle(y) == pytest.approx(d_oracle, abs=1e-9)
    assert math.sqrt(20) == pytest.approx(4.47214, abs=5e-6)


def test_degenerate_projection_is_deterministic():
    for y in ([0.0, 0.0, 5.0], [0.0, 0.0, 0.0], [1e-16, -1e-16, 2.0]):
        np.testing.assert_array_equal(project_to_circle(y), [1.0, 0.0, 0.0])
    # the distance to (1,0,0) equals the true infimum sqrt(1 + z^2)
    assert distance_to_circle([0.0, 0.0, 2.0]) == pytest.approx(math.sqrt(5), abs=1e-15)


@given(vec3)
def test_projection_idempotent_and_on_circle(y):
    p = project_to_circle(y)
    np.testing.assert_array_equal(project_to_circle(p), p)
    assert p[0] ** 2 + p[1] ** 2 == pytest.approx(1.0, abs=1e-12)
    assert p[2] == 0.0


def test_projection_optimal_against_random_circle_points():
    rng = np.random.default_rng(0)
    ys = rng.normal(0, 2, size=(10_000, 3))
    t = rng.uniform(0, TWO_PI, size=1000)
    circle = np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)
    own = np.linalg.norm(ys - project_to_circle(ys), axis=1)
    # distance from each y to every sampled circle point, in chunks
    for lo in range(0, len(ys), 1000):
        block = ys[lo : lo + 1000]
        d = np.linalg.norm(block[:, None, :] - circle[None, :, :], axis=2)
        assert np.all(own[lo : lo + 1000] <= d.min(axis=1) + 1e-12)


def test_projection_batch_matches_rows():
    rng = np.random.default_rng(1)
    ys = rng.normal(size=(7, 3))
    np.testing.assert_array_equal(project_to_circle(ys), np.array([project_to_circle(y) for y in ys]))


# ---- angle recovery ------------------------------------------------------


def test_angle_examples():
    assert angle_from_feature([1.0, 0.0, 0.0]) == 0.0
    assert angle_from_feature([0.0, 1.0, -5.0]) == pytest.approx(math.pi / 2, abs=1e-15)
    t = angle_from_feature([-0.7, -0.7])
    assert t == pytest.approx(5 * math.pi / 4, abs=1e-9)
    np.testing.assert_allclose([math.cos(t), math.sin(t)], np.array([-0.7, -0.7]) / math.hypot(0.7, 0.7), atol=1e-12)


def test_angle_round_trip_on_grid():
    t = np.linspace(0, TWO_PI, 10_000, endpoint=False)
    rec = angle_from_feature(embed(t))
    assert np.max(angular_distance(rec, t)) < 1e-12


def test_angle_from_selected_pair():
    y = np.array([9.0, 9.0, 0.0, 1.0])
    assert angle_from_feature(y, (2, 3)) == pytest.approx(math.pi / 2)


# ---- angular distance ----------------------------------------------------


def test_angular_distance_examples():
    assert angular_distance(0.0, 0.0) == 0.0
    assert angular_distance(0.1, TWO_PI - 0.1) == pytest.approx(0.2, abs=1e-12)
    assert angular_distance(math.pi / 3, 4 * math.pi / 3) == pytest.approx(math.pi, abs=1e-12)


def _wrap_oracle(a, b):
    # enumerate the direct arc and both wrap branches
    return min(abs(a - b + k * TWO_PI) for k in (-2, -1, 0, 1, 2))


@given(st.floats(0, TWO_PI, exclude_max=True), st.floats(0, TWO_PI, exclude_max=True))
def test_angular_distance_matches_branch_enumeration(a, b):
    assert angular_distance(a, b) == pytest.approx(_wrap_oracle(a, b), abs=1e-12)


@given(angles, angles, angles)
def test_angular_distance_metric_properties(a, b, c):
    d = angular_distance(a, b)
    assert 0.0 <= d <= math.pi
    assert d == angular_distance(b, a)
    assert angular_distance(a, c) <= d + angular_distance(b, c) + 1e-12
    assert (d == 0.0) == (canon(a) == canon(b))


# ---- bins ---------------------------------------------------------------


def test_discretize_examples():
    assert discretize(0.0, 4) == 1
    assert discretize(math.pi, 4) == 3
    assert discretize(math.pi / 4 - 1e-9, 4) == 1
    assert discretize(math.pi / 4 + 1e-9, 4) == 2
    assert discretize(TWO_PI - 1e-9, 4) == 1


def test_bin_center_examples():
    assert bin_center(1, 4) == 0.0
    assert bin_center(3, 4) == pytest.approx(math.pi)
    assert bin_center(13, 24) == pytest.approx(math.pi, abs=1e-12)


@pytest.mark.parametrize("P", [4, 8, 16, 24])
def test_bin_round_trip(P):
    idx = np.arange(1, P + 1)
    np.testing.assert_array_equal(discretize(bin_center(idx, P), P), idx)


@given(angles, st.integers(2, 64))
def test_bin_center_within_half_width(t, P):
    assert angular_distance(bin_center(discretize(t, P), P), t) <= math.pi / P + 1e-12


@given(angles, st.integers(2, 64))
def test_discretize_matches_interval_rule(t, P):
    # independent oracle: the bin whose center is nearest, ties to the upper bin
    w = TWO_PI / P
    c = canon(t)
    j = next(j for j in range(1, P + 2) if c < (j - 1) * w + w / 2)
    assert discretize(t, P) == (j - 1) % P + 1


@pytest.mark.parametrize("P", [1, 0, -3, 2.5])
def test_invalid_bin_count(P):
    with pytest.raises(InvalidBinCount):
        discretize(0.3, P)
    with pytest.raises(InvalidBinCount):
        bin_center(1, P)


def test_bin_center_rejects_out_of_range_index():
    with pytest.raises(ValueError):
        bin_center(5, 4)
