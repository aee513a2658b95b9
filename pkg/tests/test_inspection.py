import math

import numpy as np
import pytest

from rtabench.inspection import (NUM_POINTS, PointSphere, _kmeans,
                                 generate_sphere, nearest_uninspected_cluster,
                                 point_visible, update_inspection)


def test_sphere_count_and_norms():
    sphere = generate_sphere()
    assert sphere.points.shape == (99, 3)
    norms = np.linalg.norm(sphere.points, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-12
    assert not sphere.inspected.any()


def test_sphere_centroid_near_origin():
    sphere = generate_sphere()
    assert np.abs(sphere.points.mean(axis=0)).max() < 0.05


def test_sphere_minimum_angular_separation():
    points = generate_sphere().points
    cosines = points @ points.T
    np.fill_diagonal(cosines, -1.0)
    min_angle = math.degrees(math.acos(cosines.max()))
    assert min_angle > 10.0


def test_sphere_seed_determinism():
    a = generate_sphere(seed=5)
    b = generate_sphere(seed=5)
    assert np.array_equal(a.points, b.points)
    c = generate_sphere(seed=6)
    assert not np.array_equal(a.points, c.points)
    # seeding only rotates longitudes; geometry quality is unchanged
    assert np.abs(np.linalg.norm(c.points, axis=1) - 1.0).max() < 1e-12


def test_point_visible_aligned_case():
    assert point_visible([1.0, 0, 0], [100.0, 0, 0], 0.0)


def test_point_not_illuminated():
    assert not point_visible([-1.0, 0, 0], [-100.0, 0, 0], 0.0)


def test_point_boundary_not_visible():
    # dot products of exactly zero fail the strict test
    assert not point_visible([0.0, 0, 1.0], [100.0, 0, 0], 0.0)


def test_point_visible_requires_nonzero_position():
    with pytest.raises(ValueError):
        point_visible([1.0, 0, 0], [0.0, 0, 0], 0.0)


def test_update_marks_open_hemisphere():
    sphere = generate_sphere()
    # deputy and sun co-aligned on +x: exactly the points with x > 0
    updated, newly = update_inspection(sphere, [100.0, 0, 0], 0.0)
    expected = int((sphere.points[:, 0] > 0.0).sum())
    assert newly == expected
    assert updated.n_inspected == expected
    assert np.array_equal(updated.inspected, sphere.points[:, 0] > 0.0)


def test_update_is_idempotent():
    sphere = generate_sphere()
    once, n1 = update_inspection(sphere, [100.0, 0, 0], 0.0)
    twice, n2 = update_inspection(once, [100.0, 0, 0], 0.0)
    assert n2 == 0
    assert np.array_equal(once.inspected, twice.inspected)


def test_update_with_everything_inspected():
    sphere = generate_sphere()
    done = PointSphere(points=sphere.points,
                       inspected=np.ones(NUM_POINTS, dtype=bool))
    updated, newly = update_inspection(done, [100.0, 0, 0], 0.0)
    assert newly == 0
    assert updated.n_inspected == NUM_POINTS


def test_update_count_monotone():
    sphere = generate_sphere()
    rng = np.random.default_rng(0)
    last = 0
    for _ in range(10):
        pos = rng.normal(size=3) * 100.0
        theta = rng.uniform(0.0, 2 * math.pi)
        sphere, _ = update_inspection(sphere, pos, theta)
        assert sphere.n_inspected >= last
        last = sphere.n_inspected


def test_singleton_cluster_points_at_the_point():
    sphere = generate_sphere()
    flags = np.ones(NUM_POINTS, dtype=bool)
    flags[42] = False
    marked = PointSphere(points=sphere.points, inspected=flags)
    summary = nearest_uninspected_cluster(marked, [100.0, 0, 0])
    assert summary.n_points == NUM_POINTS - 1
    assert np.abs(summary.r_ups - sphere.points[42]).max() < 1e-12


def test_all_inspected_fallback():
    sphere = generate_sphere()
    done = PointSphere(points=sphere.points,
                       inspected=np.ones(NUM_POINTS, dtype=bool))
    summary = nearest_uninspected_cluster(done, [100.0, 0, 0])
    assert summary.n_points == NUM_POINTS
    assert np.allclose(summary.r_ups, [1.0, 0.0, 0.0])


def test_k1_returns_normalized_mean():
    sphere = generate_sphere()
    flags = np.ones(NUM_POINTS, dtype=bool)
    keep = [3, 17, 40, 77]
    flags[keep] = False
    marked = PointSphere(points=sphere.points, inspected=flags)
    summary = nearest_uninspected_cluster(marked, [50.0, -20.0, 10.0], k=1)
    mean = sphere.points[keep].mean(axis=0)
    assert np.abs(summary.r_ups - mean / np.linalg.norm(mean)).max() < 1e-12


def test_r_ups_always_unit():
    sphere = generate_sphere()
    rng = np.random.default_rng(1)
    for _ in range(25):
        flags = rng.uniform(size=NUM_POINTS) < rng.uniform()
        marked = PointSphere(points=sphere.points, inspected=flags)
        summary = nearest_uninspected_cluster(marked, rng.normal(size=3) * 100)
        assert abs(np.linalg.norm(summary.r_ups) - 1.0) < 1e-12


def test_cluster_selection_prefers_deputy_direction():
    sphere = generate_sphere()
    flags = np.ones(NUM_POINTS, dtype=bool)
    # leave two antipodal-ish groups uninspected
    xs = sphere.points[:, 0]
    flags[np.argsort(xs)[:5]] = False   # most -x
    flags[np.argsort(xs)[-5:]] = False  # most +x
    marked = PointSphere(points=sphere.points, inspected=flags)
    toward_plus = nearest_uninspected_cluster(marked, [100.0, 0, 0], k=2)
    toward_minus = nearest_uninspected_cluster(marked, [-100.0, 0, 0], k=2)
    assert toward_plus.r_ups[0] > 0.5
    assert toward_minus.r_ups[0] < -0.5


def test_kmeans_determinism_and_objective_descent():
    rng = np.random.default_rng(2)
    points = rng.normal(size=(60, 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    c1, l1, hist1 = _kmeans(points, 3, seed=9)
    c2, l2, hist2 = _kmeans(points, 3, seed=9)
    assert np.array_equal(c1, c2)
    assert np.array_equal(l1, l2)
    assert hist1 == hist2
    assert all(b <= a + 1e-12 for a, b in zip(hist1, hist1[1:]))


def test_nearest_cluster_rejects_bad_k():
    with pytest.raises(ValueError):
        nearest_uninspected_cluster(generate_sphere(), [100.0, 0, 0], k=0)
