"""Inspection-task geometry for the all-sensors observation.

The chief is modeled as 99 uniformly distributed surface points
(deterministic Fibonacci lattice). A point is inspected once it is
simultaneously illuminated by the Sun and on the hemisphere facing the
deputy (strict inequalities at the boundaries). The observation needs
the inspected count and a unit vector toward the nearest cluster of
uninspected points, found with seeded k-means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import sun_vector

NUM_POINTS = 99
DEFAULT_CLUSTERS = 3
KMEANS_MAX_ITER = 50
# fallback direction when every point is inspected
ALL_INSPECTED_DIRECTION = np.array([1.0, 0.0, 0.0])


@dataclass
class PointSphere:
    """99 unit vectors on the chief's surface with inspected flags."""

    points: np.ndarray
    inspected: np.ndarray

    @property
    def n_inspected(self) -> int:
        return int(self.inspected.sum())


@dataclass
class InspectionSummary:
    """Inspected-point count and direction of the nearest uninspected cluster."""

    n_points: int
    r_ups: np.ndarray


def generate_sphere(seed: int = 0) -> PointSphere:
    """Deterministic Fibonacci lattice of 99 unit vectors.

    A nonzero seed applies a deterministic longitude offset; the
    default lattice is canonical.
    """
    i = np.arange(NUM_POINTS)
    z = 1.0 - 2.0 * (i + 0.5) / NUM_POINTS
    golden = math.pi * (3.0 - math.sqrt(5.0))
    offset = float(np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi)) \
        if seed else 0.0
    phi = golden * i + offset
    rho = np.sqrt(1.0 - z * z)
    points = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return PointSphere(points=points, inspected=np.zeros(NUM_POINTS, dtype=bool))


def point_visible(point, deputy_position, sun_theta) -> bool:
    """True when the point is sunlit and faces the deputy (strictly)."""
    p = np.asarray(point, dtype=float)
    d = np.asarray(deputy_position, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise ValueError("deputy position must be nonzero")
    return bool(p @ sun_vector(sun_theta) > 0.0 and p @ (d / r) > 0.0)


def update_inspection(sphere: PointSphere, deputy_position, sun_theta):
    """Mark every currently visible uninspected point.

    Returns the updated sphere (a new value) and the newly inspected
    count; idempotent for fixed geometry.
    """
    d = np.asarray(deputy_position, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise ValueError("deputy position must be nonzero")
    visible = (sphere.points @ sun_vector(sun_theta) > 0.0) \
        & (sphere.points @ (d / r) > 0.0)
    newly = visible & ~sphere.inspected
    return (PointSphere(points=sphere.points,
                        inspected=sphere.inspected | visible),
            int(newly.sum()))


def _kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER):
    """Lloyd iterations with farthest-point seeding.

    Returns (centroids, labels, per-iteration objective history); the
    objective (sum of squared distances to assigned centroids) is
    nonincreasing across iterations.
    """
    n = points.shape[0]
    k = min(k, n)
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    chosen = [first]
    dist2 = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dist2))
        chosen.append(nxt)
        dist2 = np.minimum(dist2, np.sum((points - points[nxt]) ** 2, axis=1))
    centroids = points[chosen].copy()

    history = []
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), labels].sum()))
        new_centroids = centroids.copy()
        for j in range(k):
            members = points[labels == j]
            if members.shape[0]:
                new_centroids[j] = members.mean(axis=0)
            else:
                # reseed an empty cluster at the overall farthest point
                far = int(np.argmax(d2[np.arange(n), labels]))
                new_centroids[j] = points[far]
        if np.array_equal(new_centroids, centroids):
            break
        centroids = new_centroids
    return centroids, labels, history


def nearest_uninspected_cluster(sphere: PointSphere, deputy_position,
                                k: int = DEFAULT_CLUSTERS,
                                seed: int = 0) -> InspectionSummary:
    """Cluster the uninspected points and point at the nearest cluster.

    The returned direction is the normalized centroid with the largest
    dot product against the deputy direction; when everything is
    inspected a fixed fallback direction keeps the observation
    well-formed.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n_inspected = sphere.n_inspected
    remaining = sphere.points[~sphere.inspected]
    if remaining.shape[0] == 0:
        return InspectionSummary(n_points=n_inspected,
                                 r_ups=ALL_INSPECTED_DIRECTION.copy())
    d = np.asarray(deputy_position, dtype=float)
    r = np.linalg.norm(d)
    d_hat = d / r if r > 0.0 else ALL_INSPECTED_DIRECTION
    centroids, _, _ = _kmeans(remaining, k, seed)
    best = int(np.argmax(centroids @ d_hat))
    direction = centroids[best]
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        direction = ALL_INSPECTED_DIRECTION.copy()
        norm = 1.0
    return InspectionSummary(n_points=n_inspected, r_ups=direction / norm)
