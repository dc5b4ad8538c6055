"""Label-seeded ground plane estimation with a distance-based second pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import SemanticPointCloud, Vec3, as_points
from .errors import DegenerateConfiguration, NoGroundPoints

# KITTI semantic ids for road, parking, sidewalk, other-ground, terrain
KITTI_GROUND_LABELS = frozenset({40, 44, 48, 49, 72})

SEED_TRIM_ROUNDS = 3
SEED_TRIM_KEEP = 0.5


@dataclass(frozen=True)
class PlaneModel:
    coefficients: NDArray[np.float64]  # (a, b, c, d), (a, b, c) unit norm
    centroid: Vec3
    residual_bound: float  # max |a x + b y + c z + d| over the fitted points

    @property
    def normal(self) -> Vec3:
        return self.coefficients[:3]

    @property
    def offset(self) -> float:
        return float(self.coefficients[3])

    def distance(self, points) -> NDArray[np.float64]:
        """Unsigned point-plane distance."""
        pts = as_points(points)
        return np.abs(pts @ self.normal + self.offset)


@dataclass(frozen=True)
class GroundSplit:
    ground: SemanticPointCloud
    non_ground: SemanticPointCloud
    ground_index: NDArray[np.int64]
    non_ground_index: NDArray[np.int64]
    plane: PlaneModel
    ground_label_set: frozenset[int]


def fit_plane(points) -> PlaneModel:
    """Least-variance plane through the centroid of ``points``.

    The normal sign is chosen so its largest-magnitude component is positive.
    """
    pts = as_points(points) if len(points) else np.zeros((0, 3))
    if pts.shape[0] < 3:
        raise DegenerateConfiguration("plane fit needs at least 3 points")
    mu = pts.mean(axis=0)
    centered = pts - mu
    scatter = centered.T @ centered
    evals, evecs = np.linalg.eigh(scatter)
    if evals[2] <= 0 or evals[1] <= 1e-12 * evals[2]:
        raise DegenerateConfiguration("points are collinear or coincident")
    normal = evecs[:, 0]
    normal = normal / np.linalg.norm(normal)
    if normal[np.argmax(np.abs(normal))] < 0:
        normal = -normal
    d = -float(normal @ mu)
    coeffs = np.append(normal, d)
    bound = float(np.max(np.abs(pts @ normal + d)))
    return PlaneModel(coeffs, mu, bound)


def trimmed_plane(points, rounds: int = SEED_TRIM_ROUNDS, keep: float = SEED_TRIM_KEEP) -> PlaneModel:
    """Plane refitted ``rounds`` times on the ``keep`` fraction of points closest to the previous fit."""
    pts = as_points(points) if len(points) else np.zeros((0, 3))
    plane = fit_plane(pts)
    if pts.shape[0] < 6:
        return plane
    for _ in range(rounds):
        d = plane.distance(pts)
        sub = pts[d <= np.quantile(d, keep)]
        if sub.shape[0] < 3:
            break
        plane = fit_plane(sub)
    return plane


def label_ground_split(cloud: SemanticPointCloud, ground_labels) -> GroundSplit:
    """Ground chosen by labels alone, with a single plane fit on them."""
    ground_labels = frozenset(int(v) for v in ground_labels)
    mask = np.isin(cloud.labels, list(ground_labels))
    if np.count_nonzero(mask) < 3:
        raise NoGroundPoints("fewer than 3 points carry a ground label")
    try:
        plane = fit_plane(cloud.points[mask])
    except DegenerateConfiguration as exc:
        raise NoGroundPoints(str(exc)) from exc
    return _split(cloud, mask, plane, ground_labels)


def secondary_ground_segmentation(cloud: SemanticPointCloud, ground_labels,
                                  sigma_g: float = 0.2) -> GroundSplit:
    """Label-seeded plane fit, distance re-test and refit.

    Only points that carry a ground label can end up as ground; the
    distance test removes mislabeled points that lie off the plane. The
    seed plane is a trimmed fit so that tall mislabeled objects cannot lift
    it off the ground. Points that fail the test against the refitted plane
    are trimmed until every ground point passes against the final plane.
    """
    if sigma_g <= 0:
        raise ValueError("sigma_g must be positive")
    ground_labels = frozenset(int(v) for v in ground_labels)
    labelled = np.flatnonzero(np.isin(cloud.labels, list(ground_labels)))
    if labelled.size < 3:
        raise NoGroundPoints("fewer than 3 points carry a ground label")
    pts = cloud.points
    try:
        plane = trimmed_plane(pts[labelled])
        keep = labelled[plane.distance(pts[labelled]) < sigma_g]
        while True:
            if keep.size < 3:
                raise NoGroundPoints("distance test left fewer than 3 ground points")
            plane = fit_plane(pts[keep])
            passing = plane.distance(pts[keep]) < sigma_g
            if passing.all():
                break
            keep = keep[passing]
    except DegenerateConfiguration as exc:
        raise NoGroundPoints(str(exc)) from exc
    mask = np.zeros(len(cloud), dtype=bool)
    mask[keep] = True
    return _split(cloud, mask, plane, ground_labels)


def _split(cloud, mask, plane, ground_labels) -> GroundSplit:
    gi = np.flatnonzero(mask)
    ni = np.flatnonzero(~mask)
    return GroundSplit(cloud.subset(gi), cloud.subset(ni), gi, ni, plane, ground_labels)
