"""Geometric types, rigid-transform algebra, weighted rigid solve and neighbor queries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, TypeAlias

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .errors import DegenerateConfiguration, EmptyCloud, LengthMismatch

Points: TypeAlias = NDArray[np.float64]  # (N, 3)
Mat3: TypeAlias = NDArray[np.float64]
Vec3: TypeAlias = NDArray[np.float64]

ORTHO_TOL = 1e-9
DEGENERACY_RATIO = 1e-12


def as_points(x) -> Points:
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim == 1 and pts.size == 3:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class SemanticPointCloud:
    """Points in R^3, each carrying a non-negative integer label."""

    points: Points
    labels: NDArray[np.int64]
    label_universe: frozenset[int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        pts = as_points(self.points) if len(self.points) else np.zeros((0, 3))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if pts.shape[0] != labels.shape[0]:
            raise LengthMismatch(f"{pts.shape[0]} points but {labels.shape[0]} labels")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        universe = self.label_universe
        if universe is None:
            universe = frozenset(int(v) for v in np.unique(labels))
        else:
            universe = frozenset(int(v) for v in universe)
            stray = set(np.unique(labels).tolist()) - universe
            if stray:
                raise ValueError(f"labels {sorted(stray)} outside the label universe")
        pts.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_universe", universe)

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, index) -> SemanticPointCloud:
        return SemanticPointCloud(self.points[index], self.labels[index], self.label_universe)

    def with_labels(self, labels) -> SemanticPointCloud:
        return SemanticPointCloud(self.points, labels, self.label_universe)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation in SO(3) plus translation; maps p to ``rotation @ p + translation``."""

    rotation: Mat3
    translation: Vec3

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), rtol=0.0, atol=ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> RigidTransform:
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: RigidTransform) -> RigidTransform:
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def apply(self, points) -> Points:
        return apply_transform(points, self)


class Correspondence(NamedTuple):
    src_index: int
    tgt_index: int
    src_label: int
    tgt_label: int
    feature_distance: float = float("nan")


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Indexed source/target pairs stored column-wise.

    Indices always refer to the full input clouds; labels are copied from
    those clouds at construction.
    """

    src_index: NDArray[np.int64]
    tgt_index: NDArray[np.int64]
    src_label: NDArray[np.int64]
    tgt_label: NDArray[np.int64]
    feature_distance: NDArray[np.float64]

    @classmethod
    def from_indices(cls, src_index, tgt_index, src: SemanticPointCloud,
                     tgt: SemanticPointCloud, feature_distance=None) -> CorrespondenceSet:
        si = np.asarray(src_index, dtype=np.int64).reshape(-1)
        ti = np.asarray(tgt_index, dtype=np.int64).reshape(-1)
        if si.shape != ti.shape:
            raise LengthMismatch("source and target index arrays differ in length")
        if si.size and (si.min() < 0 or si.max() >= len(src) or ti.min() < 0 or ti.max() >= len(tgt)):
            raise IndexError("correspondence index out of range")
        if feature_distance is None:
            fd = np.full(si.shape, np.nan)
        else:
            fd = np.asarray(feature_distance, dtype=np.float64).reshape(-1)
        return cls(si, ti, src.labels[si].copy(), tgt.labels[ti].copy(), fd)

    def __len__(self) -> int:
        return self.src_index.shape[0]

    def __getitem__(self, i: int) -> Correspondence:
        return Correspondence(int(self.src_index[i]), int(self.tgt_index[i]),
                              int(self.src_label[i]), int(self.tgt_label[i]),
                              float(self.feature_distance[i]))

    def take(self, positions) -> CorrespondenceSet:
        pos = np.asarray(positions, dtype=np.int64)
        return CorrespondenceSet(self.src_index[pos], self.tgt_index[pos], self.src_label[pos],
                                 self.tgt_label[pos], self.feature_distance[pos])

    def relabel(self, src: SemanticPointCloud, tgt: SemanticPointCloud) -> CorrespondenceSet:
        return CorrespondenceSet(self.src_index, self.tgt_index, src.labels[self.src_index].copy(),
                                 tgt.labels[self.tgt_index].copy(), self.feature_distance)

    def points(self, src: SemanticPointCloud, tgt: SemanticPointCloud) -> tuple[Points, Points]:
        return src.points[self.src_index], tgt.points[self.tgt_index]


def apply_transform(points, t: RigidTransform) -> Points:
    """Rotate then translate every point. Accepts arrays or a SemanticPointCloud."""
    if isinstance(points, SemanticPointCloud):
        points = points.points
    pts = as_points(points)
    return pts @ t.rotation.T + t.translation


def weighted_rigid_solve(src, tgt, weights=None) -> RigidTransform:
    """Global minimizer of sum_i w_i ‖R src_i + t - tgt_i‖² over SE(3).

    Reflections are corrected by flipping the smallest singular direction.
    Raises DegenerateConfiguration when the weighted cross-covariance has
    rank < 2 (collinear or coincident points).
    """
    p = as_points(src)
    q = as_points(tgt)
    w = np.ones(p.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if not (p.shape == q.shape and w.shape[0] == p.shape[0]):
        raise LengthMismatch(f"src {p.shape}, tgt {q.shape}, weights {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if np.count_nonzero(w) < 3 or total <= 0:
        raise DegenerateConfiguration("need at least 3 pairs with positive weight")
    w = w / total
    mu_p = w @ p
    mu_q = w @ q
    h = (p - mu_p).T @ ((q - mu_q) * w[:, None])
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0 or s[1] < DEGENERACY_RATIO * s[0]:
        raise DegenerateConfiguration("weighted points are collinear or coincident")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, mu_q - r @ mu_p)


class NeighborIndex:
    """Exact radius and kNN queries over one cloud's points (kd-tree backed)."""

    def __init__(self, points):
        if isinstance(points, SemanticPointCloud):
            points = points.points
        pts = as_points(points) if len(points) else np.zeros((0, 3))
        if pts.shape[0] == 0:
            raise EmptyCloud("cannot index an empty cloud")
        self._points = pts.copy()
        self._points.setflags(write=False)
        self._tree = cKDTree(self._points)

    def __len__(self) -> int:
        return self._points.shape[0]

    @property
    def points(self) -> Points:
        return self._points

    def _sq_dist(self, idx: NDArray[np.int64], center: Vec3) -> NDArray[np.float64]:
        d = self._points[idx] - center
        return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]

    def radius_query(self, center, r: float) -> NDArray[np.int64]:
        """Indices within distance ``r`` (inclusive), ascending."""
        if r <= 0:
            raise ValueError("radius must be positive")
        c = np.asarray(center, dtype=np.float64).reshape(3)
        # pad the tree radius, then decide membership with an exact test
        cand = np.asarray(self._tree.query_ball_point(c, r * (1 + 1e-9) + 1e-12), dtype=np.int64)
        cand = cand[self._sq_dist(cand, c) <= r * r]
        cand.sort()
        return cand

    def radius_query_many(self, centers, r: float) -> list[NDArray[np.int64]]:
        if r <= 0:
            raise ValueError("radius must be positive")
        centers = as_points(centers)
        cands = self._tree.query_ball_point(centers, r * (1 + 1e-9) + 1e-12)
        out = []
        for c, cand in zip(centers, cands):
            cand = np.asarray(cand, dtype=np.int64)
            cand = cand[self._sq_dist(cand, c) <= r * r]
            cand.sort()
            out.append(cand)
        return out

    def knn_query(self, center, k: int) -> NDArray[np.int64]:
        """The k nearest indices, by ascending distance then ascending index."""
        n = len(self)
        if not 1 <= k <= n:
            raise ValueError(f"k must be in [1, {n}]")
        c = np.asarray(center, dtype=np.float64).reshape(3)
        if k == n:
            cand = np.arange(n)
        else:
            dist, _ = self._tree.query(c, k=k)
            kth = float(np.atleast_1d(dist)[-1])
            # every point tied with the k-th must be considered for the index tie-break
            cand = np.asarray(self._tree.query_ball_point(c, kth * (1 + 1e-9) + 1e-12), dtype=np.int64)
        d2 = self._sq_dist(cand, c)
        order = np.lexsort((cand, d2))
        return cand[order[:k]]
