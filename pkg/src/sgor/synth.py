"""Synthetic labelled scene pairs, correspondence sets and label corruption.

Randomness
----------
Every random draw goes through :func:`make_rng`, which wraps numpy's
PCG64 bit generator (128-bit LCG state, XSL-RR output, 64-bit words).
A stream is keyed by the 64-bit user seed plus a small integer purpose
tag, combined with ``numpy.random.SeedSequence``. Same seed and tag give
the same stream on every platform numpy supports.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .core import CorrespondenceSet, RigidTransform, SemanticPointCloud, apply_transform
from .errors import TooFewPoints

# label ids follow the SemanticKITTI map so the default ground label set applies
ROAD, SIDEWALK, CAR, BUILDING, TRUNK, POLE = 40, 48, 10, 50, 71, 80
GROUND_LABELS = frozenset({ROAD, SIDEWALK})
LABEL_UNIVERSE = frozenset({ROAD, SIDEWALK, CAR, BUILDING, TRUNK, POLE})

# purpose tags for independent random streams
_SCENE, _POSE, _NOISE, _MATCH, _CORRUPT = 1, 2, 3, 4, 5


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ObjectCluster:
    shape: str  # "box", "cylinder" or "pole"
    label: int
    count: int
    size_range: tuple[float, float]  # footprint/radius range, meters
    height_range: tuple[float, float] = (2.0, 6.0)


@dataclass(frozen=True)
class SceneSpec:
    """Scene recipe. ``layout="row"`` builds identical cubes along the x axis."""

    ground_extent: float = 60.0
    ground_tilt: float = 0.0
    object_clusters: tuple[ObjectCluster, ...] = ()
    point_density: float = 3.0
    noise_sigma: float = 0.02
    rng_seed: int = 0
    layout: str = "random"
    road_width: float = 12.0
    row_count: int = 6
    row_size: float = 4.0
    row_spacing: float = 8.0

    def __post_init__(self):
        if self.ground_extent <= 0 or self.point_density <= 0 or self.noise_sigma < 0:
            raise ValueError("extent and density must be positive, noise non-negative")
        if self.layout not in ("random", "row"):
            raise ValueError("layout must be 'random' or 'row'")
        clusters = tuple(c if isinstance(c, ObjectCluster) else ObjectCluster(**c)
                         for c in self.object_clusters)
        for c in clusters:
            if c.count <= 0 or c.shape not in ("box", "cylinder", "pole"):
                raise ValueError(f"bad object cluster {c}")
        object.__setattr__(self, "object_clusters", clusters)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> SceneSpec:
        d = dict(data)
        d["object_clusters"] = tuple(
            ObjectCluster(**{**c, "size_range": tuple(c["size_range"]),
                             "height_range": tuple(c.get("height_range", (2.0, 6.0)))})
            for c in d.get("object_clusters", ()))
        return cls(**d)


def urban_scene(seed: int = 0, **overrides) -> SceneSpec:
    """Street scene of roughly 20k points."""
    clusters = (
        ObjectCluster("box", BUILDING, 6, (6.0, 12.0), (6.0, 20.0)),
        ObjectCluster("box", CAR, 6, (1.8, 4.2), (1.4, 1.7)),
        ObjectCluster("pole", POLE, 8, (0.12, 0.2), (5.0, 8.0)),
        ObjectCluster("cylinder", TRUNK, 6, (0.3, 0.5), (2.5, 4.0)),
    )
    return dataclasses.replace(SceneSpec(object_clusters=clusters, rng_seed=seed), **overrides)


def weak_geometry_scene(seed: int = 0, **overrides) -> SceneSpec:
    """Flat ground plus a row of identical cubes: one semantic object class."""
    return dataclasses.replace(SceneSpec(layout="row", rng_seed=seed), **overrides)


@dataclass(frozen=True, eq=False)
class ScenePair:
    source: SemanticPointCloud
    target: SemanticPointCloud
    gt: RigidTransform
    gt_overlap_labels: frozenset[int]
    counterpart: NDArray[np.int64]  # target index of each source point's true match, -1 if none
    ground_labels: frozenset[int] = GROUND_LABELS
    symmetry: RigidTransform | None = None  # scene self-map that tilts the ground, if any
    ground_normal: NDArray[np.float64] | None = None  # true source ground normal
    spec: SceneSpec | None = field(default=None, repr=False)


def _sample_rect(rng, n, u_len, v_len):
    return rng.uniform(-0.5, 0.5, size=(n, 2)) * np.array([u_len, v_len])


def _n_points(rng, area, density):
    lam = area * density
    return int(rng.poisson(lam)) if lam > 0 else 0


def _box_points(rng, center_xy, w, d, h, yaw, density):
    faces = []
    # four walls and the roof; the floor is hidden by the ground
    for sign in (-1, 1):
        uv = _sample_rect(rng, _n_points(rng, w * h, density), w, h)
        faces.append(np.column_stack([uv[:, 0], np.full(len(uv), sign * d / 2), uv[:, 1] + h / 2]))
        uv = _sample_rect(rng, _n_points(rng, d * h, density), d, h)
        faces.append(np.column_stack([np.full(len(uv), sign * w / 2), uv[:, 0], uv[:, 1] + h / 2]))
    uv = _sample_rect(rng, _n_points(rng, w * d, density), w, d)
    faces.append(np.column_stack([uv[:, 0], uv[:, 1], np.full(len(uv), h)]))
    pts = np.vstack(faces)
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    return pts @ rot.T + np.array([center_xy[0], center_xy[1], 0.0])


def _cylinder_points(rng, center_xy, r, h, density):
    n_side = max(_n_points(rng, 2 * np.pi * r * h, density), 8)
    ang = rng.uniform(0, 2 * np.pi, n_side)
    z = rng.uniform(0, h, n_side)
    side = np.column_stack([r * np.cos(ang), r * np.sin(ang), z])
    n_top = _n_points(rng, np.pi * r * r, density)
    rr = r * np.sqrt(rng.uniform(0, 1, n_top))
    aa = rng.uniform(0, 2 * np.pi, n_top)
    top = np.column_stack([rr * np.cos(aa), rr * np.sin(aa), np.full(n_top, h)])
    return np.vstack([side, top]) + np.array([center_xy[0], center_xy[1], 0.0])


def _rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _cube_template(rng, size, density):
    """Cube surface (no floor) whose +y side, roof and -y side are exact 90° images about x."""
    h = size / 2
    uv = _sample_rect(rng, _n_points(rng, size * size, density), size, size)
    side = np.column_stack([uv[:, 0], np.full(len(uv), h), uv[:, 1]])  # +y face, centered
    faces = [side, side @ _rot_x(np.pi / 2).T, side @ _rot_x(np.pi).T]
    for sign in (-1, 1):
        uv = _sample_rect(rng, _n_points(rng, size * size, density), size, size)
        faces.append(np.column_stack([np.full(len(uv), sign * h), uv[:, 0], uv[:, 1]]))
    return np.vstack(faces) + np.array([0.0, 0.0, h])


def _build_world(spec: SceneSpec):
    rng = make_rng(spec.rng_seed, _SCENE)
    e = spec.ground_extent
    n_ground = _n_points(rng, e * e, spec.point_density)
    gxy = rng.uniform(-e / 2, e / 2, size=(n_ground, 2))
    ground = np.column_stack([gxy, np.zeros(n_ground)])
    ground_lab = np.where(np.abs(gxy[:, 1]) < spec.road_width / 2, ROAD, SIDEWALK)
    parts, labels = [ground], [ground_lab]
    symmetry = None
    if spec.layout == "row":
        tmpl = _cube_template(rng, spec.row_size, spec.point_density)
        y0 = spec.road_width / 2 + spec.row_size
        x0 = -(spec.row_count - 1) * spec.row_spacing / 2
        for i in range(spec.row_count):
            parts.append(tmpl + np.array([x0 + i * spec.row_spacing, y0, 0.0]))
            labels.append(np.full(len(tmpl), BUILDING))
        axis_point = np.array([0.0, y0, spec.row_size / 2])
        rot = _rot_x(np.pi / 2)
        symmetry = RigidTransform(rot, axis_point - rot @ axis_point)
    for cl in spec.object_clusters:
        for _ in range(cl.count):
            side = rng.choice([-1.0, 1.0])
            x = rng.uniform(-e / 2 + 2, e / 2 - 2)
            size = rng.uniform(*cl.size_range)
            height = rng.uniform(*cl.height_range)
            if cl.shape == "box":
                depth = rng.uniform(*cl.size_range)
                y = side * rng.uniform(spec.road_width / 2 + depth / 2, e / 2 - depth / 2)
                if cl.label == CAR:
                    y = side * rng.uniform(1.5, spec.road_width / 2 - 1.0)
                pts = _box_points(rng, (x, y), size, depth, height, rng.uniform(0, np.pi), spec.point_density)
            else:
                y = side * rng.uniform(spec.road_width / 2 + 0.5, e / 2 - 1.0)
                pts = _cylinder_points(rng, (x, y), size, height, spec.point_density)
            parts.append(pts)
            labels.append(np.full(len(pts), cl.label))
    pts = np.vstack(parts)
    lab = np.concatenate(labels).astype(np.int64)
    normal = np.array([0.0, 0.0, 1.0])
    if spec.ground_tilt:
        axis_angle = rng.uniform(0, 2 * np.pi)
        axis = np.array([np.cos(axis_angle), np.sin(axis_angle), 0.0])
        tilt = _axis_angle(axis, np.radians(spec.ground_tilt))
        pts = pts @ tilt.T
        normal = tilt @ normal
        if symmetry is not None:
            symmetry = RigidTransform(tilt, np.zeros(3)).compose(symmetry).compose(
                RigidTransform(tilt.T, np.zeros(3)))
    return pts, lab, symmetry, normal


def _axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def random_transform(rng: np.random.Generator, max_deg: float, max_m: float) -> RigidTransform:
    """Rotation of up to ``max_deg`` about a random axis, translation of up to ``max_m``."""
    axis = rng.normal(size=3)
    angle = np.radians(rng.uniform(0.0, max_deg)) if max_deg > 0 else 0.0
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    length = rng.uniform(0.0, max_m) if max_m > 0 else 0.0
    return RigidTransform(_axis_angle(axis, angle), direction * length)


def generate_scene_pair(spec: SceneSpec, transform_magnitude=(180.0, 10.0)) -> ScenePair:
    """Source scene, its rigidly moved and noise-perturbed copy, and the true pose."""
    pts, lab, symmetry, normal = _build_world(spec)
    gt = random_transform(make_rng(spec.rng_seed, _POSE), *transform_magnitude)
    tgt_pts = apply_transform(pts, gt)
    if spec.noise_sigma > 0:
        tgt_pts = tgt_pts + make_rng(spec.rng_seed, _NOISE).normal(0.0, spec.noise_sigma, tgt_pts.shape)
    src = SemanticPointCloud(pts, lab, LABEL_UNIVERSE)
    tgt = SemanticPointCloud(tgt_pts, lab.copy(), LABEL_UNIVERSE)
    overlap = frozenset(np.unique(lab).tolist())
    return ScenePair(src, tgt, gt, overlap, np.arange(len(src), dtype=np.int64),
                     GROUND_LABELS, symmetry, normal, spec)


def make_correspondences(pair: ScenePair, total: int, inlier_ratio: float, seed: int,
                         same_label_fraction: float = 0.5, symmetric_ratio: float = 0.0):
    """Correspondences on non-ground points with a known inlier mask.

    Outliers pair random non-ground points; ``same_label_fraction`` of them
    share the source label. ``symmetric_ratio`` of the set (row scenes only)
    pairs p with the true match of its image under the scene's tilting
    self-map, so they agree on one wrong transform.
    Returns ``(correspondences, inlier_mask)``.
    """
    if not 0.0 <= inlier_ratio <= 1.0 or not 0.0 <= symmetric_ratio <= 1.0 - inlier_ratio:
        raise ValueError("ratios must lie in [0, 1] and sum to at most 1")
    rng = make_rng(seed, _MATCH)
    src, tgt = pair.source, pair.target
    ground = np.isin(src.labels, list(pair.ground_labels))
    usable = np.flatnonzero(~ground & (pair.counterpart >= 0))
    n_in = int(round(total * inlier_ratio))
    n_sym = int(round(total * symmetric_ratio))
    n_out = total - n_in - n_sym
    if usable.size < n_in + n_sym or usable.size == 0 or total < 1:
        raise TooFewPoints(f"{usable.size} usable non-ground points for {total} correspondences")
    chosen = rng.choice(usable, size=n_in, replace=False)
    src_idx = [chosen]
    tgt_idx = [pair.counterpart[chosen]]
    if n_sym:
        if pair.symmetry is None:
            raise ValueError("scene has no symmetry to draw structured outliers from")
        img = apply_transform(src.points[usable], pair.symmetry)
        # exact images exist for the rotated cube faces
        dist, nn = cKDTree(src.points).query(img)
        ok = usable[(dist < 1e-6) & ~ground[nn] & (nn != usable)]
        ok = np.setdiff1d(ok, chosen)
        if ok.size < n_sym:
            raise TooFewPoints(f"only {ok.size} points have a symmetric image")
        sym_src = rng.choice(ok, size=n_sym, replace=False)
        _, sym_img = cKDTree(src.points).query(apply_transform(src.points[sym_src], pair.symmetry))
        src_idx.append(sym_src)
        tgt_idx.append(pair.counterpart[sym_img])
    if n_out:
        o_src = rng.choice(usable, size=n_out, replace=usable.size < n_out)
        same = rng.uniform(size=n_out) < same_label_fraction
        tgt_non_ground = np.flatnonzero(~np.isin(tgt.labels, list(pair.ground_labels)))
        o_tgt = np.empty(n_out, dtype=np.int64)
        by_label = {lab: tgt_non_ground[tgt.labels[tgt_non_ground] == lab]
                    for lab in np.unique(tgt.labels[tgt_non_ground])}
        for n, (s, want_same) in enumerate(zip(o_src, same)):
            lab = src.labels[s]
            pool = by_label.get(lab) if want_same else None
            if pool is None or pool.size == 0:
                others = [v for k, v in by_label.items() if k != lab and v.size]
                pool = np.concatenate(others) if others and not want_same else tgt_non_ground
            pick = pool[rng.integers(pool.size)]
            if pick == pair.counterpart[s] and pool.size > 1:
                pick = pool[(np.searchsorted(pool, pick) + 1) % pool.size]
            o_tgt[n] = pick
        src_idx.append(o_src)
        tgt_idx.append(o_tgt)
    si = np.concatenate(src_idx).astype(np.int64)
    ti = np.concatenate(tgt_idx).astype(np.int64)
    kind = np.concatenate([np.full(n_in, 1), np.full(n_sym, 2), np.full(n_out, 0)])
    order = rng.permutation(si.size)
    g = CorrespondenceSet.from_indices(si[order], ti[order], src, tgt)
    return g, kind[order] == 1


def corrupt_labels(cloud: SemanticPointCloud, fraction: float, seed: int) -> SemanticPointCloud:
    """Replace the labels of exactly ``round(fraction * n)`` points with a different random label."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    rng = make_rng(seed, _CORRUPT)
    n = len(cloud)
    m = int(round(fraction * n))
    universe = np.array(sorted(cloud.label_universe), dtype=np.int64)
    if m == 0 or universe.size < 2:
        return cloud.with_labels(cloud.labels.copy())
    pick = rng.choice(n, size=m, replace=False)
    labels = cloud.labels.copy()
    old = labels[pick]
    pos = np.searchsorted(universe, old)
    # draw among the other |S|-1 labels by skipping the original slot
    shift = rng.integers(0, universe.size - 1, size=m)
    shift = shift + (shift >= pos)
    labels[pick] = universe[shift]
    return cloud.with_labels(labels)


def corrupt_ground_labels(cloud: SemanticPointCloud, fraction: float, ground_labels,
                          seed: int) -> SemanticPointCloud:
    """Flip ``round(fraction * n)`` points across the ground / non-ground boundary."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    rng = make_rng(seed, _CORRUPT)
    g = np.array(sorted(ground_labels), dtype=np.int64)
    ng = np.array(sorted(cloud.label_universe - frozenset(g.tolist())), dtype=np.int64)
    n = len(cloud)
    m = int(round(fraction * n))
    labels = cloud.labels.copy()
    if m == 0:
        return cloud.with_labels(labels)
    pick = rng.choice(n, size=m, replace=False)
    is_ground = np.isin(labels[pick], g)
    labels[pick[is_ground]] = ng[rng.integers(0, ng.size, size=int(is_ground.sum()))]
    labels[pick[~is_ground]] = g[rng.integers(0, g.size, size=int((~is_ground).sum()))]
    return cloud.with_labels(labels)
