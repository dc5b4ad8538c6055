"""Seeded synthetic trials shared by the ablation sweep and the acceptance suite.

A trial is fully determined by ``(condition, variant, seed)``: the scene,
pose, noise, correspondences and label corruption all draw from streams
derived from the one seed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import PipelineConfig
from .core import RigidTransform, SemanticPointCloud
from .errors import SGORError
from .ground import label_ground_split, secondary_ground_segmentation
from .pipeline import register, run_report
from .synth import (ScenePair, SceneSpec, corrupt_ground_labels, corrupt_labels,
                    generate_scene_pair, make_correspondences, urban_scene, weak_geometry_scene)

PRESETS = {"urban": urban_scene, "weak": weak_geometry_scene}

ROW_FIELDS = ("condition", "variant", "seed", "status", "error", "rr_easy", "rr_medium", "rr_hard",
              "re_deg", "te_cm", "ip", "ir", "f1", "correspondences", "candidates", "gate_bypassed")

_SRC_TAG, _TGT_TAG = 11, 12


def derive_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(tag)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrialCondition:
    name: str = "default"
    preset: str = "urban"
    correspondences: int = 250
    inlier_ratio: float = 0.1
    symmetric_ratio: float = 0.0
    same_label_fraction: float = 0.5
    label_corruption: float = 0.0
    ground_corruption: float = 0.0
    max_rotation_deg: float = 180.0
    max_translation_m: float = 10.0
    scene: dict = field(default_factory=dict)  # SceneSpec field overrides

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        unknown = set(self.scene) - {f.name for f in dataclasses.fields(SceneSpec)}
        if unknown:
            raise ValueError(f"unknown scene keys {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> TrialCondition:
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown condition keys {sorted(unknown)}")
        return cls(**data)

    def scene_spec(self, seed: int) -> SceneSpec:
        return PRESETS[self.preset](seed, **self.scene)


@dataclass(frozen=True, eq=False)
class Trial:
    pair: ScenePair
    source: SemanticPointCloud  # after label corruption
    target: SemanticPointCloud
    correspondences: object
    inlier_mask: np.ndarray


def build_trial(cond: TrialCondition, seed: int,
                ground_labels=None) -> Trial:
    pair = generate_scene_pair(cond.scene_spec(seed), (cond.max_rotation_deg, cond.max_translation_m))
    g, mask = make_correspondences(pair, cond.correspondences, cond.inlier_ratio, seed,
                                   cond.same_label_fraction, cond.symmetric_ratio)
    src, tgt = pair.source, pair.target
    ground_labels = pair.ground_labels if ground_labels is None else ground_labels
    if cond.ground_corruption:
        src = corrupt_ground_labels(src, cond.ground_corruption, ground_labels, derive_seed(seed, _SRC_TAG))
        tgt = corrupt_ground_labels(tgt, cond.ground_corruption, ground_labels, derive_seed(seed, _TGT_TAG))
    if cond.label_corruption:
        src = corrupt_labels(src, cond.label_corruption, derive_seed(seed, _SRC_TAG + 10))
        tgt = corrupt_labels(tgt, cond.label_corruption, derive_seed(seed, _TGT_TAG + 10))
    return Trial(pair, src, tgt, g, mask)


def run_trial(cond: TrialCondition, variant: str, seed: int,
              base: PipelineConfig | None = None) -> dict[str, object]:
    """One registration on a seeded scene; pipeline errors become a failed row."""
    config = (base or PipelineConfig()).with_variant(variant)
    row: dict[str, object] = {k: None for k in ROW_FIELDS}
    row.update(condition=cond.name, variant=variant, seed=int(seed))
    try:
        trial = build_trial(cond, seed, config.ground_labels)
        result = register(trial.source, trial.target, config, correspondences=trial.correspondences)
    except SGORError as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                   rr_easy=0, rr_medium=0, rr_hard=0)
        return row
    rep = run_report(result, trial.source, trial.target, trial.pair.gt, variant, include_timing=False)
    m = rep["metrics"]
    row.update(status="ok", error="", rr_easy=int(m["success"]["easy"]),
               rr_medium=int(m["success"]["medium"]), rr_hard=int(m["success"]["hard"]),
               re_deg=m["re_deg"], te_cm=m["te_cm"], ip=m["ip"], ir=m["ir"], f1=m["f1"],
               correspondences=result.counts["correspondences"],
               candidates=result.counts["candidates"],
               gate_bypassed=int(result.verification.gate_bypassed))
    return row


def recall(rows, key: str = "rr_easy") -> float:
    rows = list(rows)
    return sum(int(r[key]) for r in rows) / len(rows) if rows else 0.0


def normal_error_deg(estimated, truth) -> float:
    """Angle between two plane normals, ignoring orientation."""
    c = abs(float(np.dot(estimated, truth)) / (np.linalg.norm(estimated) * np.linalg.norm(truth)))
    return float(np.degrees(np.arccos(min(1.0, c))))


def ground_normal_trial(cond: TrialCondition, seed: int, sigma_g: float = 0.2,
                        ground_labels=None) -> tuple[float, float]:
    """Normal error (degrees) of secondary and label-only segmentation on the corrupted source.

    A segmentation that finds no ground scores 90 degrees.
    """
    pair = generate_scene_pair(cond.scene_spec(seed), (cond.max_rotation_deg, cond.max_translation_m))
    ground_labels = pair.ground_labels if ground_labels is None else ground_labels
    cloud = corrupt_ground_labels(pair.source, cond.ground_corruption, ground_labels,
                                  derive_seed(seed, _SRC_TAG))
    out = []
    for split in (lambda: secondary_ground_segmentation(cloud, ground_labels, sigma_g),
                  lambda: label_ground_split(cloud, ground_labels)):
        try:
            out.append(normal_error_deg(split().plane.normal, pair.ground_normal))
        except SGORError:
            out.append(90.0)
    return out[0], out[1]


def gt_guided_correspondences(src: SemanticPointCloud, tgt: SemanticPointCloud, gt: RigidTransform,
                              total: int, inlier_ratio: float, seed: int, radius: float,
                              ground_labels) -> tuple[object, np.ndarray]:
    """Correspondences for arbitrary clouds with a known pose.

    Each source point's true match is its nearest target point under ``gt``
    when closer than ``radius``; inliers and outliers are then drawn as for
    synthetic scenes.
    """
    moved = src.points @ gt.rotation.T + gt.translation
    dist, nn = cKDTree(tgt.points).query(moved)
    counterpart = np.where(dist <= radius, nn, -1).astype(np.int64)
    pair = ScenePair(src, tgt, gt, frozenset(src.label_universe & tgt.label_universe), counterpart,
                     frozenset(int(v) for v in ground_labels))
    return make_correspondences(pair, total, inlier_ratio, seed)
