"""Registration and correspondence quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CorrespondenceSet, RigidTransform, SemanticPointCloud

# (rotation degrees, translation centimeters)
THRESHOLDS = {
    "easy": (5.0, 60.0),
    "medium": (5.0, 30.0),
    "hard": (2.0, 10.0),
}
INDOOR_THRESHOLD = (15.0, 30.0)


@dataclass(frozen=True)
class MetricReport:
    re_deg: float
    te_cm: float
    success: dict[str, bool]
    ip: float | None = None
    ir: float | None = None
    f1: float | None = None

    def to_dict(self) -> dict[str, object]:
        return {"re_deg": self.re_deg, "te_cm": self.te_cm, "success": dict(self.success),
                "ip": self.ip, "ir": self.ir, "f1": self.f1}


def rotation_error(r_est, r_gt) -> float:
    """Geodesic angle between two rotations, in degrees.

    Same angle as arccos((tr(R_gtᵀ R_est) - 1) / 2), evaluated with atan2 of
    the skew and trace parts so that tiny errors are not lost to rounding
    near arccos(1).
    """
    m = np.asarray(r_gt, dtype=np.float64).T @ np.asarray(r_est, dtype=np.float64)
    c = (np.trace(m) - 1.0) / 2.0
    v = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    s = np.linalg.norm(v) / 2.0
    return float(np.degrees(np.arctan2(s, np.clip(c, -1.0, 1.0))))


def translation_error(t_est, t_gt) -> float:
    """Euclidean translation error in centimeters."""
    return float(np.linalg.norm(np.asarray(t_est, float) - np.asarray(t_gt, float)) * 100.0)


def registration_success(re_deg: float, te_cm: float, re_thresh_deg: float,
                         te_thresh_cm: float) -> bool:
    if re_thresh_deg <= 0 or te_thresh_cm <= 0:
        raise ValueError("thresholds must be positive")
    return re_deg < re_thresh_deg and te_cm < te_thresh_cm


def registration_recall(outcomes) -> float:
    outcomes = list(outcomes)
    if not outcomes:
        return 0.0
    return sum(bool(o) for o in outcomes) / len(outcomes)


def true_inlier_mask(g: CorrespondenceSet, gt: RigidTransform, src: SemanticPointCloud,
                     tgt: SemanticPointCloud, inlier_radius: float) -> np.ndarray:
    p, q = g.points(src, tgt)
    r = p @ gt.rotation.T + gt.translation - q
    return np.sqrt(np.einsum("ij,ij->i", r, r)) <= inlier_radius


def correspondence_metrics(retained: CorrespondenceSet, all_pairs: CorrespondenceSet,
                           gt: RigidTransform, src: SemanticPointCloud, tgt: SemanticPointCloud,
                           inlier_radius: float) -> tuple[float, float, float]:
    """Inlier precision, inlier recall and F1 of ``retained`` against ``all_pairs``."""
    if inlier_radius <= 0:
        raise ValueError("inlier_radius must be positive")
    kept_true = int(true_inlier_mask(retained, gt, src, tgt, inlier_radius).sum()) if len(retained) else 0
    total_true = int(true_inlier_mask(all_pairs, gt, src, tgt, inlier_radius).sum()) if len(all_pairs) else 0
    ip = kept_true / len(retained) if len(retained) else 0.0
    ir = kept_true / total_true if total_true else 0.0
    f1 = 0.0 if ip + ir == 0 else 2.0 * ip * ir / (ip + ir)
    return ip, ir, f1


def evaluate(est: RigidTransform, gt: RigidTransform, thresholds=None) -> MetricReport:
    thresholds = THRESHOLDS if thresholds is None else thresholds
    re = rotation_error(est.rotation, gt.rotation)
    te = translation_error(est.translation, gt.translation)
    success = {name: registration_success(re, te, *th) for name, th in thresholds.items()}
    return MetricReport(re, te, success)
