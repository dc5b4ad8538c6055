"""Two-stage hypothesis verification and final refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from .core import CorrespondenceSet, RigidTransform, SemanticPointCloud, weighted_rigid_solve
from .errors import DegenerateConfiguration, NoCandidates


@dataclass(frozen=True)
class VerificationReport:
    best: RigidTransform
    best_index: int
    refined: RigidTransform | None
    candidate_scores: NDArray[np.float64]
    gate_passed: NDArray[np.bool_]
    gate_bypassed: bool
    refined_inlier_count: int = 0


def normal_angle(rotation, n_p, n_q) -> float:
    """Sign-invariant angle in degrees between ``rotation @ n_p`` and ``n_q``."""
    a = np.asarray(rotation, dtype=np.float64) @ np.asarray(n_p, dtype=np.float64)
    b = np.asarray(n_q, dtype=np.float64)
    c = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.degrees(np.arccos(min(1.0, c))))


def ground_normal_gate(candidate: RigidTransform, n_p, n_q, sigma_theta: float) -> bool:
    """True when the candidate maps the source ground normal onto the target one within ``sigma_theta``."""
    return normal_angle(candidate.rotation, n_p, n_q) <= sigma_theta


def truncated_distance(p, q, sigma_d: float):
    """Residual clamped to [0.5 sigma_d, 2.5 sigma_d]; vectorized over leading axes."""
    diff = np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    lo, hi = 0.5 * sigma_d, 2.5 * sigma_d
    out = np.where(dist <= lo, lo, np.where(dist < hi, dist, hi))
    return float(out) if out.ndim == 0 else out


def truncated_scores(candidates: list[RigidTransform], p, q, sigma_d: float) -> NDArray[np.float64]:
    rots = np.stack([c.rotation for c in candidates])
    trans = np.stack([c.translation for c in candidates])
    return _kernels.truncated_distance_sums(rots, trans, p, q, sigma_d)


def select_best(candidates: list[RigidTransform], p, q, sigma_d: float, n_p=None, n_q=None,
                sigma_theta: float = 5.0, use_gate: bool = True):
    """Gate candidates on the ground normals, then pick the lowest truncated-distance sum.

    ``p``/``q`` are the filtered correspondences' points. When normals are
    missing, the gate is disabled, or no candidate passes, every candidate
    stays in the running and ``gate_bypassed`` is set. Ties go to the lower
    candidate index.
    """
    if not candidates:
        raise NoCandidates("nothing to verify")
    n = len(candidates)
    if use_gate and n_p is not None and n_q is not None:
        passed = np.array([ground_normal_gate(c, n_p, n_q, sigma_theta) for c in candidates])
    else:
        passed = np.ones(n, dtype=bool)
    bypassed = not use_gate or n_p is None or n_q is None or not passed.any()
    alive = np.ones(n, dtype=bool) if bypassed else passed
    scores = truncated_scores(candidates, p, q, sigma_d)
    masked = np.where(alive, scores, np.inf)
    best = int(np.argmin(masked))
    report = VerificationReport(candidates[best], best, None, scores, passed, bypassed)
    return candidates[best], report


def refine(best: RigidTransform, g: CorrespondenceSet, src: SemanticPointCloud,
           tgt: SemanticPointCloud, tau_1: float) -> tuple[RigidTransform, int]:
    """Unit-weight re-solve on the global pairs whose squared residual is below ``tau_1``."""
    if tau_1 <= 0:
        raise ValueError("tau_1 must be positive")
    p, q = g.points(src, tgt)
    r = p @ best.rotation.T + best.translation - q
    keep = np.einsum("ij,ij->i", r, r) < tau_1
    count = int(np.count_nonzero(keep))
    if count < 3:
        return best, count
    try:
        return weighted_rigid_solve(p[keep], q[keep]), count
    except DegenerateConfiguration:
        return best, count
