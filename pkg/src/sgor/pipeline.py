"""End-to-end registration: ground → overlap → matching → grouping → consistency → verification."""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .config import PipelineConfig
from .consistency import FilteredGroup, estimate_local_transforms
from .core import CorrespondenceSet, NeighborIndex, RigidTransform, SemanticPointCloud
from .correspond import DescriptorSet, group_knn, match_descriptors, overlap_masks, spectral_sample
from .errors import NoGroundPoints
from .ground import GroundSplit, label_ground_split, secondary_ground_segmentation
from .metrics import THRESHOLDS, correspondence_metrics, evaluate
from .verify import VerificationReport, refine, select_best

log = logging.getLogger(__name__)

REPORT_SCHEMA = "sgor.run_report/1"


@dataclass
class RunResult:
    transform: RigidTransform
    verification: VerificationReport
    correspondences: CorrespondenceSet  # the preprocessed global set
    filtered: NDArray[np.int64]  # positions of the union of retained group members
    candidates: list[FilteredGroup]
    src_ground: GroundSplit | None
    tgt_ground: GroundSplit | None
    config: PipelineConfig
    counts: dict[str, int] = field(default_factory=dict)
    timings_ms: dict[str, float] = field(default_factory=dict)

    def final_inliers(self, src: SemanticPointCloud, tgt: SemanticPointCloud) -> NDArray[np.int64]:
        """Positions of global pairs within the refinement gate of the final transform."""
        p, q = self.correspondences.points(src, tgt)
        r = p @ self.transform.rotation.T + self.transform.translation - q
        return np.flatnonzero(np.einsum("ij,ij->i", r, r) < self.config.tau_1)


@contextmanager
def _timed(timings: dict[str, float], stage: str):
    t0 = time.perf_counter()
    yield
    timings[stage] = (time.perf_counter() - t0) * 1000.0


def segment_ground(cloud: SemanticPointCloud, config: PipelineConfig) -> GroundSplit | None:
    try:
        if config.secondary_segmentation:
            return secondary_ground_segmentation(cloud, config.ground_labels, config.sigma_g)
        return label_ground_split(cloud, config.ground_labels)
    except NoGroundPoints as exc:
        log.warning("ground segmentation skipped: %s", exc)
        return None


def register(src: SemanticPointCloud, tgt: SemanticPointCloud, config: PipelineConfig | None = None,
             correspondences: CorrespondenceSet | None = None,
             descriptors: tuple[DescriptorSet, DescriptorSet] | None = None) -> RunResult:
    """Register ``src`` onto ``tgt``.

    Supply either precomputed ``correspondences`` (indices into the full
    clouds; they are filtered by the preprocessing masks) or a pair of
    descriptor sets to match.
    """
    config = config or PipelineConfig()
    if (correspondences is None) == (descriptors is None):
        raise ValueError("pass exactly one of correspondences or descriptors")
    timings: dict[str, float] = {}
    counts: dict[str, int] = {"src_points": len(src), "tgt_points": len(tgt)}

    with _timed(timings, "ground"):
        sg = segment_ground(src, config)
        tg = segment_ground(tgt, config)
    counts["src_ground_points"] = 0 if sg is None else len(sg.ground)
    counts["tgt_ground_points"] = 0 if tg is None else len(tg.ground)

    with _timed(timings, "overlap"):
        if config.preprocess:
            s_ng = src.subset(sg.non_ground_index) if sg is not None else src
            t_ng = tgt.subset(tg.non_ground_index) if tg is not None else tgt
            s_mask_ng, t_mask_ng, _ = overlap_masks(s_ng, t_ng)
            src_keep = np.zeros(len(src), dtype=bool)
            tgt_keep = np.zeros(len(tgt), dtype=bool)
            src_keep[sg.non_ground_index if sg is not None else np.arange(len(src))] = s_mask_ng
            tgt_keep[tg.non_ground_index if tg is not None else np.arange(len(tgt))] = t_mask_ng
        else:
            src_keep = np.ones(len(src), dtype=bool)
            tgt_keep = np.ones(len(tgt), dtype=bool)
    counts["src_overlap_points"] = int(src_keep.sum())
    counts["tgt_overlap_points"] = int(tgt_keep.sum())

    with _timed(timings, "match"):
        if correspondences is not None:
            g = correspondences.relabel(src, tgt)
            ok = src_keep[g.src_index] & tgt_keep[g.tgt_index]
            g = g.take(np.flatnonzero(ok)[: config.cap])
        else:
            g = match_descriptors(descriptors[0], descriptors[1], src, tgt, config.cap,
                                  np.flatnonzero(src_keep), np.flatnonzero(tgt_keep))
    counts["correspondences"] = len(g)

    with _timed(timings, "sample"):
        seeds = spectral_sample(g, src, tgt, config.n_seeds, config.sigma_d)
        groups = group_knn(g, seeds, src, config.k)
    counts["seeds"] = len(seeds)

    with _timed(timings, "consistency"):
        src_index = NeighborIndex(src.points) if config.semantic == "loose" else None
        tgt_index = NeighborIndex(tgt.points) if config.semantic == "loose" else None
        candidates = estimate_local_transforms(groups, src, tgt, config, src_index, tgt_index)
    counts["candidates"] = len(candidates)

    with _timed(timings, "verify"):
        filtered = np.unique(np.concatenate([c.members for c in candidates]))
        p, q = g.points(src, tgt)
        n_p = sg.plane.normal if sg is not None else None
        n_q = tg.plane.normal if tg is not None else None
        best, report = select_best([c.candidate for c in candidates], p[filtered], q[filtered],
                                   config.sigma_d, n_p, n_q, config.sigma_theta, config.ground_gate)
    counts["filtered_correspondences"] = int(filtered.size)
    counts["surviving_candidates"] = int(len(candidates) if report.gate_bypassed else report.gate_passed.sum())

    with _timed(timings, "refine"):
        final, n_refined = refine(best, g, src, tgt, config.tau_1)
    counts["refined_inliers"] = n_refined
    report = VerificationReport(report.best, report.best_index, final, report.candidate_scores,
                                report.gate_passed, report.gate_bypassed, n_refined)
    return RunResult(final, report, g, filtered, candidates, sg, tg, config, counts, timings)


def run_report(result: RunResult, src: SemanticPointCloud, tgt: SemanticPointCloud,
               gt: RigidTransform | None = None, variant: str | None = None,
               include_timing: bool = True) -> dict[str, object]:
    """Machine-readable summary of one run."""
    report: dict[str, object] = {
        "schema": REPORT_SCHEMA,
        "transform": result.transform.as_matrix().tolist(),
        "variant": variant,
        "gate_bypassed": bool(result.verification.gate_bypassed),
        "best_candidate": int(result.verification.best_index),
        "counts": dict(result.counts),
        "config": result.config.to_dict(),
        "metrics": None,
    }
    if gt is not None:
        m = evaluate(result.transform, gt, THRESHOLDS)
        ip, ir, f1 = correspondence_metrics(
            result.correspondences.take(result.final_inliers(src, tgt)), result.correspondences,
            gt, src, tgt, result.config.sigma_d)
        report["metrics"] = {**m.to_dict(), "ip": ip, "ir": ir, "f1": f1}
    if include_timing:
        report["timing_ms"] = {k: round(v, 3) for k, v in result.timings_ms.items()}
    return report
