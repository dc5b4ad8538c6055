"""Semantic-geometric double consistency inside each local group, and local transform estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from .config import PipelineConfig
from .core import (CorrespondenceSet, NeighborIndex, RigidTransform, SemanticPointCloud,
                   weighted_rigid_solve)
from .correspond import LocalGroupSet
from .errors import AllZeroRow, DegenerateConfiguration, NoCandidates

# up to this many global pairs the w×w weights are built once and gathered per group;
# above it groups are batched and the weights streamed in column blocks
DENSE_WEIGHT_LIMIT = 4096
_BLOCK = 1024


@dataclass
class ConsistencyWorkspace:
    """Consistency matrices of one local group.

    ``m_g_prime`` and ``w_m`` may be restricted to the columns in
    ``support`` (positions into the global set); dropped columns are
    all-zero in the unrestricted ``m_g_prime`` so the product is unchanged.
    """

    group: NDArray[np.int64]  # positions into the global set, seed first
    support: NDArray[np.int64]
    m_g: NDArray[np.float64]
    m_g_prime: NDArray[np.float64]
    w_m: NDArray[np.float64]
    m_g_star: NDArray[np.float64]
    m_s: NDArray[np.float64] | None = None
    m_s_prime: NDArray[np.float64] | None = None
    m_s_star: NDArray[np.float64] | None = None
    m_star: NDArray[np.float64] | None = None


@dataclass(frozen=True)
class FilteredGroup:
    seed: int  # position of the seed in the global set
    members: NDArray[np.int64]  # retained positions into the global set
    weights: NDArray[np.float64]
    candidate: RigidTransform | None = None


def pairwise_distance_score(ci, cj, src: SemanticPointCloud, tgt: SemanticPointCloud) -> float:
    """| ‖p_i - p_j‖ - ‖q_i - q_j‖ | for two correspondences."""
    dp = np.linalg.norm(src.points[ci.src_index] - src.points[cj.src_index])
    dq = np.linalg.norm(tgt.points[ci.tgt_index] - tgt.points[cj.tgt_index])
    return float(abs(dp - dq))


def consistency_indicator(d: np.ndarray, sigma_d: float) -> np.ndarray:
    return ((d * d) / (sigma_d * sigma_d) - 1.0 <= 0.0).astype(np.float64)


def consistency_weight(d: np.ndarray, sigma_d: float) -> np.ndarray:
    return np.exp(-(d * d) / (2.0 * sigma_d * sigma_d))


def global_weights(g: CorrespondenceSet, src: SemanticPointCloud, tgt: SemanticPointCloud,
                   sigma_d: float) -> NDArray[np.float64]:
    """The w×w Gaussian consistency weights of the whole global set."""
    p, q = g.points(src, tgt)
    return _kernels.pair_weights(p, q, sigma_d)


def geometric_consistency(group, g: CorrespondenceSet, src: SemanticPointCloud,
                          tgt: SemanticPointCloud, sigma_d: float, restrict: bool = False,
                          w_full: NDArray[np.float64] | None = None) -> ConsistencyWorkspace:
    """Local, local-to-global and global-aware geometric consistency of one group.

    With ``restrict`` the weight matrix is only kept on the global
    correspondences consistent with at least one group member. ``w_full``
    reuses weights precomputed by :func:`global_weights`.
    """
    if sigma_d <= 0:
        raise ValueError("sigma_d must be positive")
    group = np.asarray(group, dtype=np.int64)
    p_all, q_all = g.points(src, tgt)
    pg, qg = p_all[group], q_all[group]
    m_g = consistency_indicator(_kernels.length_diff(pg, qg, pg, qg), sigma_d)
    m_gp = consistency_indicator(_kernels.length_diff(pg, qg, p_all, q_all), sigma_d)
    if restrict:
        support = np.flatnonzero(m_gp.any(axis=0))
        m_gp = np.ascontiguousarray(m_gp[:, support])
    else:
        support = np.arange(len(g))
    if w_full is not None:
        w_m = w_full[np.ix_(support, support)] if restrict else w_full
    else:
        w_m = _kernels.pair_weights(p_all[support], q_all[support], sigma_d)
    m_g_star = m_g * (m_gp @ w_m @ m_gp.T)
    return ConsistencyWorkspace(group, support, m_g, m_gp, w_m, m_g_star)


def batched_global_scores(groups, g: CorrespondenceSet, src: SemanticPointCloud,
                          tgt: SemanticPointCloud, sigma_d: float,
                          block: int = _BLOCK) -> NDArray[np.float64]:
    """M'_g W_m M'_gᵀ for every group without holding the w×w weights.

    Groups are stacked into batches of about ``block`` rows; the weights are
    evaluated in column blocks on the union support of each batch.
    """
    groups = np.asarray(groups, dtype=np.int64)
    n_groups, k = groups.shape
    p_all, q_all = g.points(src, tgt)
    out = np.empty((n_groups, k, k), dtype=np.float64)
    per = max(1, block // k)
    for lo in range(0, n_groups, per):
        rows = groups[lo:lo + per].reshape(-1)
        m_gp = consistency_indicator(_kernels.length_diff(p_all[rows], q_all[rows], p_all, q_all), sigma_d)
        support = np.flatnonzero(m_gp.any(axis=0))
        m_gp = np.ascontiguousarray(m_gp[:, support])
        ps, qs = p_all[support], q_all[support]
        mw = np.empty_like(m_gp)
        for c0 in range(0, support.size, block):
            c1 = c0 + block
            w_blk = consistency_weight(_kernels.length_diff(ps, qs, ps[c0:c1], qs[c0:c1]), sigma_d)
            mw[:, c0:c1] = m_gp @ w_blk
        for n in range(rows.size // k):
            r = slice(n * k, (n + 1) * k)
            out[lo + n] = mw[r] @ m_gp[r].T
    return out


def majority_labels(cloud: SemanticPointCloud, indices, r_s: float,
                    index: NeighborIndex | None = None) -> NDArray[np.int64]:
    """Most frequent label within ``r_s`` of each requested point (point included).

    Ties go to the smallest label id.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        return np.zeros(0, dtype=np.int64)
    if index is None:
        index = NeighborIndex(cloud.points)
    out = np.empty(indices.shape[0], dtype=np.int64)
    for n, nbrs in enumerate(index.radius_query_many(cloud.points[indices], r_s)):
        if nbrs.size == 0:
            out[n] = cloud.labels[indices[n]]
        else:
            out[n] = int(np.argmax(np.bincount(cloud.labels[nbrs])))
    return out


def neighborhood_majority_label(cloud: SemanticPointCloud, index: int, r_s: float,
                                neighbor_index: NeighborIndex | None = None) -> int:
    if r_s <= 0:
        raise ValueError("r_s must be positive")
    return int(majority_labels(cloud, [index], r_s, neighbor_index)[0])


def semantic_consistency(src_labels, tgt_labels, src_majority, tgt_majority):
    """Tight, neighbourhood-based and combined semantic consistency of one group.

    Entry (i, j) is 1 when the ordered label pairs (s^p_i, s^p_j) and
    (s^q_i, s^q_j) are equal; the loose matrix does the same on majority labels.
    """
    e = np.asarray(src_labels) == np.asarray(tgt_labels)
    e_loose = np.asarray(src_majority) == np.asarray(tgt_majority)
    m_s = (e[:, None] & e[None, :]).astype(np.float64)
    m_s_prime = (e_loose[:, None] & e_loose[None, :]).astype(np.float64)
    m_s_star = np.logical_or(m_s, m_s_prime).astype(np.float64)
    return m_s, m_s_prime, m_s_star


def top_k_row(row: np.ndarray, k1: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Columns of the ``k1`` largest positive entries (ties by column) and their normalized weights."""
    row = np.asarray(row, dtype=np.float64)
    if not np.any(row > 0):
        raise AllZeroRow("seed row of the consistency matrix is all zero")
    order = np.lexsort((np.arange(row.shape[0]), -row))[:k1]
    cols = order[row[order] > 0]
    vals = row[cols]
    return cols.astype(np.int64), vals / vals.sum()


def filter_group(ws: ConsistencyWorkspace, k1: int, seed_row: int = 0,
                 semantic: str = "loose") -> FilteredGroup:
    """Mask geometric scores with semantics and keep the top ``k1`` of the seed row."""
    if not 3 <= k1 <= ws.group.shape[0]:
        raise ValueError("need 3 <= k1 <= k")
    if semantic == "off" or ws.m_s_star is None:
        ws.m_star = ws.m_g_star.copy()
    elif semantic == "tight":
        ws.m_star = ws.m_s * ws.m_g_star
    else:
        ws.m_star = ws.m_s_star * ws.m_g_star
    cols, weights = top_k_row(ws.m_star[seed_row], k1)
    return FilteredGroup(int(ws.group[seed_row]), ws.group[cols], weights)


def estimate_local_transforms(groups: LocalGroupSet, src: SemanticPointCloud,
                              tgt: SemanticPointCloud, config: PipelineConfig,
                              src_index: NeighborIndex | None = None,
                              tgt_index: NeighborIndex | None = None) -> list[FilteredGroup]:
    """Filter every local group and solve its weighted candidate transform.

    Groups with an all-zero seed row or a degenerate retained set are dropped.
    """
    g = groups.parent
    p_all, q_all = g.points(src, tgt)
    src_major = tgt_major = None
    if config.semantic == "loose":
        used = np.unique(groups.groups)
        src_major = np.zeros(len(g), dtype=np.int64)
        tgt_major = np.zeros(len(g), dtype=np.int64)
        src_major[used] = majority_labels(src, g.src_index[used], config.r_s, src_index)
        tgt_major[used] = majority_labels(tgt, g.tgt_index[used], config.r_s, tgt_index)
    dense = len(g) <= DENSE_WEIGHT_LIMIT
    if dense:
        w_full = global_weights(g, src, tgt, config.sigma_d)
    else:
        scores = batched_global_scores(groups.groups, g, src, tgt, config.sigma_d)
    out: list[FilteredGroup] = []
    for n, members in enumerate(groups.groups):
        if dense:
            ws = geometric_consistency(members, g, src, tgt, config.sigma_d, True, w_full)
        else:
            m_g = consistency_indicator(_kernels.length_diff(p_all[members], q_all[members],
                                                             p_all[members], q_all[members]), config.sigma_d)
            # the batched path keeps only the product, not M'_g or W_m
            ws = ConsistencyWorkspace(members, np.zeros(0, np.int64), m_g, np.zeros((len(members), 0)),
                                      np.zeros((0, 0)), m_g * scores[n])
        if config.semantic != "off":
            sm = src_major[members] if src_major is not None else g.src_label[members]
            tm = tgt_major[members] if tgt_major is not None else g.tgt_label[members]
            ws.m_s, ws.m_s_prime, ws.m_s_star = semantic_consistency(
                g.src_label[members], g.tgt_label[members], sm, tm)
        try:
            fg = filter_group(ws, config.k1, 0, config.semantic)
            cand = weighted_rigid_solve(p_all[fg.members], q_all[fg.members], fg.weights)
        except (AllZeroRow, DegenerateConfiguration):
            continue
        out.append(FilteredGroup(fg.seed, fg.members, fg.weights, cand))
    if not out:
        raise NoCandidates("every local group was discarded")
    return out
