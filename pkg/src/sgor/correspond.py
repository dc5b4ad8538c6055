"""Correspondence establishment: semantic overlap, descriptor matching, seeding and grouping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from . import _kernels
from .core import CorrespondenceSet, NeighborIndex, SemanticPointCloud
from .errors import DimensionMismatch, EmptyOverlap, GroupTooSmall, LengthMismatch

POWER_TOL = 1e-6
POWER_MAX_ITER = 100


@dataclass(frozen=True)
class DescriptorSet:
    vectors: NDArray[np.float64]  # (N, D)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError("descriptors must be a non-empty (N, D) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("descriptor entries must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class LocalGroupSet:
    """Seeds and their kNN groups, as positions into the parent set."""

    parent: CorrespondenceSet
    seeds: NDArray[np.int64]  # (L,)
    groups: NDArray[np.int64]  # (L, k); groups[l, 0] == seeds[l]

    def __len__(self) -> int:
        return self.seeds.shape[0]


def overlap_labels(src: SemanticPointCloud, tgt: SemanticPointCloud) -> frozenset[int]:
    return frozenset(np.unique(src.labels).tolist()) & frozenset(np.unique(tgt.labels).tolist())


def overlap_masks(src: SemanticPointCloud, tgt: SemanticPointCloud):
    """Boolean masks of points whose label occurs in both clouds, plus the shared labels."""
    shared = overlap_labels(src, tgt)
    if not shared:
        raise EmptyOverlap("source and target share no semantic label")
    keep = sorted(shared)
    return np.isin(src.labels, keep), np.isin(tgt.labels, keep), shared


def semantic_overlap_filter(src: SemanticPointCloud, tgt: SemanticPointCloud):
    """Keep only points labelled with a class present on both sides."""
    ms, mt, _ = overlap_masks(src, tgt)
    return src.subset(np.flatnonzero(ms)), tgt.subset(np.flatnonzero(mt))


def _nearest(a: np.ndarray, b: np.ndarray, chunk: int = 1024):
    """Exact nearest row of ``b`` for every row of ``a``; ties go to the lower index."""
    nn = np.empty(a.shape[0], dtype=np.int64)
    dist = np.empty(a.shape[0], dtype=np.float64)
    bb = np.einsum("ij,ij->i", b, b)
    for lo in range(0, a.shape[0], chunk):
        blk = a[lo:lo + chunk]
        d2 = np.einsum("ij,ij->i", blk, blk)[:, None] - 2.0 * blk @ b.T + bb[None, :]
        j = np.argmin(d2, axis=1)
        # recompute the winning distance exactly
        diff = blk - b[j]
        nn[lo:lo + chunk] = j
        dist[lo:lo + chunk] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return nn, dist


def match_descriptors(src_desc: DescriptorSet, tgt_desc: DescriptorSet, src: SemanticPointCloud,
                      tgt: SemanticPointCloud, cap: int = 8000, src_subset=None,
                      tgt_subset=None) -> CorrespondenceSet:
    """Mutual nearest neighbours in descriptor space, at most ``cap`` pairs.

    ``src_subset``/``tgt_subset`` restrict matching to those point indices;
    returned indices still refer to the full clouds.
    """
    if src_desc.dimension != tgt_desc.dimension:
        raise DimensionMismatch(f"descriptor dims {src_desc.dimension} vs {tgt_desc.dimension}")
    if len(src_desc) != len(src) or len(tgt_desc) != len(tgt):
        raise LengthMismatch("descriptor count does not match cloud size")
    si = np.arange(len(src)) if src_subset is None else np.asarray(src_subset, dtype=np.int64)
    ti = np.arange(len(tgt)) if tgt_subset is None else np.asarray(tgt_subset, dtype=np.int64)
    if si.size == 0 or ti.size == 0:
        return CorrespondenceSet.from_indices([], [], src, tgt, [])
    a = src_desc.vectors[si]
    b = tgt_desc.vectors[ti]
    fwd, fdist = _nearest(a, b)
    back, _ = _nearest(b, a)
    mutual = np.flatnonzero(back[fwd] == np.arange(a.shape[0]))
    order = np.lexsort((si[mutual], fdist[mutual]))[:cap]
    m = mutual[order]
    return CorrespondenceSet.from_indices(si[m], ti[fwd[m]], src, tgt, fdist[m])


def affinity_matrix(g: CorrespondenceSet, src: SemanticPointCloud, tgt: SemanticPointCloud,
                    sigma_d: float) -> sp.csr_matrix:
    p, q = g.points(src, tgt)
    indptr, indices, data = _kernels.affinity_csr(p, q, sigma_d)
    n = len(g)
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def principal_eigenvector(a: sp.spmatrix) -> NDArray[np.float64]:
    """Power iteration from the uniform vector."""
    n = a.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(POWER_MAX_ITER):
        nv = a @ v
        norm = np.linalg.norm(nv)
        if norm == 0.0:
            return v
        nv /= norm
        done = np.linalg.norm(nv - v) < POWER_TOL
        v = nv
        if done:
            break
    return v


def spectral_sample(g: CorrespondenceSet, src: SemanticPointCloud, tgt: SemanticPointCloud,
                    n_seeds: int, sigma_d: float) -> NDArray[np.int64]:
    """Positions in ``g`` of the ``n_seeds`` largest principal-eigenvector entries."""
    if len(g) == 0:
        raise ValueError("empty correspondence set")
    if n_seeds < 1:
        raise ValueError("need at least one seed")
    v = principal_eigenvector(affinity_matrix(g, src, tgt, sigma_d))
    order = np.lexsort((np.arange(len(g)), -v))
    return order[:min(n_seeds, len(g))].astype(np.int64)


def group_knn(g: CorrespondenceSet, seeds, src: SemanticPointCloud, k: int) -> LocalGroupSet:
    """Each seed plus its k-1 nearest correspondences by source-point distance."""
    if len(g) < k:
        raise GroupTooSmall(f"{len(g)} correspondences cannot fill groups of {k}")
    seeds = np.asarray(seeds, dtype=np.int64)
    index = NeighborIndex(src.points[g.src_index])
    groups = np.empty((seeds.shape[0], k), dtype=np.int64)
    for row, s in enumerate(seeds):
        near = index.knn_query(index.points[s], k)
        rest = near[near != s][: k - 1]
        groups[row, 0] = s
        groups[row, 1:] = rest
    return LocalGroupSet(g, seeds, groups)
