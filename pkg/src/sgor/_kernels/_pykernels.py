"""Numpy implementations of the hot kernels.

These mirror the signatures in ``_ckernels.pyx`` exactly and are used
whenever the compiled module is unavailable.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 512


def _pair_lengths(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    dz = a[:, None, 2] - b[None, :, 2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def length_diff(pa, qa, pb, qb) -> np.ndarray:
    """|‖pa_i - pb_j‖ - ‖qa_i - qb_j‖| for every (i, j)."""
    pa = np.ascontiguousarray(pa, dtype=np.float64)
    qa = np.ascontiguousarray(qa, dtype=np.float64)
    pb = np.ascontiguousarray(pb, dtype=np.float64)
    qb = np.ascontiguousarray(qb, dtype=np.float64)
    out = np.empty((pa.shape[0], pb.shape[0]), dtype=np.float64)
    for lo in range(0, pa.shape[0], _CHUNK):
        hi = lo + _CHUNK
        out[lo:hi] = np.abs(_pair_lengths(pa[lo:hi], pb) - _pair_lengths(qa[lo:hi], qb))
    return out


def affinity_csr(p, q, sigma_d: float):
    """Gaussian affinity of length differences with a hard cutoff at sigma_d.

    Returns CSR arrays ``(indptr, indices, data)``; the diagonal is zero.
    """
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    n = p.shape[0]
    two_s2 = 2.0 * sigma_d * sigma_d
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = []
    data = []
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        d = np.abs(_pair_lengths(p[lo:hi], p) - _pair_lengths(q[lo:hi], q))
        keep = d <= sigma_d
        keep[np.arange(hi - lo), np.arange(lo, hi)] = False
        rows, cols = np.nonzero(keep)
        dd = d[rows, cols]
        indices.append(cols.astype(np.int64))
        data.append(np.exp(-(dd * dd) / two_s2))
        indptr[lo + 1:hi + 1] = np.bincount(rows, minlength=hi - lo)
    np.cumsum(indptr, out=indptr)
    if indices:
        return indptr, np.concatenate(indices), np.concatenate(data)
    return indptr, np.zeros(0, np.int64), np.zeros(0, np.float64)


def truncated_distance_sums(rotations, translations, p, q, sigma_d: float) -> np.ndarray:
    """Sum over pairs of the truncated residual ‖R p + t - q‖ per candidate."""
    rotations = np.asarray(rotations, dtype=np.float64)
    translations = np.asarray(translations, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    lo, hi = 0.5 * sigma_d, 2.5 * sigma_d
    out = np.empty(rotations.shape[0], dtype=np.float64)
    for c in range(rotations.shape[0]):
        r = rotations[c]
        t = translations[c]
        dx = r[0, 0] * p[:, 0] + r[0, 1] * p[:, 1] + r[0, 2] * p[:, 2] + t[0] - q[:, 0]
        dy = r[1, 0] * p[:, 0] + r[1, 1] * p[:, 1] + r[1, 2] * p[:, 2] + t[1] - q[:, 1]
        dz = r[2, 0] * p[:, 0] + r[2, 1] * p[:, 1] + r[2, 2] * p[:, 2] + t[2] - q[:, 2]
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        td = np.where(dist <= lo, lo, np.where(dist < hi, dist, hi))
        # sequential sum keeps the result identical to the compiled loop
        out[c] = np.add.accumulate(td)[-1] if td.size else 0.0
    return out


def pair_weights(p, q, sigma_d: float) -> np.ndarray:
    """exp(-d_ij² / 2 sigma_d²) over all pairs of one correspondence set."""
    d = length_diff(p, q, p, q)
    return np.exp(-(d * d) / (2.0 * sigma_d * sigma_d))
