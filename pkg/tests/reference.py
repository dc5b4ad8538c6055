"""Independent oracles: a plain-loop consistency chain and Horn's rigid solve.

Shares no code with the package: distances, indicators, weights, majority
labels, masking, top-k and the rotation fit are all recomputed from scratch here.
"""

import math
from collections import Counter

import numpy as np


def _d(P, Q, i, j):
    return abs(math.dist(P[i], P[j]) - math.dist(Q[i], Q[j]))


def majority_label(points, labels, idx, r):
    counts = Counter()
    for n, pt in enumerate(points):
        if math.dist(pt, points[idx]) <= r:
            counts[labels[n]] += 1
    best = max(counts.values())
    return min(lab for lab, c in counts.items() if c == best)


def chain(P, Q, group, sigma, s_lab, t_lab, s_major, t_major, k1, semantic="loose"):
    """Every matrix of the chain plus the retained columns and weights.

    P, Q: lists of 3-tuples, one per global correspondence.
    group: positions into the global set, seed first.
    s_lab/t_lab/s_major/t_major: per-correspondence labels.
    """
    w, k = len(P), len(group)
    m_g = [[1.0 if _d(P, Q, a, b) ** 2 / sigma ** 2 - 1 <= 0 else 0.0 for b in group] for a in group]
    m_gp = [[1.0 if _d(P, Q, a, j) ** 2 / sigma ** 2 - 1 <= 0 else 0.0 for j in range(w)] for a in group]
    w_m = [[math.exp(-_d(P, Q, i, j) ** 2 / (2 * sigma ** 2)) for j in range(w)] for i in range(w)]
    inner = [[0.0] * k for _ in range(k)]
    for a in range(k):
        for b in range(k):
            total = 0.0
            for i in range(w):
                if m_gp[a][i] == 0:
                    continue
                for j in range(w):
                    total += m_gp[a][i] * w_m[i][j] * m_gp[b][j]
            inner[a][b] = total
    m_g_star = [[m_g[a][b] * inner[a][b] for b in range(k)] for a in range(k)]

    def pair_eq(sl, tl):
        return [[1.0 if (sl[ga], sl[gb]) == (tl[ga], tl[gb]) else 0.0 for gb in group] for ga in group]

    m_s = pair_eq(s_lab, t_lab)
    m_sp = pair_eq(s_major, t_major)
    m_ss = [[1.0 if (m_s[a][b] or m_sp[a][b]) else 0.0 for b in range(k)] for a in range(k)]
    if semantic == "off":
        mask = [[1.0] * k for _ in range(k)]
    elif semantic == "tight":
        mask = m_s
    else:
        mask = m_ss
    m_star = [[mask[a][b] * m_g_star[a][b] for b in range(k)] for a in range(k)]
    row = m_star[0]
    ranked = sorted(range(k), key=lambda j: (-row[j], j))[:k1]
    kept = [j for j in ranked if row[j] > 0]
    total = sum(row[j] for j in kept)
    weights = [row[j] / total for j in kept] if total > 0 else []
    return {
        "m_g": m_g, "m_g_prime": m_gp, "w_m": w_m, "m_g_star": m_g_star,
        "m_s": m_s, "m_s_prime": m_sp, "m_s_star": m_ss, "m_star": m_star,
        "kept": kept, "weights": weights,
    }


def horn_solve(p, q, w):
    """Weighted absolute orientation via Horn's unit-quaternion eigenproblem."""
    w = np.asarray(w, float) / np.sum(w)
    mp, mq = w @ p, w @ q
    s = ((p - mp) * w[:, None]).T @ (q - mq)
    sxx, sxy, sxz = s[0]
    syx, syy, syz = s[1]
    szx, szy, szz = s[2]
    n = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    vals, vecs = np.linalg.eigh(n)
    qw, qx, qy, qz = vecs[:, -1]
    r = np.array([
        [qw * qw + qx * qx - qy * qy - qz * qz, 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy)],
        [2 * (qx * qy + qw * qz), qw * qw - qx * qx + qy * qy - qz * qz, 2 * (qy * qz - qw * qx)],
        [2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), qw * qw - qx * qx - qy * qy + qz * qz],
    ])
    return r, mq - r @ mp
