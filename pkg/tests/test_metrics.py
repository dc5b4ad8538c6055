import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import cloud, random_rotation, random_transform, rot_x, rot_z
from sgor.core import CorrespondenceSet, RigidTransform, apply_transform
from sgor.metrics import (THRESHOLDS, correspondence_metrics, evaluate, registration_recall,
                          registration_success, rotation_error, translation_error)


def quaternion(r):
    """Shepperd's method; sign is irrelevant for the geodesic."""
    tr = np.trace(r)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        return np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    i = int(np.argmax(np.diag(r)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = 2.0 * np.sqrt(1.0 + r[i, i] - r[j, j] - r[k, k])
    q = np.empty(4)
    q[0] = (r[k, j] - r[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (r[j, i] + r[i, j]) / s
    q[1 + k] = (r[k, i] + r[i, k]) / s
    return q / np.linalg.norm(q)


def quaternion_geodesic_deg(a, b):
    d = abs(float(quaternion(a) @ quaternion(b)))
    return float(np.degrees(2.0 * np.arccos(min(1.0, d))))


def test_identical_rotations():
    r = random_rotation(np.random.default_rng(0))
    assert rotation_error(r, r) < 1e-12


@pytest.mark.parametrize("axis", [rot_x, rot_z])
def test_five_degrees(axis, rng):
    base = random_rotation(rng)
    assert rotation_error(axis(5.0) @ base, base) == pytest.approx(5.0, abs=1e-9)


def test_random_axis_angles(rng):
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(0, 180)
        k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        r = np.eye(3) + np.sin(np.radians(ang)) * k + (1 - np.cos(np.radians(ang))) * k @ k
        base = random_rotation(rng)
        assert rotation_error(base @ r, base) == pytest.approx(ang, abs=1e-9)


def test_matches_quaternion_oracle(rng):
    for _ in range(200):
        a, b = random_rotation(rng), random_rotation(rng)
        assert rotation_error(a, b) == pytest.approx(quaternion_geodesic_deg(a, b), abs=1e-6)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_symmetry_left_invariance_and_range(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_rotation(rng) for _ in range(3))
    e = rotation_error(a, b)
    assert 0.0 <= e <= 180.0
    assert rotation_error(b, a) == pytest.approx(e, abs=1e-9)
    assert rotation_error(c @ a, c @ b) == pytest.approx(e, abs=1e-9)


def test_half_turn():
    assert rotation_error(rot_z(180), np.eye(3)) == pytest.approx(180.0, abs=1e-9)


def test_translation_error():
    assert translation_error([1, 2, 3], [1, 2, 3]) == 0.0
    assert translation_error([0.3, 0, 0.4], [0, 0, 0]) == pytest.approx(50.0, abs=1e-12)


def test_translation_error_matches_norm(rng):
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        assert translation_error(a, b) == pytest.approx(100 * np.sqrt(((a - b) ** 2).sum()), rel=1e-14)


def test_success_thresholds():
    assert THRESHOLDS["easy"] == (5.0, 60.0)
    assert registration_success(4.9, 59.0, *THRESHOLDS["easy"])
    assert not registration_success(5.0, 10.0, *THRESHOLDS["easy"])
    assert not registration_success(1.0, 60.0, *THRESHOLDS["easy"])
    with pytest.raises(ValueError):
        registration_success(1.0, 1.0, 0.0, 1.0)


def test_recall_hand_count():
    outcomes = [(1, 5), (4.9, 59), (5, 1), (0.1, 61), (2, 2), (7, 7), (0, 0), (4, 30), (4.99, 59.99), (3, 100)]
    hits = [registration_success(r, t, 5.0, 60.0) for r, t in outcomes]
    assert hits == [True, True, False, False, True, False, True, True, True, False]
    assert registration_recall(hits) == pytest.approx(0.6)
    assert registration_recall([]) == 0.0


def test_evaluate_report(rng):
    gt = random_transform(rng)
    est = RigidTransform(rot_z(3.0) @ gt.rotation, gt.translation + [0.2, 0, 0])
    rep = evaluate(est, gt)
    assert rep.re_deg == pytest.approx(3.0, abs=1e-9) and rep.te_cm == pytest.approx(20.0, abs=1e-9)
    assert rep.success == {"easy": True, "medium": True, "hard": False}
    assert set(rep.to_dict()) == {"re_deg", "te_cm", "success", "ip", "ir", "f1"}


# --- correspondence metrics -------------------------------------------------------

def _setup(rng, n=40, n_true=15):
    gt = random_transform(rng)
    p = rng.uniform(-5, 5, size=(n, 3))
    q = apply_transform(p, gt)
    q[n_true:] += 1.0 + rng.uniform(0, 3, size=(n - n_true, 3))
    s, t = cloud(p), cloud(q)
    g = CorrespondenceSet.from_indices(np.arange(n), np.arange(n), s, t)
    return g, s, t, gt


def test_retaining_exactly_the_inliers(rng):
    g, s, t, gt = _setup(rng)
    assert correspondence_metrics(g.take(np.arange(15)), g, gt, s, t, 0.6) == (1.0, 1.0, 1.0)


def test_retaining_no_inliers(rng):
    g, s, t, gt = _setup(rng)
    assert correspondence_metrics(g.take(np.arange(15, 40)), g, gt, s, t, 0.6) == (0.0, 0.0, 0.0)
    assert correspondence_metrics(g.take([]), g, gt, s, t, 0.6) == (0.0, 0.0, 0.0)


def test_counting_oracle(rng):
    g, s, t, gt = _setup(rng)
    for _ in range(30):
        keep = np.flatnonzero(rng.uniform(size=40) < 0.5)
        tp = int(np.sum(keep < 15))
        ip = tp / len(keep) if len(keep) else 0.0
        ir = tp / 15
        f1 = 0.0 if ip + ir == 0 else 2 * ip * ir / (ip + ir)
        got = correspondence_metrics(g.take(keep), g, gt, s, t, 0.6)
        np.testing.assert_allclose(got, (ip, ir, f1), rtol=0, atol=1e-12)
        assert all(0.0 <= v <= 1.0 for v in got)
        assert (got[2] == 0) == (got[0] * got[1] == 0)
        assert got[2] <= 2 * min(got[0], got[1]) + 1e-12


def test_radius_must_be_positive(rng):
    g, s, t, gt = _setup(rng)
    with pytest.raises(ValueError):
        correspondence_metrics(g, g, gt, s, t, 0.0)
