import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_icp.errors import EmptyUnion
from hybrid_icp.geometry import CameraIntrinsics, render_depth
from hybrid_icp.se3 import Pose, exp_map
from hybrid_icp.vsd import (
    DEFAULT_TAU_FRACTIONS,
    DistanceMap,
    VsdConfig,
    distance_map_from_depth,
    mean_vsd,
    mve,
    pose_vsd,
    vsd_error,
)


def dmap(values, mask=None):
    values = np.asarray(values, float)
    return DistanceMap(values, values > 0 if mask is None else mask)


def vsd_by_loop(d_est, d_gt, m_est, m_gt, tau):
    # literal per-pixel cost, averaged over the union
    costs = []
    for idx in np.ndindex(m_est.shape):
        if not (m_est[idx] or m_gt[idx]):
            continue
        ok = m_est[idx] and m_gt[idx] and abs(d_est.values[idx] - d_gt.values[idx]) < tau
        costs.append(0.0 if ok else 1.0)
    return sum(costs) / len(costs)


# --- distance maps ---------------------------------------------------------


def test_distance_map_principal_point_and_corner():
    cam = CameraIntrinsics(50.0, 40.0, 2.0, 1.0, 5, 3)
    depth = np.zeros(cam.shape)
    depth[1, 2] = 1.0
    depth[2, 4] = 0.7
    d = distance_map_from_depth(depth, cam)
    assert d.values[1, 2] == 1.0
    corner = 0.7 * math.sqrt(((4 - 2.0) / 50) ** 2 + ((2 - 1.0) / 40) ** 2 + 1)
    assert d.values[2, 4] == pytest.approx(corner, rel=1e-15)
    assert d.valid.sum() == 2 and not d.valid[0, 0]


# --- vsd_error -------------------------------------------------------------


def test_identical_and_disjoint():
    rng = np.random.default_rng(0)
    vals = rng.uniform(0.5, 1.0, (10, 10))
    mask = rng.random((10, 10)) < 0.6
    d = dmap(vals)
    assert vsd_error(d, d, mask, mask, 1e-9) == 0.0
    assert vsd_error(d, d, mask, ~mask, 1.0) == 1.0
    assert mean_vsd(d, d, mask, mask, 0.1) == 0.0
    assert mean_vsd(d, d, mask, ~mask, 0.1) == 1.0


def test_pixel_count_oracle():
    m_est = np.zeros((10, 10), bool)
    m_gt = np.zeros((10, 10), bool)
    m_est[:8] = True
    m_gt[2:] = True  # union 100, intersection 60
    d_gt = dmap(np.ones((10, 10)))
    est = np.ones((10, 10))
    est[2:5] += 0.5  # 30 intersection pixels off by 0.5, 30 exact
    value = vsd_error(dmap(est), d_gt, m_est, m_gt, 0.1)
    assert value == pytest.approx(1 - 30 / 100, abs=1e-15)
    assert value == vsd_by_loop(dmap(est), d_gt, m_est, m_gt, 0.1)


def test_tolerance_is_strict():
    mask = np.ones((2, 2), bool)
    # 0.25 is exact in binary, so the difference equals tau exactly
    assert vsd_error(dmap(np.full((2, 2), 0.75)), dmap(np.full((2, 2), 0.5)), mask, mask, 0.25) == 1.0
    assert vsd_error(dmap(np.full((2, 2), 0.75)), dmap(np.full((2, 2), 0.5)), mask, mask, 0.2500001) == 0.0


def test_empty_union_and_shape_errors():
    d = dmap(np.ones((3, 3)))
    empty = np.zeros((3, 3), bool)
    with pytest.raises(EmptyUnion):
        vsd_error(d, d, empty, empty, 0.1)
    with pytest.raises(ValueError):
        vsd_error(d, dmap(np.ones((3, 4))), empty, empty, 0.1)


@given(st.integers(0, 2**32 - 1), st.floats(0.001, 0.5), st.floats(0.001, 0.5))
@settings(max_examples=60, deadline=None)
def test_vsd_symmetric_monotone_and_matches_loop(seed, tau_a, tau_b):
    rng = np.random.default_rng(seed)
    shape = (8, 9)
    a, b = dmap(rng.uniform(0.5, 1.0, shape)), dmap(rng.uniform(0.5, 1.0, shape))
    ma, mb = rng.random(shape) < 0.7, rng.random(shape) < 0.7
    ma[0, 0] = True
    lo, hi = sorted((tau_a, tau_b))
    v_lo = vsd_error(a, b, ma, mb, lo)
    assert v_lo == vsd_error(b, a, mb, ma, lo)
    assert vsd_error(a, b, ma, mb, hi) <= v_lo
    assert v_lo == pytest.approx(vsd_by_loop(a, b, ma, mb, lo), abs=1e-15)
    assert 0.0 <= mean_vsd(a, b, ma, mb, 0.4) <= 1.0


# --- mean_vsd --------------------------------------------------------------


def test_constant_offset_threshold_count():
    diameter = 0.2
    mask = np.ones((6, 6), bool)
    gt = dmap(np.full((6, 6), 1.0))
    est = dmap(np.full((6, 6), 1.0 + 0.27 * diameter))
    # tolerances 0.30 .. 0.50 of the diameter accept the offset
    assert mean_vsd(est, gt, mask, mask, diameter) == pytest.approx(0.5, abs=1e-15)


def test_mean_is_average_over_tolerances():
    rng = np.random.default_rng(3)
    a, b = dmap(rng.uniform(0.9, 1.1, (10, 10))), dmap(rng.uniform(0.9, 1.1, (10, 10)))
    ma, mb = rng.random((10, 10)) < 0.8, rng.random((10, 10)) < 0.8
    cfg = VsdConfig((0.1, 0.35, 0.9))
    expected = np.mean([vsd_by_loop(a, b, ma, mb, f * 0.3) for f in cfg.tau_fractions])
    assert mean_vsd(a, b, ma, mb, 0.3, cfg) == pytest.approx(expected, abs=1e-15)


def test_vsd_config():
    assert DEFAULT_TAU_FRACTIONS == (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)
    for bad in ((), (0.0,), (1.5,)):
        with pytest.raises(ValueError):
            VsdConfig(bad)


# --- MVE -------------------------------------------------------------------


def test_mve_at_render_pose_is_zero(cam, sphere_mesh, sphere_gt, sphere_model):
    depth, mask = render_depth(sphere_mesh, sphere_gt, cam)
    assert mve(depth, mask, sphere_mesh, sphere_gt, cam, sphere_model.diameter) == 0.0
    assert pose_vsd(sphere_mesh, sphere_gt, sphere_gt, cam, sphere_model.diameter) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_mve_equals_true_vsd_without_noise(seed, cam, sphere_mesh, sphere_gt, sphere_model):
    rng = np.random.default_rng(seed)
    depth, mask = render_depth(sphere_mesh, sphere_gt, cam)
    est = sphere_gt @ exp_map(np.r_[rng.normal(scale=0.01, size=3), rng.normal(scale=0.2, size=3)])
    e_mve = mve(depth, mask, sphere_mesh, est, cam, sphere_model.diameter)
    true = pose_vsd(sphere_mesh, est, sphere_gt, cam, sphere_model.diameter)
    assert e_mve == pytest.approx(true, abs=1e-12)
    assert 0.0 < e_mve < 1.0


def test_mve_off_frustum_is_one(cam, sphere_mesh, sphere_gt, sphere_model):
    depth, mask = render_depth(sphere_mesh, sphere_gt, cam)
    for far in ([5.0, 0.0, 0.4], [0.0, 0.0, -1.0]):
        assert mve(depth, mask, sphere_mesh, Pose.from_translation(far), cam, sphere_model.diameter) == 1.0
        assert pose_vsd(sphere_mesh, Pose.from_translation(far), sphere_gt, cam, sphere_model.diameter) == 1.0


def test_mve_with_empty_input_mask_is_one(cam, sphere_mesh, sphere_gt, sphere_model):
    depth, mask = render_depth(sphere_mesh, sphere_gt, cam)
    assert mve(depth, np.zeros_like(mask), sphere_mesh, sphere_gt, cam, sphere_model.diameter) == 1.0
