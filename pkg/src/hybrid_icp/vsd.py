"""Visible Surface Discrepancy and its online estimate (MVE).

Distance maps hold Euclidean ray lengths, obtained from z-depth through the
camera rays.  Visibility masks are the valid pixels of a render; scenes hold
a single unoccluded object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyRender, EmptyUnion
from .geometry import CameraIntrinsics, TriangleMesh, render_depth
from .se3 import Pose

DEFAULT_TAU_FRACTIONS = tuple(round(0.05 * i, 2) for i in range(1, 11))


@dataclass(frozen=True, eq=False)
class DistanceMap:
    values: NDArray[np.float64]
    valid: NDArray[np.bool_]


@dataclass(frozen=True)
class VsdConfig:
    tau_fractions: tuple[float, ...] = DEFAULT_TAU_FRACTIONS

    def __post_init__(self) -> None:
        if not self.tau_fractions or not all(0 < f <= 1 for f in self.tau_fractions):
            raise ValueError("tau fractions must lie in (0, 1]")


def distance_map_from_depth(depth: NDArray[np.float64], cam: CameraIntrinsics) -> DistanceMap:
    valid = depth > 0
    values = np.zeros(depth.shape)
    values[valid] = depth[valid] * cam.ray_lengths()[valid]
    return DistanceMap(values, valid)


def vsd_error(
    d_est: DistanceMap,
    d_gt: DistanceMap,
    m_est: NDArray[np.bool_],
    m_gt: NDArray[np.bool_],
    tau: float,
) -> float:
    """Fraction of union pixels that are not matched within ``tau``."""
    return float(_vsd_many(d_est, d_gt, m_est, m_gt, np.array([tau]))[0])


def _vsd_many(d_est, d_gt, m_est, m_gt, taus: NDArray[np.float64]) -> NDArray[np.float64]:
    if d_est.values.shape != d_gt.values.shape or m_est.shape != m_gt.shape:
        raise ValueError("maps and masks must share one shape")
    union = int(np.count_nonzero(m_est | m_gt))
    if union == 0:
        raise EmptyUnion("both visibility masks are empty")
    inter = m_est & m_gt
    diff = np.abs(d_est.values[inter] - d_gt.values[inter])
    diff.sort()
    # count of |diff| < tau for each tau
    matched = np.searchsorted(diff, taus, side="left")
    return 1.0 - matched / union


def mean_vsd(
    d_est: DistanceMap,
    d_gt: DistanceMap,
    m_est: NDArray[np.bool_],
    m_gt: NDArray[np.bool_],
    diameter: float,
    cfg: VsdConfig | None = None,
) -> float:
    """VSD averaged over tolerances given as fractions of the object diameter."""
    cfg = cfg or VsdConfig()
    taus = np.asarray(cfg.tau_fractions) * diameter
    return float(_vsd_many(d_est, d_gt, m_est, m_gt, taus).mean())


def render_distance(mesh: TriangleMesh, pose: Pose, cam: CameraIntrinsics) -> tuple[DistanceMap, NDArray[np.bool_]]:
    depth, mask = render_depth(mesh, pose, cam)
    return distance_map_from_depth(depth, cam), mask


def pose_vsd(
    mesh: TriangleMesh,
    t_est: Pose,
    t_gt: Pose,
    cam: CameraIntrinsics,
    diameter: float,
    cfg: VsdConfig | None = None,
    gt_render: tuple[DistanceMap, NDArray[np.bool_]] | None = None,
) -> float:
    """Mean VSD of an estimate against ground truth, both rendered from ``mesh``."""
    d_gt, m_gt = gt_render if gt_render is not None else render_distance(mesh, t_gt, cam)
    try:
        d_est, m_est = render_distance(mesh, t_est, cam)
    except EmptyRender:
        return 1.0
    return mean_vsd(d_est, d_gt, m_est, m_gt, diameter, cfg)


def mve_with_render(
    input_depth: NDArray[np.float64],
    input_mask: NDArray[np.bool_],
    mesh: TriangleMesh,
    t_current: Pose,
    cam: CameraIntrinsics,
    diameter: float,
    cfg: VsdConfig | None = None,
) -> tuple[float, NDArray[np.float64] | None]:
    """MVE plus the depth render at ``t_current`` (``None`` if empty)."""
    try:
        depth, m_est = render_depth(mesh, t_current, cam)
    except EmptyRender:
        return 1.0, None
    m_gt = input_mask & (input_depth > 0)
    if not m_gt.any():
        return 1.0, depth
    d_est = distance_map_from_depth(depth, cam)
    d_gt = distance_map_from_depth(input_depth, cam)
    return mean_vsd(d_est, d_gt, m_est, m_gt, diameter, cfg), depth


def mve(
    input_depth: NDArray[np.float64],
    input_mask: NDArray[np.bool_],
    mesh: TriangleMesh,
    t_current: Pose,
    cam: CameraIntrinsics,
    diameter: float,
    cfg: VsdConfig | None = None,
) -> float:
    """Mean VSD estimate: the live image stands in for the ground-truth render.

    A render that covers no pixel counts as total misalignment (1.0).
    """
    return mve_with_render(input_depth, input_mask, mesh, t_current, cam, diameter, cfg)[0]
