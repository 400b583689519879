"""Object-pose sampling and VSD-binned rejection sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Literal

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial.transform import Rotation

from ..errors import BinUnfillable, DiameterTooLarge
from ..geometry import CameraIntrinsics, TriangleMesh
from ..geometry.render import NEAR
from ..se3 import Pose, apply_perturbation, rotation_for_translation, sample_perturbation

MAX_SINGLE_IMAGE_DISTANCE = 0.6
TRAJECTORY_DISTANCE = 1.0
AIM_OFFSET_FRACTION = 0.1
MAX_INIT_TRANSLATION = 0.15
ATTEMPTS_PER_SCENARIO = 200


def sample_object_pose(
    diameter: float,
    mode: Literal["single_image", "trajectory"],
    rng: np.random.Generator,
    center: ArrayLike = (0.0, 0.0, 0.0),
    trajectory_distance: float = TRAJECTORY_DISTANCE,
) -> Pose:
    """Object pose in the camera frame.

    The object centre sits at distance ``U[diameter, 0.6]`` (single image) or
    exactly ``trajectory_distance`` from the camera.  The optical axis passes
    through a point offset from the centre by ``U[0, 0.1 * diameter]`` along
    each camera axis, each with a random sign.  Orientation is uniform.
    """
    if mode == "single_image":
        if diameter >= MAX_SINGLE_IMAGE_DISTANCE:
            raise DiameterTooLarge(f"diameter {diameter} m does not fit below {MAX_SINGLE_IMAGE_DISTANCE} m")
        dist = rng.uniform(diameter, MAX_SINGLE_IMAGE_DISTANCE)
    elif mode == "trajectory":
        dist = trajectory_distance
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")

    offset = rng.uniform(0.0, AIM_OFFSET_FRACTION * diameter, size=3) * rng.choice([-1.0, 1.0], size=3)
    # aim point (0, 0, s) = centre + offset, with |centre| = dist
    lateral2 = offset[0] ** 2 + offset[1] ** 2
    s = offset[2] + math.sqrt(max(dist * dist - lateral2, 0.0))
    centre_cam = np.array([-offset[0], -offset[1], s - offset[2]])

    rot = Rotation.random(random_state=rng).as_matrix()
    return Pose(rot, centre_cam - rot @ np.asarray(center, dtype=np.float64))


def sample_initialisation(t_gt: Pose, rng: np.random.Generator, max_translation: float = MAX_INIT_TRANSLATION) -> Pose:
    """Perturbed ground truth with ``delta_t ~ U[0, max]`` and the linked rotation."""
    delta_t = rng.uniform(0.0, max_translation)
    return apply_perturbation(t_gt, sample_perturbation(delta_t, rotation_for_translation(delta_t), rng))


def _pixel_box(mesh: TriangleMesh, pose: Pose, cam: CameraIntrinsics):
    p = pose.apply(mesh.vertices)
    if not (p[:, 2] > NEAR).all():
        return None
    u, v = cam.project(p)
    return math.ceil(u.min()), math.floor(u.max()), math.ceil(v.min()), math.floor(v.max())


def footprints_disjoint(mesh: TriangleMesh, pose_a: Pose, pose_b: Pose, cam: CameraIntrinsics) -> bool:
    """True when the two renders provably share no pixel.

    Uses the pixel bounding boxes of the projected vertices; any covered
    pixel centre lies inside its render's box.  Disjoint renders have a VSD
    of exactly 1, so samplers can skip rendering them.
    """
    a = _pixel_box(mesh, pose_a, cam)
    b = _pixel_box(mesh, pose_b, cam)
    if a is None or b is None:
        return False
    return a[1] < b[0] or b[1] < a[0] or a[3] < b[2] or b[3] < a[2]


def vsd_bin(value: float, bins: int) -> int:
    """Index of ``value`` among ``bins`` equal intervals of ``[0, 1]``."""
    return min(int(value * bins), bins - 1)


@dataclass
class BinnedScenarios:
    """Accepted scenarios grouped by bin, in acceptance order."""

    bins: list[list[Any]]
    attempts: int
    unfilled: list[int] = field(default_factory=list)

    def flat(self) -> list[tuple[int, Any]]:
        return [(b, s) for b, group in enumerate(self.bins) for s in group]


def rejection_sample_bins(
    sampler: Callable[[np.random.Generator], tuple[Any, float]],
    bins: int,
    per_bin: int,
    rng: np.random.Generator,
    budget_factor: int = ATTEMPTS_PER_SCENARIO,
    strict: bool = False,
) -> BinnedScenarios:
    """Draw from ``sampler`` until each of ``bins`` VSD bins holds ``per_bin`` scenarios.

    ``sampler`` returns ``(scenario, vsd)``.  At most
    ``budget_factor * per_bin * bins`` draws are made; bins left short are
    listed in ``unfilled`` (or raise ``BinUnfillable`` when ``strict``).
    """
    if bins < 1 or per_bin < 1:
        raise ValueError("bins and per_bin must be >= 1")
    groups: list[list[Any]] = [[] for _ in range(bins)]
    remaining = bins
    budget = budget_factor * per_bin * bins
    attempts = 0
    while remaining and attempts < budget:
        attempts += 1
        scenario, value = sampler(rng)
        b = vsd_bin(value, bins)
        if len(groups[b]) < per_bin:
            groups[b].append(scenario)
            if len(groups[b]) == per_bin:
                remaining -= 1
    unfilled = [b for b, g in enumerate(groups) if len(g) < per_bin]
    if unfilled and strict:
        raise BinUnfillable(f"bins {unfilled} unfilled after {attempts} attempts")
    return BinnedScenarios(groups, attempts, unfilled)
