"""Sequential pose estimation from a camera moving towards a static object.

Past estimates live in the current camera frame and are carried along as
the camera moves.  Six methods turn the log into the next ICP
initialisation (and into the final answer at the end of a trajectory).
Estimate uncertainty is ``e_mve * I``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .association import AssociationConfig, ObjectModel, Scene
from .errors import EmptyLog, EmptyRender, HybridIcpError
from .geometry import CameraIntrinsics, DepthNoiseModel, TriangleMesh, add_depth_noise, render_depth
from .hybrid import HybridConfig, run_cascading_icp, run_hybrid_icp
from .se3 import Pose, PoseWithCovariance, deterministic_average, fuse_estimates, se3_adjoint
from .vsd import mve, pose_vsd, render_distance

COVARIANCE_FLOOR = 1e-6

FUSION_METHODS = (
    "last_estimate",
    "average",
    "weighted_average",
    "filtering_constant",
    "filtering",
    "most_confident",
)
# methods whose bookkeeping needs an MVE after every estimate
_NEEDS_MVE = {"weighted_average", "filtering", "most_confident"}

IcpVariant = Literal["projective_cascading", "hybrid"]


@dataclass(frozen=True)
class FusionMethod:
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in FUSION_METHODS:
            raise ValueError(f"unknown fusion method {self.kind!r}")

    @property
    def filtered(self) -> bool:
        return self.kind in ("filtering", "filtering_constant")

    @property
    def needs_mve(self) -> bool:
        return self.kind in _NEEDS_MVE


@dataclass(frozen=True)
class TrajectoryConfig:
    """Straight approach along the optical axis.

    ``step_seconds`` fixes the compute time charged per estimate; ``None``
    measures it with the wall clock.
    """

    start_distance: float = 1.0
    velocity: float = 0.1
    stop_distance: float = 0.4
    step_seconds: float | None = None
    max_steps: int = 10_000

    def __post_init__(self) -> None:
        if self.velocity < 0:
            raise ValueError("velocity must be non-negative")
        if not self.stop_distance < self.start_distance:
            raise ValueError("stop_distance must be below start_distance")
        if self.step_seconds is not None and self.step_seconds < 0:
            raise ValueError("step_seconds must be non-negative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True, eq=False)
class LogEntry:
    pose: Pose
    covariance: NDArray[np.float64]
    e_mve: float
    timestep: int


@dataclass(frozen=True, eq=False)
class PoseEstimateLog:
    """Estimates expressed in the current camera frame, oldest first.

    Filtered methods keep a single fused head; ``fused_count`` records how
    many estimates went into it.
    """

    entries: tuple[LogEntry, ...] = ()
    fused_count: int = 0

    def __post_init__(self) -> None:
        steps = [e.timestep for e in self.entries]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("timesteps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.entries)

    def poses(self) -> list[Pose]:
        return [e.pose for e in self.entries]


def estimate_covariance(e_mve: float) -> NDArray[np.float64]:
    """``e_mve * I`` floored at ``COVARIANCE_FLOOR``; NaN (no MVE computed) gives ``I``."""
    if math.isnan(e_mve):
        return np.eye(6)
    return max(float(e_mve), COVARIANCE_FLOOR) * np.eye(6)


def advance_frame(log: PoseEstimateLog, t_motion: Pose, adjoint: bool = False) -> PoseEstimateLog:
    """Re-express every entry in the next camera frame (``t_motion`` maps old to new).

    Covariances are carried unchanged unless ``adjoint`` is set, in which
    case they are transported as left perturbations.
    """
    ad = se3_adjoint(t_motion) if adjoint else None
    entries = tuple(
        replace(
            e,
            pose=t_motion @ e.pose,
            covariance=e.covariance if ad is None else ad @ e.covariance @ ad.T,
        )
        for e in log.entries
    )
    return PoseEstimateLog(entries, log.fused_count)


def query_initialisation(method: FusionMethod, log: PoseEstimateLog) -> Pose:
    if not log.entries:
        raise EmptyLog("no estimates recorded")
    kind = method.kind
    if kind in ("last_estimate", "filtering", "filtering_constant") or len(log) == 1:
        return log.entries[-1].pose
    if kind == "average":
        return deterministic_average(log.poses())
    if kind == "weighted_average":
        return fuse_estimates([PoseWithCovariance(e.pose, e.covariance) for e in log.entries]).pose
    # most_confident; reversed so that ties go to the newest entry
    traces = [float(np.trace(e.covariance)) for e in reversed(log.entries)]
    return log.entries[len(log) - 1 - int(np.argmin(traces))].pose


def record_estimate(
    method: FusionMethod, log: PoseEstimateLog, new_pose: Pose, e_mve: float, timestep: int | None = None
) -> PoseEstimateLog:
    if timestep is None:
        timestep = log.entries[-1].timestep + 1 if log.entries else 0
    cov = np.eye(6) if method.kind == "filtering_constant" else estimate_covariance(e_mve)
    entry = LogEntry(new_pose, cov, float(e_mve), timestep)
    if not method.filtered:
        return PoseEstimateLog(log.entries + (entry,), log.fused_count + 1)
    if not log.entries:
        return PoseEstimateLog((entry,), 1)
    head = log.entries[-1]
    fused = fuse_estimates([PoseWithCovariance(head.pose, head.covariance), PoseWithCovariance(new_pose, cov)])
    return PoseEstimateLog((LogEntry(fused.pose, fused.covariance, float(e_mve), timestep),), log.fused_count + 1)


# --------------------------------------------------------------------------
# trajectory simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepReport:
    step: int
    camera_distance: float
    pre_vsd: float
    post_vsd: float
    e_mve: float
    elapsed_seconds: float
    status: str


@dataclass
class TrajectoryReport:
    pre_trajectory_vsd: float
    final_vsd: float
    steps: list[StepReport] = field(default_factory=list)
    final_pose: Pose | None = None


def camera_distance(t_co: Pose, mesh: TriangleMesh) -> float:
    return float(np.linalg.norm(t_co.apply(mesh.center())))


def run_variant(
    variant: IcpVariant,
    model: ObjectModel,
    scene: Scene,
    t_init: Pose,
    hybrid_cfg: HybridConfig | None = None,
    assoc_cfg: AssociationConfig | None = None,
) -> Pose:
    hybrid_cfg = hybrid_cfg or HybridConfig()
    if variant == "projective_cascading":
        return run_cascading_icp(model, scene, t_init, "projective", hybrid_cfg.cascade, assoc_cfg).pose
    if variant == "hybrid":
        return run_hybrid_icp(model, scene, t_init, hybrid_cfg, assoc_cfg).pose
    raise ValueError(f"unknown ICP variant {variant!r}")


def simulate_trajectory(
    mesh: TriangleMesh,
    cam: CameraIntrinsics,
    icp_variant: IcpVariant,
    method: FusionMethod,
    cfg: TrajectoryConfig,
    noise: DepthNoiseModel,
    t_gt: Pose,
    t_init: Pose,
    rng: np.random.Generator,
    model: ObjectModel | None = None,
    hybrid_cfg: HybridConfig | None = None,
    adjoint_covariance: bool = False,
) -> TrajectoryReport:
    """Approach the object along the optical axis, estimating once per step.

    ``t_gt`` is the true object pose in the starting camera frame and
    ``t_init`` the first ICP initialisation.  ``model`` (default: built from
    ``mesh``) is what ICP registers; ground truth and VSD always use ``mesh``.
    A step whose render or ICP fails is logged and the camera still moves.
    """
    model = model or ObjectModel.from_mesh(mesh)
    diameter = model.diameter
    log = PoseEstimateLog()
    fallback = t_init
    pre_trajectory = pose_vsd(mesh, t_init, t_gt, cam, diameter)
    report = TrajectoryReport(pre_trajectory, 1.0)

    for step in range(cfg.max_steps):
        dist = camera_distance(t_gt, mesh)
        if dist <= cfg.stop_distance:
            break
        init = query_initialisation(method, log) if log.entries else fallback
        gt_render = None
        t0 = time.perf_counter()
        try:
            depth, mask = render_depth(mesh, t_gt, cam)
            depth = add_depth_noise(depth, noise, rng)
            scene = Scene(depth, mask, cam)
            estimate = run_variant(icp_variant, model, scene, init, hybrid_cfg)
            e = mve(scene.depth, scene.mask, model.mesh, estimate, cam, diameter) if method.needs_mve else math.nan
            status = "ok"
        except (EmptyRender, HybridIcpError) as exc:
            estimate, e, status = None, math.nan, f"failed:{type(exc).__name__}"
        elapsed = time.perf_counter() - t0

        if estimate is not None:
            log = record_estimate(method, log, estimate, e, step)
            gt_render = render_distance(mesh, t_gt, cam)
            pre = pose_vsd(mesh, init, t_gt, cam, diameter, gt_render=gt_render)
            post = pose_vsd(mesh, estimate, t_gt, cam, diameter, gt_render=gt_render)
        else:
            pre = post = 1.0
        report.steps.append(StepReport(step, dist, pre, post, e, elapsed, status))

        dt = cfg.step_seconds if cfg.step_seconds is not None else elapsed
        motion = Pose.from_translation([0.0, 0.0, -cfg.velocity * dt])
        t_gt = motion @ t_gt
        fallback = motion @ fallback
        log = advance_frame(log, motion, adjoint_covariance)

    final = query_initialisation(method, log) if log.entries else fallback
    report.final_pose = final
    report.final_vsd = pose_vsd(mesh, final, t_gt, cam, diameter)
    return report
