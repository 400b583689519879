"""Dynamic Switching, Cascading ICP and the Hybrid ICP outer loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .association import AssociationConfig, ModelView, ObjectModel, Scene
from .se3 import Pose
from .solvers import (
    DIVERGED,
    Assoc,
    DivergenceGuard,
    IcpConfig,
    IcpResult,
    render_model_view,
    run_icp,
)
from .vsd import VsdConfig, mve_with_render

DEFAULT_ALPHA = 0.4

_STAGE_METRICS = {
    "point_plane": ("point_to_point", "point_to_plane"),
    "plane_point": ("point_to_plane", "point_to_point"),
}


@dataclass(frozen=True)
class SwitchDecision:
    method: Literal["nn", "projective"]
    e_mve: float


@dataclass(frozen=True)
class CascadeConfig:
    shrink_tolerance: float = 0.05
    stage_order: Literal["point_plane", "plane_point"] = "point_plane"
    stage_icp: tuple[IcpConfig, IcpConfig] = (IcpConfig(), IcpConfig())
    require_both: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.shrink_tolerance < 1:
            raise ValueError("shrink_tolerance must lie in (0, 1)")
        if self.stage_order not in _STAGE_METRICS:
            raise ValueError(f"unknown stage order {self.stage_order!r}")


@dataclass(frozen=True)
class HybridConfig:
    alpha: float = DEFAULT_ALPHA
    hybrid_iterations: int = 2
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    nn_icp: IcpConfig = field(default_factory=IcpConfig)
    vsd: VsdConfig = field(default_factory=VsdConfig)

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.hybrid_iterations < 1:
            raise ValueError("hybrid_iterations must be >= 1")


def dynamic_switch(e_mve: float, alpha: float = DEFAULT_ALPHA) -> SwitchDecision:
    """Nearest-neighbour association once the MVE reaches ``alpha``."""
    return SwitchDecision("nn" if e_mve >= alpha else "projective", e_mve)


def run_cascading_icp(
    model: ObjectModel,
    scene: Scene,
    t_init: Pose,
    assoc: Assoc,
    cfg: CascadeConfig | None = None,
    assoc_cfg: AssociationConfig | None = None,
    model_view: ModelView | None = None,
) -> IcpResult:
    """Two guarded ICP stages; a diverging stage falls back to its input."""
    cfg = cfg or CascadeConfig()
    guard = DivergenceGuard(cfg.shrink_tolerance, cfg.require_both)
    if assoc == "projective" and model_view is None:
        model_view = render_model_view(model, t_init, scene)
        if model_view is None:
            model_view = ModelView(np.zeros((0, 3)), np.zeros((0, 3)), t_init)

    pose = t_init
    stages = []
    for metric, icp_cfg in zip(_STAGE_METRICS[cfg.stage_order], cfg.stage_icp):
        res = run_icp(model, scene, pose, assoc, metric, icp_cfg, assoc_cfg, model_view, guard)
        stages.append(res)
        pose = res.pose

    diverged = any(s.status == DIVERGED for s in stages)
    status = DIVERGED if diverged else stages[-1].status
    trace = [t for s in stages for t in s.trace]
    return IcpResult(pose, trace, status, stages=stages)


def run_hybrid_icp(
    model: ObjectModel,
    scene: Scene,
    t_init: Pose,
    cfg: HybridConfig | None = None,
    assoc_cfg: AssociationConfig | None = None,
    force_method: Literal["nn", "projective"] | None = None,
) -> IcpResult:
    """Alternate MVE-driven switching with Cascading or point-to-point ICP.

    Each outer iteration renders the model at the current estimate once; the
    render feeds both the MVE and, on the projective branch, the model
    vertex map.  ``force_method`` overrides the switch (for experiments).
    """
    cfg = cfg or HybridConfig()
    pose = t_init
    stages: list[IcpResult] = []
    decisions: list[SwitchDecision] = []
    for _ in range(cfg.hybrid_iterations):
        e, depth = mve_with_render(scene.depth, scene.mask, model.mesh, pose, scene.cam, model.diameter, cfg.vsd)
        decision = dynamic_switch(e, cfg.alpha)
        if force_method is not None:
            decision = SwitchDecision(force_method, e)
        decisions.append(decision)
        if decision.method == "projective":
            view = (
                ModelView.from_depth(depth, scene.cam, pose)
                if depth is not None
                else ModelView(np.zeros((0, 3)), np.zeros((0, 3)), pose)
            )
            res = run_cascading_icp(model, scene, pose, "projective", cfg.cascade, assoc_cfg, view)
        else:
            res = run_icp(model, scene, pose, "nn", "point_to_point", cfg.nn_icp, assoc_cfg)
        stages.append(res)
        pose = res.pose

    trace = [t for s in stages for t in s.trace]
    return IcpResult(pose, trace, stages[-1].status, stages=stages, decisions=decisions)
