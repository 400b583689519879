"""Incremental-transform solvers and the generic ICP loop.

Each iteration associates the original model points against the scene at
the current estimate ``T^k``, moves the model side by ``T^k``, solves for an
increment ``T_k`` and updates ``T^{k+1} = T_k T^k``.  The loss recorded for
iteration ``k`` is the mean metric residual of its correspondences at
``T^k`` (before the update).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from numpy.typing import NDArray

from .association import (
    AssociationConfig,
    CorrespondenceSet,
    ModelView,
    ObjectModel,
    Scene,
    nn_associate,
    projective_associate,
)
from .errors import DegenerateConfiguration, EmptyRender, SingularSystem
from .se3 import Pose, exp_map

Assoc = Literal["nn", "projective"]
Metric = Literal["point_to_point", "point_to_plane"]

CONVERGED = "converged"
MAX_ITER = "max_iter"
DIVERGED = "diverged_rolled_back"
NO_CORRESPONDENCES = "no_correspondences"

# eigenvalues of the point-to-plane normal matrix below this fraction of the
# largest are treated as unconstrained directions
PLANE_RCOND = 1e-12


@dataclass(frozen=True)
class IcpConfig:
    max_iter: int = 50
    rel_loss_tol: float = 1e-6
    # loss changes below this (m^2) count as converged; relative changes
    # between losses at rounding level are meaningless
    abs_loss_tol: float = 1e-24
    min_correspondences: int = 10

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.rel_loss_tol <= 0:
            raise ValueError("rel_loss_tol must be positive")
        if self.abs_loss_tol < 0:
            raise ValueError("abs_loss_tol must be non-negative")
        if self.min_correspondences < 3:
            raise ValueError("min_correspondences must be >= 3")


@dataclass(frozen=True, eq=False)
class IterationTrace:
    iteration: int
    mean_loss: float
    correspondence_count: int
    pose_after: Pose
    metric: str = ""
    event: str = ""


@dataclass(eq=False)
class IcpResult:
    pose: Pose
    trace: list[IterationTrace]
    status: str
    stages: list[IcpResult] = field(default_factory=list)
    decisions: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        losses = [t.mean_loss for t in self.trace if not t.event]
        return losses[-1] if losses else math.nan


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------


def point_to_point_loss(cs: CorrespondenceSet) -> float:
    if len(cs) == 0:
        return 0.0
    d = cs.o - cs.c
    return float(np.einsum("ij,ij->", d, d)) / len(cs)


def point_to_plane_loss(cs: CorrespondenceSet) -> float:
    if len(cs) == 0:
        return 0.0
    r = np.einsum("ij,ij->i", cs.o - cs.c, cs.n)
    return float(r @ r) / len(cs)


def solve_point_to_point(cs: CorrespondenceSet) -> Pose:
    """Closed-form rigid fit of ``o`` onto ``c`` (Kabsch with reflection fix)."""
    if len(cs) < 3:
        raise DegenerateConfiguration(f"need >= 3 pairs, got {len(cs)}")
    mu_o = cs.o.mean(axis=0)
    mu_c = cs.c.mean(axis=0)
    h = (cs.o - mu_o).T @ (cs.c - mu_c)
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateConfiguration("cross-covariance has rank < 2")
    d = np.eye(3)
    d[2, 2] = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    r = vt.T @ d @ u.T
    return Pose(r, mu_c - r @ mu_o)


def point_to_plane_system(cs: CorrespondenceSet) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Linearised rows ``A`` and targets ``b`` for twist ``[rho, phi]``."""
    o, n = cs.o, cs.n
    a = np.empty((len(cs), 6))
    a[:, :3] = n
    # o x n, written out (np.cross is slow on tall arrays)
    a[:, 3] = o[:, 1] * n[:, 2] - o[:, 2] * n[:, 1]
    a[:, 4] = o[:, 2] * n[:, 0] - o[:, 0] * n[:, 2]
    a[:, 5] = o[:, 0] * n[:, 1] - o[:, 1] * n[:, 0]
    b = np.einsum("ij,ij->i", cs.c - o, n)
    return a, b


def solve_point_to_plane(cs: CorrespondenceSet) -> Pose:
    """One linearised point-to-plane step, minimum-norm in unconstrained directions."""
    if len(cs) == 0:
        raise SingularSystem("no correspondences")
    a, b = point_to_plane_system(cs)
    h = a.T @ a
    g = a.T @ b
    evals, evecs = np.linalg.eigh(h)
    top = evals[-1]
    if not top > 0:
        raise SingularSystem("normal equations are zero")
    keep = evals > PLANE_RCOND * top
    x = evecs[:, keep] @ ((evecs[:, keep].T @ g) / evals[keep])
    return exp_map(x)


# --------------------------------------------------------------------------
# ICP loop
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceGuard:
    """Stage divergence tests used by Cascading ICP.

    With ``require_both`` the correspondence count must stay within
    ``shrink_tolerance`` of both the first and the previous iteration;
    otherwise falling short of either reference alone is tolerated.
    """

    shrink_tolerance: float = 0.05
    require_both: bool = True
    # loss increases up to this size (m^2) are rounding, not divergence
    loss_floor: float = 1e-24

    def check(self, count: int, loss: float, first_count: int | None, prev_count: int | None, prev_loss: float | None) -> str:
        if count == 0:
            return "zero_correspondences"
        if first_count is None:
            return ""
        keep = 1.0 - self.shrink_tolerance
        below_first = count < keep * first_count
        below_prev = count < keep * prev_count
        dropped = (below_first or below_prev) if self.require_both else (below_first and below_prev)
        if dropped:
            return "correspondence_drop"
        if loss > prev_loss + self.loss_floor:
            return "loss_increase"
        return ""


def _associator(model: ObjectModel, scene: Scene, assoc: Assoc, cfg: AssociationConfig, model_view: ModelView | None) -> Callable[[Pose], CorrespondenceSet]:
    if assoc == "nn":
        index = scene.index if len(scene.cloud) else None
        if index is None:
            return lambda pose: CorrespondenceSet.empty(len(model.cloud))
        return lambda pose: nn_associate(model.cloud, index, pose, cfg, moved=True)
    if assoc == "projective":
        if model_view is None:
            raise ValueError("projective association needs a model view")
        return lambda pose: projective_associate(model_view, scene, pose, cfg, moved=True)
    raise ValueError(f"unknown association {assoc!r}")


def render_model_view(model: ObjectModel, pose: Pose, scene: Scene) -> ModelView | None:
    """Model vertex map rendered at ``pose``; ``None`` when nothing is visible."""
    try:
        return ModelView.render(model.mesh, pose, scene.cam)
    except EmptyRender:
        return None


def run_icp(
    model: ObjectModel,
    scene: Scene,
    t_init: Pose,
    assoc: Assoc,
    metric: Metric,
    cfg: IcpConfig | None = None,
    assoc_cfg: AssociationConfig | None = None,
    model_view: ModelView | None = None,
    guard: DivergenceGuard | None = None,
) -> IcpResult:
    """Generic ICP from ``t_init``.

    For projective association the model vertex map is rendered at
    ``t_init`` unless ``model_view`` is given.  With a ``guard``, a diverging
    iteration restores the estimate from before the previous update.
    """
    if metric == "point_to_point":
        solve, loss_fn, min_pairs = solve_point_to_point, point_to_point_loss, 3
    elif metric == "point_to_plane":
        solve, loss_fn, min_pairs = solve_point_to_plane, point_to_plane_loss, 6
    else:
        raise ValueError(f"unknown metric {metric!r}")
    cfg = cfg or IcpConfig()
    assoc_cfg = assoc_cfg or AssociationConfig.for_diameter(model.diameter)

    if assoc == "projective" and model_view is None:
        model_view = render_model_view(model, t_init, scene)
        if model_view is None:
            model_view = ModelView(np.zeros((0, 3)), np.zeros((0, 3)), t_init)
    associate = _associator(model, scene, assoc, assoc_cfg, model_view)

    pose = t_init
    prev_pose = t_init
    trace: list[IterationTrace] = []
    first_count = prev_count = None
    prev_loss = None
    status = MAX_ITER
    for k in range(1, cfg.max_iter + 1):
        moved = associate(pose)
        count = len(moved)
        loss = loss_fn(moved)

        if guard is not None:
            event = guard.check(count, loss, first_count, prev_count, prev_loss)
            if event:
                pose = prev_pose
                trace.append(IterationTrace(k, loss, count, pose, metric, event))
                status = DIVERGED
                break
        if count < max(cfg.min_correspondences, min_pairs):
            trace.append(IterationTrace(k, loss, count, pose, metric, "too_few_correspondences"))
            status = DIVERGED if guard is not None else NO_CORRESPONDENCES
            pose = prev_pose if guard is not None else pose
            break
        try:
            step = solve(moved)
        except (DegenerateConfiguration, SingularSystem):
            trace.append(IterationTrace(k, loss, count, pose, metric, "solver_failure"))
            status = DIVERGED
            break

        new_pose = step @ pose
        trace.append(IterationTrace(k, loss, count, new_pose, metric))
        done = prev_loss is not None and (
            abs(loss - prev_loss) <= cfg.abs_loss_tol or abs(loss - prev_loss) < cfg.rel_loss_tol * prev_loss
        )
        prev_pose, pose = pose, new_pose
        if done:
            status = CONVERGED
            break
        if first_count is None:
            first_count = count
        prev_count, prev_loss = count, loss
    return IcpResult(pose, trace, status)
