"""The four benchmark experiments and their CSV report.

Every variant of one comparison point sees the same depth image and
initialisation; the ``scene_hash`` column records a digest of both so this
can be checked after the fact.
"""

from __future__ import annotations

import csv
import hashlib
import io
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..association import ObjectModel, Scene
from ..errors import HybridIcpError
from ..geometry import (
    CameraIntrinsics,
    DepthNoiseModel,
    TriangleMesh,
    add_depth_noise,
    corrupt_mesh,
    load_mesh,
    mesh_diameter,
)
from ..geometry.render import render_depth
from ..hybrid import CascadeConfig, HybridConfig, run_cascading_icp, run_hybrid_icp
from ..se3 import (
    MEAN_ROTATION_ERROR,
    MEAN_TRANSLATION_ERROR,
    Pose,
    apply_perturbation,
    sample_perturbation,
)
from ..sequential import FusionMethod, TrajectoryConfig, simulate_trajectory
from ..solvers import IcpResult, run_icp
from ..vsd import DistanceMap, distance_map_from_depth, pose_vsd
from .config import SINGLE_IMAGE_VARIANTS, ExperimentConfig
from .sampling import footprints_disjoint, rejection_sample_bins, sample_initialisation, sample_object_pose

SCHEMA_ID = "hybrid-icp-report/1"
COLUMNS = (
    "experiment",
    "object",
    "variant",
    "level",
    "pre_vsd",
    "post_vsd",
    "elapsed_seconds",
    "status",
    "seed",
    "scene_hash",
)


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    object: str
    variant: str
    level: str
    pre_vsd: float
    post_vsd: float
    elapsed_seconds: float
    status: str
    seed: int
    scene_hash: str

    def as_record(self) -> list[str]:
        return [
            self.experiment,
            self.object,
            self.variant,
            self.level,
            f"{self.pre_vsd:.6f}",
            f"{self.post_vsd:.6f}",
            f"{self.elapsed_seconds:.6f}",
            self.status,
            str(self.seed),
            self.scene_hash,
        ]


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    # wall-clock seconds per variant, kept even under fixed timing
    wall_times: dict[str, list[float]]
    unfilled: dict[str, list[int]]
    # total seconds spent per variant, including its post-VSD evaluation
    variant_seconds: dict[str, float] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMA_ID}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow(r.as_record())
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


@dataclass(frozen=True, eq=False)
class Scenario:
    """One comparison point: a scene, its ground truth and an initialisation."""

    gt: Pose
    init: Pose
    depth: np.ndarray
    mask: np.ndarray
    pre_vsd: float
    gt_render: tuple[DistanceMap, np.ndarray] | None = None

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.depth).tobytes())
        h.update(self.init.matrix().tobytes())
        return h.hexdigest()[:16]


@dataclass
class ObjectAssets:
    name: str
    mesh: TriangleMesh
    diameter: float


def load_objects(names: tuple[str, ...]) -> list[ObjectAssets]:
    out = []
    for spec in names:
        mesh = load_mesh(spec)
        name = Path(spec).stem if ("/" in spec or "." in spec) else spec
        out.append(ObjectAssets(name, mesh, mesh_diameter(mesh)))
    return out


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def run_single_image_variant(
    variant: str,
    model: ObjectModel,
    scene: Scene,
    t_init: Pose,
    hybrid_cfg: HybridConfig | None = None,
) -> IcpResult:
    hybrid_cfg = hybrid_cfg or HybridConfig()
    assoc, algo = SINGLE_IMAGE_VARIANTS[variant]
    if algo == "hybrid":
        return run_hybrid_icp(model, scene, t_init, hybrid_cfg)
    if algo.startswith("cascade_"):
        order = "point_plane" if algo == "cascade_point_plane" else "plane_point"
        cfg = CascadeConfig(
            hybrid_cfg.cascade.shrink_tolerance, order, hybrid_cfg.cascade.stage_icp, hybrid_cfg.cascade.require_both
        )
        return run_cascading_icp(model, scene, t_init, assoc, cfg)
    return run_icp(model, scene, t_init, assoc, algo)


class _Runner:
    def __init__(self, cfg: ExperimentConfig, cam: CameraIntrinsics, progress: Callable[[str], None] | None):
        self.cfg = cfg
        self.cam = cam
        self.progress = progress or (lambda msg: None)
        self.hybrid_cfg = HybridConfig(alpha=cfg.alpha)
        self.rows: list[ReportRow] = []
        self.wall: dict[str, list[float]] = defaultdict(list)
        self.spent: dict[str, float] = defaultdict(float)
        self.unfilled: dict[str, list[int]] = {}

    def charged(self, wall: float, calls: int = 1) -> float:
        return wall if self.cfg.fixed_seconds is None else self.cfg.fixed_seconds * calls

    def make_scenario(self, obj: ObjectAssets, gt: Pose, init: Pose, noise: DepthNoiseModel | None = None, rng=None) -> Scenario:
        depth, mask = render_depth(obj.mesh, gt, self.cam)
        gt_render = (distance_map_from_depth(depth, self.cam), mask)
        if noise is not None:
            depth = add_depth_noise(depth, noise, rng)
        pre = pose_vsd(obj.mesh, init, gt, self.cam, obj.diameter, gt_render=gt_render)
        return Scenario(gt, init, depth, mask, pre, gt_render)

    def run_trials(self, obj: ObjectAssets, model: ObjectModel, scenario: Scenario, level: str) -> None:
        scene = Scene(scenario.depth, scenario.mask, self.cam)
        digest = scenario.digest()
        for variant in self.cfg.variants:
            t0 = time.perf_counter()
            try:
                res = run_single_image_variant(variant, model, scene, scenario.init, self.hybrid_cfg)
                wall = time.perf_counter() - t0
                pose, status = res.pose, res.status
            except HybridIcpError as exc:
                wall = time.perf_counter() - t0
                pose, status = scenario.init, f"error:{type(exc).__name__}"
            post = pose_vsd(obj.mesh, pose, scenario.gt, self.cam, obj.diameter, gt_render=scenario.gt_render)
            self.spent[variant] += time.perf_counter() - t0
            self.wall[variant].append(wall)
            self.rows.append(
                ReportRow(
                    self.cfg.experiment,
                    obj.name,
                    variant,
                    level,
                    scenario.pre_vsd,
                    post,
                    self.charged(wall),
                    status,
                    self.cfg.seed,
                    digest,
                )
            )

    def model_for(self, obj: ObjectAssets, oi: int, level: int = 0) -> ObjectModel:
        mesh = corrupt_mesh(obj.mesh, level, _rng(self.cfg.seed, oi, 1000 + level)) if level else obj.mesh
        return ObjectModel.from_mesh(mesh, self.cfg.model_points, seed=self.cfg.seed % 2**32)

    def fixed_perturbation_init(self, gt: Pose, rng: np.random.Generator) -> Pose:
        return apply_perturbation(gt, sample_perturbation(MEAN_TRANSLATION_ERROR, MEAN_ROTATION_ERROR, rng))

    # ----------------------------------------------------------------------

    def init_noise(self, objects: list[ObjectAssets]) -> None:
        for oi, obj in enumerate(objects):
            model = self.model_for(obj, oi)

            def sampler(rng, obj=obj):
                gt = sample_object_pose(obj.diameter, "single_image", rng, obj.mesh.center())
                init = sample_initialisation(gt, rng)
                if footprints_disjoint(obj.mesh, gt, init, self.cam):
                    return (gt, init, None), 1.0
                sc = self.make_scenario(obj, gt, init)
                return (gt, init, sc), sc.pre_vsd

            binned = rejection_sample_bins(sampler, self.cfg.bins, self.cfg.samples_per_object, _rng(self.cfg.seed, oi))
            if binned.unfilled:
                self.unfilled[obj.name] = binned.unfilled
            self.progress(f"{obj.name}: {binned.attempts} draws for {len(binned.flat())} scenarios")
            for b, (gt, init, sc) in binned.flat():
                sc = sc or self.make_scenario(obj, gt, init)
                self.run_trials(obj, model, sc, str(b))

    def depth_noise(self, objects: list[ObjectAssets]) -> None:
        levels = self.cfg.effective_levels
        for oi, obj in enumerate(objects):
            model = self.model_for(obj, oi)
            rng = _rng(self.cfg.seed, oi)
            for si in range(self.cfg.samples_per_object):
                gt = sample_object_pose(obj.diameter, "single_image", rng, obj.mesh.center())
                init = self.fixed_perturbation_init(gt, rng)
                for li, x in enumerate(levels):
                    noise = DepthNoiseModel.gaussian(x) if x > 0 else DepthNoiseModel()
                    sc = self.make_scenario(obj, gt, init, noise, _rng(self.cfg.seed, oi, si, li))
                    self.run_trials(obj, model, sc, _level(x))
            self.progress(f"{obj.name}: done")

    def model_noise(self, objects: list[ObjectAssets]) -> None:
        levels = [int(x) for x in self.cfg.effective_levels]
        for oi, obj in enumerate(objects):
            models = {lv: self.model_for(obj, oi, lv) for lv in levels}
            rng = _rng(self.cfg.seed, oi)
            for _ in range(self.cfg.samples_per_object):
                gt = sample_object_pose(obj.diameter, "single_image", rng, obj.mesh.center())
                sc = self.make_scenario(obj, gt, self.fixed_perturbation_init(gt, rng))
                for lv in levels:
                    self.run_trials(obj, models[lv], sc, str(lv))
            self.progress(f"{obj.name}: done")

    def sequential(self, objects: list[ObjectAssets]) -> None:
        cfg = self.cfg
        traj = TrajectoryConfig(cfg.start_distance, cfg.velocity, cfg.stop_distance, cfg.fixed_seconds)
        noise = DepthNoiseModel.stereo()
        for oi, obj in enumerate(objects):
            model = self.model_for(obj, oi, cfg.reconstruction_level)

            def sampler(rng, obj=obj):
                gt = sample_object_pose(obj.diameter, "trajectory", rng, obj.mesh.center(), cfg.start_distance)
                init = sample_initialisation(gt, rng)
                if footprints_disjoint(obj.mesh, gt, init, self.cam):
                    return (gt, init), 1.0
                return (gt, init), pose_vsd(obj.mesh, init, gt, self.cam, obj.diameter)

            binned = rejection_sample_bins(sampler, cfg.bins, cfg.samples_per_object, _rng(cfg.seed, oi))
            if binned.unfilled:
                self.unfilled[obj.name] = binned.unfilled
            for ti, (b, (gt, init)) in enumerate(binned.flat()):
                digest = hashlib.sha256(gt.matrix().tobytes() + init.matrix().tobytes()).hexdigest()[:16]
                for variant in cfg.variants:
                    icp, _, method = variant.partition("/")
                    t0 = time.perf_counter()
                    rep = simulate_trajectory(
                        obj.mesh,
                        self.cam,
                        icp,
                        FusionMethod(method),
                        traj,
                        noise,
                        gt,
                        init,
                        _rng(cfg.seed, oi, ti, 7),
                        model,
                        self.hybrid_cfg,
                    )
                    wall = time.perf_counter() - t0
                    failed = sum(s.status != "ok" for s in rep.steps)
                    status = f"ok:{len(rep.steps)}_steps" if not failed else f"partial:{failed}_failed_of_{len(rep.steps)}"
                    self.wall[variant].append(wall)
                    self.rows.append(
                        ReportRow(
                            cfg.experiment,
                            obj.name,
                            variant,
                            str(b),
                            rep.pre_trajectory_vsd,
                            rep.final_vsd,
                            self.charged(wall, len(rep.steps)),
                            status,
                            cfg.seed,
                            digest,
                        )
                    )
            self.progress(f"{obj.name}: done")


def _level(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def run_experiment(
    cfg: ExperimentConfig,
    cam: CameraIntrinsics | None = None,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Run ``cfg.experiment`` over every object and variant; rows are in trial order."""
    runner = _Runner(cfg, cam or CameraIntrinsics.default(), progress)
    objects = load_objects(cfg.meshes)
    getattr(runner, cfg.experiment)(objects)
    return ExperimentReport(runner.rows, dict(runner.wall), runner.unfilled, dict(runner.spent))


# --------------------------------------------------------------------------
# summaries
# --------------------------------------------------------------------------


def _level_key(level: str):
    try:
        return (0, float(level))
    except ValueError:
        return (1, level)


def summary_table(rows: list[ReportRow]) -> str:
    """Mean post-VSD per level (rows) and variant (columns)."""
    variants = list(dict.fromkeys(r.variant for r in rows))
    levels = sorted({r.level for r in rows}, key=_level_key)
    acc: dict[tuple[str, str], list[float]] = defaultdict(list)
    pre: dict[str, list[float]] = defaultdict(list)
    for r in rows:
        acc[(r.level, r.variant)].append(r.post_vsd)
        pre[r.level].append(r.pre_vsd)
    width = max([len(v) for v in variants] + [8])
    lines = ["level  pre_vsd  " + "  ".join(v.rjust(width) for v in variants)]
    for lv in levels:
        cells = []
        for v in variants:
            vals = acc.get((lv, v))
            cells.append((f"{np.mean(vals):.3f}" if vals else "-").rjust(width))
        lines.append(f"{lv:>5}  {np.mean(pre[lv]):7.3f}  " + "  ".join(cells))
    return "\n".join(lines)


def timing_table(wall_times: dict[str, list[float]]) -> str:
    """Per-call wall time per variant, fastest first."""
    stats = sorted(((float(np.mean(t)), float(np.std(t)), v) for v, t in wall_times.items() if t))
    width = max([len(v) for _, _, v in stats] + [7])
    lines = [f"{'variant'.ljust(width)}  time (s)"]
    lines += [f"{v.ljust(width)}  {m:.3f} +- {s:.3f}" for m, s, v in stats]
    return "\n".join(lines)


def mean_post_vsd(rows: list[ReportRow]) -> dict[tuple[str, str], float]:
    """``{(level, variant): mean post-VSD}``."""
    acc: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in rows:
        acc[(r.level, r.variant)].append(r.post_vsd)
    return {k: float(np.mean(v)) for k, v in acc.items()}
