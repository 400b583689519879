"""Correspondence search between a posed object model and a scene.

Two schemes are provided: nearest-neighbour matching against a k-d tree of
the scene cloud, and projective matching that drops each model vertex into
the scene's vertex map through the pinhole model.  Both apply the same
distance (``tau_max``) and normal-compatibility (``theta_max``) gates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .geometry import (
    CameraIntrinsics,
    NormalMap,
    OrientedPointCloud,
    TriangleMesh,
    VertexMap,
    backproject,
    compute_normals,
    mesh_diameter,
    oriented_cloud,
    render_depth,
    sample_mesh_points,
)
from .se3 import Pose

DEFAULT_THETA_MAX = math.radians(60.0)
DEFAULT_TAU_FRACTION = 0.25


@dataclass(frozen=True)
class AssociationConfig:
    tau_max: float
    theta_max: float = DEFAULT_THETA_MAX

    def __post_init__(self) -> None:
        if self.tau_max <= 0:
            raise ValueError("tau_max must be positive")
        if not 0 < self.theta_max <= math.pi:
            raise ValueError("theta_max must lie in (0, pi]")

    @classmethod
    def for_diameter(cls, diameter: float, theta_max: float = DEFAULT_THETA_MAX) -> AssociationConfig:
        return cls(DEFAULT_TAU_FRACTION * diameter, theta_max)


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Matched pairs stored column-wise.

    ``o``/``m`` are model points/normals, ``c``/``n`` the matched scene
    points/normals; row ``i`` of each array forms one correspondence.
    """

    o: NDArray[np.float64]
    m: NDArray[np.float64]
    c: NDArray[np.float64]
    n: NDArray[np.float64]
    candidates_considered: int

    def __len__(self) -> int:
        return len(self.o)

    def transformed(self, pose: Pose) -> CorrespondenceSet:
        """Model side moved by ``pose``; scene side untouched."""
        return CorrespondenceSet(pose.apply(self.o), pose.rotate(self.m), self.c, self.n, self.candidates_considered)

    def pairs(self):
        return zip(self.o, self.m, self.c, self.n)

    @classmethod
    def empty(cls, candidates: int = 0) -> CorrespondenceSet:
        z = np.zeros((0, 3))
        return cls(z, z, z, z, candidates)


class SpatialIndex:
    """Exact nearest-neighbour queries over a point cloud.

    Equal distances resolve to the lowest scene index.
    """

    def __init__(self, cloud: OrientedPointCloud):
        self.cloud = cloud
        # sliding-midpoint splits without node compaction query organised
        # depth-image clouds several times faster; results stay exact
        self._tree = cKDTree(cloud.points, compact_nodes=False, balanced_tree=False)

    def __len__(self) -> int:
        return len(self.cloud)

    def query(
        self, points: NDArray[np.float64], max_distance: float = np.inf
    ) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
        """Nearest scene point per query row.

        Rows with no scene point within ``max_distance`` get distance ``inf``
        and index ``-1``.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(self.cloud) == 1:
            d, i = self._tree.query(points, k=1, distance_upper_bound=max_distance)
            d, i = np.atleast_1d(d), np.atleast_1d(i)
        else:
            d2, i2 = self._tree.query(points, k=2, distance_upper_bound=max_distance)
            d, i = d2[:, 0].copy(), i2[:, 0].copy()
            # possible ties (up to rounding) are settled over the closed ball
            tie = np.flatnonzero(np.isfinite(d) & (d2[:, 1] <= d * (1.0 + 1e-12)))
            for row in tie:
                d[row], i[row] = self._resolve_tie(points[row], d[row])
        i = np.where(np.isfinite(d), i, -1).astype(np.int64)
        return d, i

    def _resolve_tie(self, q: NDArray[np.float64], radius: float) -> tuple[float, int]:
        cand = np.array(sorted(self._tree.query_ball_point(q, radius * (1.0 + 1e-12) + 1e-300)), dtype=np.int64)
        dist2 = ((self.cloud.points[cand] - q) ** 2).sum(axis=1)
        best = int(np.argmin(dist2))
        return math.sqrt(dist2[best]), int(cand[best])


@dataclass(frozen=True, eq=False)
class ModelView:
    """Object-frame points and normals of a model render (its vertex map)."""

    points: NDArray[np.float64]
    normals: NDArray[np.float64]
    render_pose: Pose

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def columns(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """``(3, N)`` points and normals, one contiguous row per coordinate."""
        return np.ascontiguousarray(self.points.T), np.ascontiguousarray(self.normals.T)

    @classmethod
    def from_maps(cls, vmap: VertexMap, nmap: NormalMap, render_pose: Pose) -> ModelView:
        cloud = oriented_cloud(vmap, nmap)
        inv = render_pose.inverse()
        return cls(inv.apply(cloud.points), inv.rotate(cloud.normals), render_pose)

    @classmethod
    def from_depth(cls, depth: NDArray[np.float64], cam: CameraIntrinsics, render_pose: Pose) -> ModelView:
        vmap = backproject(depth, cam)
        return cls.from_maps(vmap, compute_normals(vmap), render_pose)

    @classmethod
    def render(cls, mesh: TriangleMesh, pose: Pose, cam: CameraIntrinsics) -> ModelView:
        depth, _ = render_depth(mesh, pose, cam)
        return cls.from_depth(depth, cam, pose)


@dataclass(eq=False)
class ObjectModel:
    """Object model ``O``: mesh plus uniform surface samples."""

    mesh: TriangleMesh
    cloud: OrientedPointCloud
    diameter: float

    @classmethod
    def from_mesh(cls, mesh: TriangleMesh, n_points: int = 2000, seed: int = 0) -> ObjectModel:
        cloud = sample_mesh_points(mesh, n_points, np.random.default_rng(seed))
        return cls(mesh, cloud, mesh_diameter(mesh))


@dataclass(eq=False)
class Scene:
    """Segmented depth image ``C`` with its organised and flat views."""

    depth: NDArray[np.float64]
    mask: NDArray[np.bool_]
    cam: CameraIntrinsics
    vmap: VertexMap = field(init=False)
    nmap: NormalMap = field(init=False)

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool) & (self.depth > 0)
        self.vmap = backproject(self.depth, self.cam, self.mask)
        self.nmap = compute_normals(self.vmap)

    @cached_property
    def valid(self) -> NDArray[np.bool_]:
        return self.vmap.valid & self.nmap.valid

    @cached_property
    def cloud(self) -> OrientedPointCloud:
        return oriented_cloud(self.vmap, self.nmap)

    @cached_property
    def flat_valid(self) -> NDArray[np.bool_]:
        return self.valid.reshape(-1)

    @cached_property
    def columns(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """``(3, H*W)`` points and normals, one contiguous row per coordinate."""
        pts = np.ascontiguousarray(self.vmap.points.reshape(-1, 3).T)
        nrm = np.ascontiguousarray(self.nmap.normals.reshape(-1, 3).T)
        return pts, nrm

    @cached_property
    def index(self) -> SpatialIndex:
        return SpatialIndex(self.cloud)


def _rows(a: NDArray, idx: NDArray[np.int64]) -> NDArray:
    # np.take is several times faster than fancy indexing for (N, 3) rows
    return np.take(a, idx, axis=0)


def _gate(o_t, m_t, c, n, cfg: AssociationConfig) -> NDArray[np.bool_]:
    d = o_t - c
    dist2 = np.einsum("ij,ij->i", d, d)
    cos = np.einsum("ij,ij->i", m_t, n)
    return (dist2 <= cfg.tau_max**2) & (cos >= math.cos(cfg.theta_max) - 1e-12)


def nn_associate(
    model: OrientedPointCloud,
    scene_index: SpatialIndex,
    t_current: Pose,
    cfg: AssociationConfig,
    moved: bool = False,
) -> CorrespondenceSet:
    """Match every posed model point to its nearest scene point.

    The model side is returned in the model frame, or already moved by
    ``t_current`` when ``moved`` is set.
    """
    if len(model) == 0 or len(scene_index) == 0:
        return CorrespondenceSet.empty(len(model))
    o_t = t_current.apply(model.points)
    m_t = t_current.rotate(model.normals)
    # the distance bound only prunes pairs the tau gate would reject anyway
    _, j = scene_index.query(o_t, max_distance=cfg.tau_max * (1.0 + 1e-9))
    found = np.flatnonzero(j >= 0)
    j = j[found]
    c = _rows(scene_index.cloud.points, j)
    n = _rows(scene_index.cloud.normals, j)
    keep = _gate(_rows(o_t, found), _rows(m_t, found), c, n, cfg)
    sel = found[keep]
    c, n = c[keep], n[keep]
    if moved:
        return CorrespondenceSet(_rows(o_t, sel), _rows(m_t, sel), c, n, len(model))
    return CorrespondenceSet(_rows(model.points, sel), _rows(model.normals, sel), c, n, len(model))


def project_to_pixels(points: NDArray[np.float64], cam: CameraIntrinsics) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.bool_]]:
    """Nearest-pixel projection; the flag marks points landing inside the image."""
    z = points[:, 2]
    front = z > 0
    zs = np.where(front, z, 1.0)
    uf = np.floor(cam.fx * points[:, 0] / zs + cam.cx + 0.5)
    vf = np.floor(cam.fy * points[:, 1] / zs + cam.cy + 0.5)
    inside = front & (uf >= 0) & (uf < cam.width) & (vf >= 0) & (vf < cam.height)
    u = np.where(inside, uf, 0).astype(np.int64)
    v = np.where(inside, vf, 0).astype(np.int64)
    return u, v, inside


def projective_associate(
    model_view: ModelView, scene: Scene, t_current: Pose, cfg: AssociationConfig, moved: bool = False
) -> CorrespondenceSet:
    """Match each model vertex to the scene pixel it projects onto.

    ``moved`` has the same meaning as in :func:`nn_associate`.
    """
    cam = scene.cam
    r, t = t_current.rotation, t_current.translation
    # work on (3, N) rows: every step below is a contiguous 1-D operation
    p_cols, m_cols = model_view.columns
    x, y, z = r @ p_cols + t[:, None]
    front = np.flatnonzero(z > 0)
    zf = z[front]
    uf = np.floor(cam.fx * x[front] / zf + cam.cx + 0.5)
    vf = np.floor(cam.fy * y[front] / zf + cam.cy + 0.5)
    inside = (uf >= 0) & (uf < cam.width) & (vf >= 0) & (vf < cam.height)
    cand = front[inside]
    pix = vf[inside].astype(np.int64) * cam.width + uf[inside].astype(np.int64)
    on_valid = scene.flat_valid[pix]
    cand, pix = cand[on_valid], pix[on_valid]

    s_pts, s_nrm = scene.columns
    c = s_pts.take(pix, axis=1)
    n = s_nrm.take(pix, axis=1)
    o = np.stack([x.take(cand), y.take(cand), z.take(cand)])
    m = r @ m_cols.take(cand, axis=1)
    d = o - c
    dist2 = (d * d).sum(axis=0)
    cos = (m * n).sum(axis=0)
    keep = np.flatnonzero((dist2 <= cfg.tau_max**2) & (cos >= math.cos(cfg.theta_max) - 1e-12))

    c, n = c.take(keep, axis=1).T, n.take(keep, axis=1).T
    if moved:
        o, m = o.take(keep, axis=1).T, m.take(keep, axis=1).T
    else:
        sel = cand[keep]
        o, m = _rows(model_view.points, sel), _rows(model_view.normals, sel)
    return CorrespondenceSet(*(np.ascontiguousarray(a) for a in (o, m, c, n)), len(model_view))
