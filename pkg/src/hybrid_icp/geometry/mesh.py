"""Triangle meshes, built-in primitives and surface sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import ConvexHull, QhullError

from ..se3 import Pose


def _readonly(a: ArrayLike, dtype, ncols: int) -> NDArray:
    arr = np.array(a, dtype=dtype).reshape(-1, ncols)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OrientedPointCloud:
    points: NDArray[np.float64]
    normals: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", _readonly(self.points, np.float64, 3))
        object.__setattr__(self, "normals", _readonly(self.normals, np.float64, 3))
        if len(self.points) != len(self.normals):
            raise ValueError("points and normals must have equal length")

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, pose: Pose) -> OrientedPointCloud:
        return OrientedPointCloud(pose.apply(self.points), pose.rotate(self.normals))


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh in the object frame (meters)."""

    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    vertex_normals: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        v = _readonly(self.vertices, np.float64, 3)
        f = _readonly(self.triangles, np.int64, 3)
        if len(f) == 0:
            raise ValueError("mesh needs at least one triangle")
        if f.min() < 0 or f.max() >= len(v):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)
        if self.vertex_normals is None:
            n = vertex_normals(v, f)
        else:
            n = np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(v):
                raise ValueError("need one normal per vertex")
            n = _normalize_rows(n)
        object.__setattr__(self, "vertex_normals", _readonly(n, np.float64, 3))

    @property
    def corners(self) -> NDArray[np.float64]:
        """``(M, 3, 3)`` triangle corner positions."""
        return self.vertices[self.triangles]

    def face_areas(self) -> NDArray[np.float64]:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def center(self) -> NDArray[np.float64]:
        """Centre of the axis-aligned bounding box."""
        return 0.5 * (self.vertices.min(axis=0) + self.vertices.max(axis=0))

    def transformed(self, pose: Pose) -> TriangleMesh:
        return TriangleMesh(pose.apply(self.vertices), self.triangles, pose.rotate(self.vertex_normals))


def _normalize_rows(n: NDArray[np.float64]) -> NDArray[np.float64]:
    norms = np.linalg.norm(n, axis=1, keepdims=True)
    out = np.zeros_like(n)
    ok = norms[:, 0] > 0
    out[ok] = n[ok] / norms[ok]
    # vertices with no incident area get an arbitrary unit normal
    out[~ok] = (0.0, 0.0, 1.0)
    return out


def vertex_normals(vertices: NDArray[np.float64], triangles: NDArray[np.int64]) -> NDArray[np.float64]:
    """Area-weighted average of incident face normals."""
    c = vertices[triangles]
    fn = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, triangles[:, k], fn)
    return _normalize_rows(acc)


def mesh_diameter(mesh: TriangleMesh) -> float:
    """Largest distance between two vertices (exact)."""
    v = mesh.vertices
    if len(v) < 2:
        return 0.0
    cand = v
    if len(v) > 64:
        try:
            cand = v[ConvexHull(v).vertices]
        except QhullError:
            cand = v
    best = 0.0
    # chunked to bound memory on degenerate (flat) inputs
    step = max(1, 4_000_000 // len(cand))
    for i in range(0, len(cand), step):
        d2 = ((cand[i : i + step, None, :] - cand[None, :, :]) ** 2).sum(-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def sample_mesh_points(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> OrientedPointCloud:
    """Area-weighted uniform surface samples with interpolated normals."""
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.face_areas()
    tri = rng.choice(len(areas), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    idx = mesh.triangles[tri]
    pts = np.einsum("nk,nkj->nj", bary, mesh.vertices[idx])
    nrm = np.einsum("nk,nkj->nj", bary, mesh.vertex_normals[idx])
    return OrientedPointCloud(pts, _normalize_rows(nrm))


def corrupt_mesh(mesh: TriangleMesh, level: int, rng: np.random.Generator) -> TriangleMesh:
    """Stand-in for a noisy reconstruction at noise ``level`` in 0..4.

    Welded vertex positions move along their normal by a bias of
    ``level * 0.5 mm`` plus Gaussian noise with the same standard deviation.
    Normals are recomputed afterwards.
    """
    if not 0 <= level <= 4:
        raise ValueError("level must be in 0..4")
    if level == 0:
        return mesh
    scale = level * 0.5e-3
    keys = np.round(mesh.vertices / 1e-9).astype(np.int64)
    _, group = np.unique(keys, axis=0, return_inverse=True)
    group = group.reshape(-1)
    ngroups = int(group.max()) + 1
    gn = np.zeros((ngroups, 3))
    np.add.at(gn, group, mesh.vertex_normals)
    gn = _normalize_rows(gn)
    offsets = scale + scale * rng.normal(size=ngroups)
    verts = mesh.vertices + (gn * offsets[:, None])[group]
    return TriangleMesh(verts, mesh.triangles, vertex_normals(verts, mesh.triangles))


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def icosphere(radius: float = 0.05, subdivisions: int = 3) -> TriangleMesh:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    v = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    unit = np.array(v)
    return TriangleMesh(unit * radius, np.array(faces), unit)


def box(size: ArrayLike = (0.12, 0.08, 0.06)) -> TriangleMesh:
    """Axis-aligned box centred at the origin; faces carry their own vertices."""
    half = np.asarray(size, dtype=float) / 2.0
    verts, norms, tris = [], [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            n = np.zeros(3)
            n[axis] = sign
            u, w = [a for a in range(3) if a != axis]
            base = len(verts)
            for su, sw in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                p = np.zeros(3)
                p[axis] = sign * half[axis]
                p[u] = su * half[u]
                p[w] = sw * half[w]
                verts.append(p)
                norms.append(n)
            quad = [(base, base + 1, base + 2), (base, base + 2, base + 3)]
            for a, b, c in quad:
                fn = np.cross(verts[b] - verts[a], verts[c] - verts[a])
                tris.append((a, b, c) if fn @ n > 0 else (a, c, b))
    return TriangleMesh(np.array(verts), np.array(tris), np.array(norms))


def cylinder(radius: float = 0.04, height: float = 0.14, segments: int = 48) -> TriangleMesh:
    """Closed cylinder along z, centred at the origin."""
    ang = np.arange(segments) * (2.0 * math.pi / segments)
    ring = np.stack([np.cos(ang), np.sin(ang), np.zeros(segments)], axis=1)
    h = height / 2.0
    verts = [ring * radius + (0, 0, -h), ring * radius + (0, 0, h)]
    norms = [ring, ring]
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [(i, j, segments + j), (i, segments + j, segments + i)]
    off = 2 * segments
    for cap, z, nz in ((0, -h, -1.0), (1, h, 1.0)):
        base = off + cap * (segments + 1)
        verts.append(np.vstack([[0.0, 0.0, z], ring * radius + (0, 0, z)]))
        norms.append(np.tile([0.0, 0.0, nz], (segments + 1, 1)))
        for i in range(segments):
            a, b = base + 1 + i, base + 1 + (i + 1) % segments
            tris.append((base, a, b) if nz > 0 else (base, b, a))
    return TriangleMesh(np.vstack(verts), np.array(tris), np.vstack(norms))


def plate(width: float = 0.15, depth: float = 0.10, thickness: float = 0.004) -> TriangleMesh:
    """Thin box; close parallel surfaces that confuse nearest-neighbour matching."""
    return box((width, depth, thickness))


def quad(size: float = 1.0, z: float = 0.0) -> TriangleMesh:
    """Square in the plane ``z``, normal ``-z`` (towards a camera at the origin)."""
    s = size / 2.0
    v = np.array([(-s, -s, z), (s, -s, z), (s, s, z), (-s, s, z)])
    return TriangleMesh(v, np.array([(0, 2, 1), (0, 3, 2)]), np.tile([0.0, 0.0, -1.0], (4, 1)))


PRIMITIVES = {
    "sphere": icosphere,
    "box": box,
    "cylinder": cylinder,
    "plate": plate,
}


def builtin_mesh(name: str) -> TriangleMesh:
    try:
        return PRIMITIVES[name]()
    except KeyError:
        raise ValueError(f"unknown primitive {name!r}; choose from {sorted(PRIMITIVES)}") from None
