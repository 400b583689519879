"""Pinhole camera, organised point clouds (vertex/normal maps) and conversions.

Depth images are plain ``(H, W)`` float arrays of z-depth in meters with 0
marking invalid pixels; segmentation masks are ``(H, W)`` bool arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from .mesh import OrientedPointCloud


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @classmethod
    def default(cls) -> CameraIntrinsics:
        """640x480 structured-light style intrinsics."""
        return cls(525.0, 525.0, 319.5, 239.5, 640, 480)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def project(self, points: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Continuous pixel coordinates ``(u, v)``; pixel centres sit on integers."""
        z = points[..., 2]
        return self.fx * points[..., 0] / z + self.cx, self.fy * points[..., 1] / z + self.cy

    def rays(self) -> NDArray[np.float64]:
        """``(H, W, 3)`` rays with unit z component through every pixel centre."""
        u = (np.arange(self.width) - self.cx) / self.fx
        v = (np.arange(self.height) - self.cy) / self.fy
        out = np.ones((self.height, self.width, 3))
        out[..., 0] = u[None, :]
        out[..., 1] = v[:, None]
        return out

    def ray_lengths(self) -> NDArray[np.float64]:
        """``(H, W)`` Euclidean length of each unit-z ray (read-only, cached)."""
        return _ray_lengths(self)


@lru_cache(maxsize=8)
def _ray_lengths(cam: CameraIntrinsics) -> NDArray[np.float64]:
    out = np.linalg.norm(cam.rays(), axis=-1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class VertexMap:
    points: NDArray[np.float64]
    valid: NDArray[np.bool_]

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass(frozen=True, eq=False)
class NormalMap:
    normals: NDArray[np.float64]
    valid: NDArray[np.bool_]


def backproject(depth: NDArray[np.float64], cam: CameraIntrinsics, mask: NDArray[np.bool_] | None = None) -> VertexMap:
    """Lift every masked pixel with positive depth to a camera-frame point."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != cam.shape:
        raise ValueError(f"depth shape {depth.shape} does not match camera {cam.shape}")
    valid = depth > 0
    if mask is not None:
        if mask.shape != depth.shape:
            raise ValueError("mask shape does not match depth")
        valid &= mask
    pts = cam.rays() * np.where(valid, depth, 0.0)[..., None]
    return VertexMap(pts, valid)


def compute_normals(vmap: VertexMap) -> NormalMap:
    """Per-pixel normals from neighbouring vertices, oriented towards the camera.

    Central differences are used where both neighbours along an image axis
    are valid, one-sided differences where only one is; a pixel needs a valid
    neighbour along both axes.
    """
    ok = vmap.valid
    normals = np.zeros(vmap.points.shape)
    valid = np.zeros(ok.shape, dtype=bool)
    rows = np.flatnonzero(ok.any(axis=1))
    cols = np.flatnonzero(ok.any(axis=0))
    if len(rows):
        # everything outside the valid bounding box is invalid, so the crop
        # gives the same result as the full image
        box = np.s_[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
        normals[box], valid[box] = _dense_normals(vmap.points[box], ok[box])
    return NormalMap(normals, valid)


def _dense_normals(p: NDArray[np.float64], ok: NDArray[np.bool_]) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    def diffs(axis: int) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
        pp = np.zeros_like(p)
        pm = np.zeros_like(p)
        okp = np.zeros_like(ok)
        okm = np.zeros_like(ok)
        if axis == 1:
            pp[:, :-1], okp[:, :-1] = p[:, 1:], ok[:, 1:]
            pm[:, 1:], okm[:, 1:] = p[:, :-1], ok[:, :-1]
        else:
            pp[:-1], okp[:-1] = p[1:], ok[1:]
            pm[1:], okm[1:] = p[:-1], ok[:-1]
        fwd = np.where(okp[..., None], pp, p)
        bwd = np.where(okm[..., None], pm, p)
        return fwd - bwd, ok & (okp | okm)

    du, oku = diffs(1)
    dv, okv = diffs(0)
    n = np.cross(du, dv)
    norm = np.linalg.norm(n, axis=-1)
    valid = oku & okv & (norm > 0)
    n = np.where(valid[..., None], n / np.where(norm > 0, norm, 1.0)[..., None], 0.0)
    # face the camera: n . p <= 0
    flip = (n * p).sum(-1) > 0
    n[flip] *= -1.0
    return n, valid


def oriented_cloud(vmap: VertexMap, nmap: NormalMap) -> OrientedPointCloud:
    """Flatten pixels valid in both maps, in row-major pixel order."""
    sel = vmap.valid & nmap.valid
    return OrientedPointCloud(vmap.points[sel], nmap.normals[sel])
