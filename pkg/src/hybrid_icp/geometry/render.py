"""Z-buffered depth rasteriser for triangle meshes under a pinhole camera.

Coverage uses edge functions evaluated at pixel centres with a top-left
style ownership rule, so a pixel on an edge shared by two triangles is
drawn exactly once.  Depth is interpolated as ``1/z`` in screen space,
which is exact for planar triangles.  Triangles with a vertex closer than
``NEAR`` are skipped (no near-plane clipping).
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from ..errors import EmptyRender
from ..se3 import Pose
from .camera import CameraIntrinsics
from .mesh import TriangleMesh

NEAR = 1e-3
_BATCH_PIXELS = 2_000_000


def _owned(ax, ay, bx, by):
    # one of the two opposite traversals of a shared edge owns it
    dy = by - ay
    return (dy > 0) | ((dy == 0) & (bx - ax < 0))


def render_depth(
    mesh: TriangleMesh, pose: Pose, cam: CameraIntrinsics
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Render ``mesh`` placed at ``pose``; returns ``(depth, mask)``."""
    h, w = cam.height, cam.width
    verts = pose.apply(mesh.vertices)
    tri = verts[mesh.triangles]
    keep = (tri[:, :, 2] > NEAR).all(axis=1)
    tri = tri[keep]
    depth = np.full(h * w, np.inf)

    if len(tri):
        z = tri[:, :, 2]
        u = cam.fx * tri[:, :, 0] / z + cam.cx
        v = cam.fy * tri[:, :, 1] / z + cam.cy
        area = (u[:, 1] - u[:, 0]) * (v[:, 2] - v[:, 0]) - (v[:, 1] - v[:, 0]) * (u[:, 2] - u[:, 0])
        # orient every triangle positively so edge tests share one sign
        neg = area < 0
        u[neg] = u[neg][:, [0, 2, 1]]
        v[neg] = v[neg][:, [0, 2, 1]]
        z[neg] = z[neg][:, [0, 2, 1]]
        area = np.abs(area)

        umin = np.clip(np.ceil(u.min(axis=1)), 0, w)
        umax = np.clip(np.floor(u.max(axis=1)), -1, w - 1)
        vmin = np.clip(np.ceil(v.min(axis=1)), 0, h)
        vmax = np.clip(np.floor(v.max(axis=1)), -1, h - 1)
        bh = (vmax - vmin + 1).astype(np.int64)
        sel = (area > 1e-12) & (umax >= umin) & (bh > 0)
        idx = np.flatnonzero(sel)
        rows = bh[idx]

        start = 0
        while start < len(idx):
            # rows are cheap; the per-row pixel spans are bounded inside
            csum = np.cumsum(rows[start:] * (umax[idx[start:]] - umin[idx[start:]] + 1))
            stop = start + max(1, int(np.searchsorted(csum, _BATCH_PIXELS, side="right")))
            _raster_batch(depth, w, idx[start:stop], rows[start:stop], u, v, z, area, umin, umax, vmin)
            start = stop

    covered = np.isfinite(depth)
    if not covered.any():
        raise EmptyRender("no pixel covered by the mesh")
    depth[~covered] = 0.0
    depth = depth.reshape(h, w)
    return depth, covered.reshape(h, w)


def _row_spans(t, py, u, v, umin, umax):
    """Conservative ``[lo, hi]`` pixel range of each (triangle, row) pair."""
    lo = umin[t].copy()
    hi = umax[t].copy()
    for a, b in ((1, 2), (2, 0), (0, 1)):
        ax, ay = u[t, a], v[t, a]
        dx, dy = u[t, b] - ax, v[t, b] - ay
        # edge test dx*(py-ay) - dy*(px-ax) >= 0 is linear in px
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = ax + dx * (py - ay) / dy
        up = dy > 0
        dn = dy < 0
        hi[up] = np.minimum(hi[up], np.floor(bound[up] + 1e-7))
        lo[dn] = np.maximum(lo[dn], np.ceil(bound[dn] - 1e-7))
        flat_out = (dy == 0) & (dx * (py - ay) < 0)
        hi[flat_out] = lo[flat_out] - 1
    return lo, hi


def _raster_batch(depth, w, idx, rows, u, v, z, area, umin, umax, vmin) -> None:
    t = np.repeat(idx, rows)
    py = vmin[t] + (np.arange(len(t)) - np.repeat(np.cumsum(rows) - rows, rows))
    lo, hi = _row_spans(t, py, u, v, umin, umax)
    span = np.maximum(hi - lo + 1, 0).astype(np.int64)
    t = np.repeat(t, span)
    py = np.repeat(py, span)
    px = np.repeat(lo, span) + (np.arange(len(t)) - np.repeat(np.cumsum(span) - span, span))

    u0, u1, u2 = u[t, 0], u[t, 1], u[t, 2]
    v0, v1, v2 = v[t, 0], v[t, 1], v[t, 2]
    # edge function of edge a->b is (bx-ax)(py-ay) - (by-ay)(px-ax); weight of the opposite vertex
    w0 = (u2 - u1) * (py - v1) - (v2 - v1) * (px - u1)
    w1 = (u0 - u2) * (py - v2) - (v0 - v2) * (px - u2)
    w2 = (u1 - u0) * (py - v0) - (v1 - v0) * (px - u0)
    inside = (
        ((w0 > 0) | ((w0 == 0) & _owned(u1, v1, u2, v2)))
        & ((w1 > 0) | ((w1 == 0) & _owned(u2, v2, u0, v0)))
        & ((w2 > 0) | ((w2 == 0) & _owned(u0, v0, u1, v1)))
    )
    if not inside.any():
        return
    t = t[inside]
    inv_z = (w0[inside] / z[t, 0] + w1[inside] / z[t, 1] + w2[inside] / z[t, 2]) / area[t]
    pix = (py[inside] * w + px[inside]).astype(np.int64)
    np.minimum.at(depth, pix, 1.0 / inv_z)
