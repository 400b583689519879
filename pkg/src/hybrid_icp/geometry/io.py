"""Minimal ASCII OBJ (v/vn/f) and OFF readers for triangle meshes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import MeshFormatError
from .mesh import TriangleMesh, builtin_mesh, PRIMITIVES


def load_obj(path: str | Path) -> TriangleMesh:
    verts: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[list[int]] = []
    face_normals: list[list[int | None]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif tag == "vn":
                    normals.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    if len(parts) != 4:
                        raise MeshFormatError(
                            f"{path}:{lineno}: face with {len(parts) - 1} vertices; only triangles are supported"
                        )
                    vi, ni = [], []
                    for tok in parts[1:]:
                        fields = tok.split("/")
                        i = int(fields[0])
                        vi.append(i - 1 if i > 0 else len(verts) + i)
                        if len(fields) >= 3 and fields[2]:
                            j = int(fields[2])
                            ni.append(j - 1 if j > 0 else len(normals) + j)
                        else:
                            ni.append(None)
                    faces.append(vi)
                    face_normals.append(ni)
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: {exc}") from exc
    if not faces:
        raise MeshFormatError(f"{path}: no faces")

    vn = None
    if normals and all(n is not None for fn in face_normals for n in fn):
        # per-vertex normals taken from the last face corner referencing the vertex
        vn = np.zeros((len(verts), 3))
        for vi, ni in zip(faces, face_normals):
            for a, b in zip(vi, ni):
                vn[a] = normals[b]
        if (np.linalg.norm(vn, axis=1) == 0).any():
            vn = None
    try:
        return TriangleMesh(np.array(verts), np.array(faces), vn)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc


def load_off(path: str | Path) -> TriangleMesh:
    with open(path, encoding="utf-8") as fh:
        tokens = [ln.split("#", 1)[0].split() for ln in fh]
    lines = [t for t in tokens if t]
    if not lines or not lines[0][0].endswith("OFF"):
        raise MeshFormatError(f"{path}: missing OFF header")
    head = lines[0][1:] if len(lines[0]) > 1 else lines[1]
    body = lines[1:] if len(lines[0]) > 1 else lines[2:]
    try:
        nv, nf = int(head[0]), int(head[1])
        verts = [[float(x) for x in body[i][:3]] for i in range(nv)]
        faces = []
        for row in body[nv : nv + nf]:
            if int(row[0]) != 3:
                raise MeshFormatError(f"{path}: face with {row[0]} vertices; only triangles are supported")
            faces.append([int(x) for x in row[1:4]])
        return TriangleMesh(np.array(verts), np.array(faces))
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc


def load_mesh(spec: str | Path) -> TriangleMesh:
    """Load a mesh file, or build a primitive given its name (e.g. ``"sphere"``)."""
    if isinstance(spec, str) and spec in PRIMITIVES:
        return builtin_mesh(spec)
    path = Path(spec)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return load_obj(path)
    if suffix == ".off":
        return load_off(path)
    raise MeshFormatError(f"{path}: unsupported mesh format {suffix!r}")


def save_obj(mesh: TriangleMesh, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in mesh.vertices:
            fh.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for n in mesh.vertex_normals:
            fh.write(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")
