from .camera import CameraIntrinsics, NormalMap, VertexMap, backproject, compute_normals, oriented_cloud
from .io import load_mesh, load_obj, load_off, save_obj
from .mesh import (
    OrientedPointCloud,
    TriangleMesh,
    box,
    builtin_mesh,
    corrupt_mesh,
    cylinder,
    icosphere,
    mesh_diameter,
    plate,
    quad,
    sample_mesh_points,
    vertex_normals,
)
from .noise import DepthNoiseModel, add_depth_noise
from .render import render_depth

__all__ = [
    "CameraIntrinsics",
    "DepthNoiseModel",
    "NormalMap",
    "OrientedPointCloud",
    "TriangleMesh",
    "VertexMap",
    "add_depth_noise",
    "backproject",
    "box",
    "builtin_mesh",
    "compute_normals",
    "corrupt_mesh",
    "cylinder",
    "icosphere",
    "load_mesh",
    "load_obj",
    "load_off",
    "mesh_diameter",
    "oriented_cloud",
    "plate",
    "quad",
    "render_depth",
    "sample_mesh_points",
    "save_obj",
    "vertex_normals",
]
