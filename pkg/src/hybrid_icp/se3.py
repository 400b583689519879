"""Rigid transforms, SE(3) exponential/logarithm and on-manifold estimate fusion.

Twists are plain ``(6,)`` arrays ordered ``[rho, phi]``: translational part
first (meters), rotational part second (radians).  A pose ``T`` maps object
coordinates into camera coordinates, ``p_C = R @ p_O + t``.

Fusion uses left-multiplicative errors ``log(T_l @ T^-1)`` and left
perturbations ``T = exp(delta) @ T_bar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import SingularInformation

#: Rotation error per millimetre of translation error of a sampling-based estimator.
DEG_PER_MM = 1.92
#: Mean translation error (m) of the sampling-based pose estimator.
MEAN_TRANSLATION_ERROR = 0.0062
#: Mean rotation error (rad) of the sampling-based pose estimator.
MEAN_ROTATION_ERROR = math.radians(9.5)

ROTATION_TOL = 1e-9
_EYE3 = np.eye(3)
_SMALL_ANGLE = 1e-8
_SERIES_ANGLE = 1e-3
# the third Q coefficient cancels to ~eps / theta^5
_Q_SERIES_ANGLE = 2e-2
# below this distance from pi the axis is read off the symmetric part of R
_NEAR_PI = 1e-6

FUSION_TOL = 1e-10
FUSION_MAX_ITER = 50


def _frozen(a: ArrayLike, shape: tuple[int, ...]) -> NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64).reshape(shape)
    arr.setflags(write=False)
    return arr


def hat(v: ArrayLike) -> NDArray[np.float64]:
    """Skew-symmetric matrix such that ``hat(a) @ b == cross(a, b)``."""
    x, y, z = np.asarray(v, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) * 0.5


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``[R | t]``; arrays are stored read-only."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))
        r = self.rotation
        if not (np.abs(r.T @ r - _EYE3).max() <= ROTATION_TOL and abs(np.linalg.det(r) - 1.0) <= ROTATION_TOL):
            raise ValueError("rotation must be orthonormal with determinant +1")

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: ArrayLike) -> Pose:
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, t: ArrayLike) -> Pose:
        return cls(np.eye(3), t)

    def matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> Pose:
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: Pose) -> Pose:
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        """Transform ``(N, 3)`` (or ``(3,)``) points."""
        return self.rotate(points) + self.translation

    def rotate(self, vectors: ArrayLike) -> NDArray[np.float64]:
        v = np.asarray(vectors, dtype=np.float64)
        if v.ndim == 1:
            return self.rotation @ v
        # R @ v.T runs as one BLAS call; v @ R.T on a tall array is much slower
        return np.ascontiguousarray((self.rotation @ v.T).T)

    def allclose(self, other: Pose, atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


@dataclass(frozen=True, eq=False)
class PoseWithCovariance:
    pose: Pose
    covariance: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariance", _frozen(self.covariance, (6, 6)))
        c = self.covariance
        if np.abs(c - c.T).max() > 1e-12 * max(1.0, np.abs(c).max()):
            raise ValueError("covariance must be symmetric")
        if not np.linalg.eigvalsh(c)[0] > 0:
            raise ValueError("covariance must be positive definite")


@dataclass(frozen=True, eq=False)
class Perturbation:
    t_delta: NDArray[np.float64]
    r_delta: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "t_delta", _frozen(self.t_delta, (3,)))
        object.__setattr__(self, "r_delta", _frozen(self.r_delta, (3, 3)))


# --------------------------------------------------------------------------
# SO(3)
# --------------------------------------------------------------------------


def so3_exp(phi: ArrayLike) -> NDArray[np.float64]:
    phi = np.asarray(phi, dtype=np.float64)
    theta = float(np.linalg.norm(phi))
    k = hat(phi)
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def _axis_near_pi(r: NDArray[np.float64]) -> NDArray[np.float64]:
    # R + R^T = 2 cos(theta) I + 2 (1 - cos(theta)) a a^T
    b = 0.5 * (r + r.T)
    cos_t = 0.5 * (np.trace(r) - 1.0)
    aat = (b - cos_t * np.eye(3)) / (1.0 - cos_t)
    i = int(np.argmax(np.diag(aat)))
    axis = aat[:, i] / math.sqrt(max(aat[i, i], 1e-300))
    return axis / np.linalg.norm(axis)


def so3_log(r: ArrayLike) -> NDArray[np.float64]:
    """Rotation vector with angle in ``[0, pi]``.

    At exactly pi the axis sign is fixed so its first nonzero component is
    positive.
    """
    r = np.asarray(r, dtype=np.float64)
    w = vee(r)
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(r) - 1.0)
    theta = math.atan2(s, c)
    if theta < _SMALL_ANGLE:
        return w
    if math.pi - theta > _NEAR_PI:
        return w * (theta / s)
    axis = _axis_near_pi(r)
    if s > 1e-12:
        if float(axis @ w) < 0.0:
            axis = -axis
    else:
        nz = axis[np.abs(axis) > 1e-12]
        if nz.size and nz[0] < 0.0:
            axis = -axis
    return axis * theta


def so3_left_jacobian(phi: ArrayLike) -> NDArray[np.float64]:
    phi = np.asarray(phi, dtype=np.float64)
    theta = float(np.linalg.norm(phi))
    k = hat(phi)
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        a = 0.5 - t2 / 24.0
        b = 1.0 / 6.0 - t2 / 120.0
    else:
        a = (1.0 - math.cos(theta)) / theta**2
        b = (theta - math.sin(theta)) / theta**3
    return np.eye(3) + a * k + b * (k @ k)


def so3_left_jacobian_inv(phi: ArrayLike) -> NDArray[np.float64]:
    phi = np.asarray(phi, dtype=np.float64)
    theta = float(np.linalg.norm(phi))
    k = hat(phi)
    if theta < _SERIES_ANGLE:
        b = 1.0 / 12.0 + theta**2 / 720.0
    else:
        half = 0.5 * theta
        b = (1.0 - half * math.cos(half) / math.sin(half)) / theta**2
    return np.eye(3) - 0.5 * k + b * (k @ k)


def rotation_angle(r: ArrayLike) -> float:
    """Geodesic angle of a rotation matrix, in ``[0, pi]``."""
    r = np.asarray(r, dtype=np.float64)
    s = float(np.linalg.norm(vee(r)))
    c = 0.5 * (np.trace(r) - 1.0)
    return math.atan2(s, c)


def rotation_error(r1: ArrayLike, r2: ArrayLike) -> float:
    """Geodesic distance between two rotations (radians)."""
    return rotation_angle(np.asarray(r1).T @ np.asarray(r2))


def translation_error(p1: Pose, p2: Pose) -> float:
    return float(np.linalg.norm(p1.translation - p2.translation))


# --------------------------------------------------------------------------
# SE(3)
# --------------------------------------------------------------------------


def exp_map(xi: ArrayLike) -> Pose:
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    rho, phi = xi[:3], xi[3:]
    return Pose(so3_exp(phi), so3_left_jacobian(phi) @ rho)


def log_map(t: Pose) -> NDArray[np.float64]:
    phi = so3_log(t.rotation)
    rho = so3_left_jacobian_inv(phi) @ t.translation
    return np.concatenate([rho, phi])


def _q_block(rho: NDArray[np.float64], phi: NDArray[np.float64]) -> NDArray[np.float64]:
    rx, px = hat(rho), hat(phi)
    theta = float(np.linalg.norm(phi))
    if theta < _Q_SERIES_ANGLE:
        t2 = theta * theta
        t4 = t2 * t2
        c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0
        c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0
        c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0
    else:
        s, c = math.sin(theta), math.cos(theta)
        c1 = (theta - s) / theta**3
        c2 = (theta**2 + 2.0 * c - 2.0) / (2.0 * theta**4)
        c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta**5)
    pr = px @ rx
    rp = rx @ px
    prp = pr @ px
    pp = px @ px
    return (
        0.5 * rx
        + c1 * (pr + rp + prp)
        + c2 * (pp @ rx + rp @ px - 3.0 * prp)
        + c3 * (prp @ px + pp @ rx @ px)
    )


def se3_left_jacobian(xi: ArrayLike) -> NDArray[np.float64]:
    """Left Jacobian: ``exp(xi + eps) ~= exp(J(xi) @ eps) @ exp(xi)``."""
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    rho, phi = xi[:3], xi[3:]
    j = so3_left_jacobian(phi)
    out = np.zeros((6, 6))
    out[:3, :3] = j
    out[3:, 3:] = j
    out[:3, 3:] = _q_block(rho, phi)
    return out


def se3_adjoint(t: Pose) -> NDArray[np.float64]:
    """Adjoint for ``[rho, phi]`` twists: ``T exp(xi) T^-1 = exp(Ad_T xi)``."""
    out = np.zeros((6, 6))
    out[:3, :3] = t.rotation
    out[3:, 3:] = t.rotation
    out[:3, 3:] = hat(t.translation) @ t.rotation
    return out


# --------------------------------------------------------------------------
# Perturbations
# --------------------------------------------------------------------------


def _unit_vector(rng: np.random.Generator) -> NDArray[np.float64]:
    while True:
        v = rng.normal(size=3)
        n = float(np.linalg.norm(v))
        if n > 1e-12:
            return v / n


def sample_perturbation(
    delta_t: float, delta_theta: float, rng: np.random.Generator
) -> Perturbation:
    """Translation of length ``delta_t`` and rotation of angle ``delta_theta``,
    both about directions drawn uniformly from the unit sphere."""
    if delta_t < 0 or delta_theta < 0:
        raise ValueError("perturbation magnitudes must be non-negative")
    v = _unit_vector(rng)
    eta = _unit_vector(rng)
    return Perturbation(delta_t * v, so3_exp(delta_theta * eta))


def apply_perturbation(t_gt: Pose, p: Perturbation) -> Pose:
    """``[R_gt R_delta | t_gt + t_delta]``."""
    return Pose(t_gt.rotation @ p.r_delta, t_gt.translation + p.t_delta)


def rotation_for_translation(delta_t: float) -> float:
    """Rotation magnitude (rad) paired with a translation magnitude (m)."""
    if delta_t < 0:
        raise ValueError("delta_t must be non-negative")
    return math.radians(delta_t * 1000.0 * DEG_PER_MM)


# --------------------------------------------------------------------------
# Fusion
# --------------------------------------------------------------------------


def fuse_estimates(estimates: Sequence[PoseWithCovariance]) -> PoseWithCovariance:
    """Information-weighted on-manifold mean of pose estimates.

    Minimises ``sum_l ||log(T_l T^-1)||^2`` in the metric of each inverse
    covariance by Gauss-Newton over left perturbations, starting from the
    estimate with the smallest covariance trace.
    """
    if not estimates:
        raise ValueError("need at least one estimate")
    if len(estimates) == 1:
        return estimates[0]

    weights = []
    for e in estimates:
        try:
            weights.append(np.linalg.inv(e.covariance))
        except np.linalg.LinAlgError as exc:
            raise SingularInformation("estimate covariance is singular") from exc
    traces = [float(np.trace(e.covariance)) for e in estimates]
    mean = estimates[int(np.argmin(traces))].pose

    info = np.zeros((6, 6))
    for _ in range(FUSION_MAX_ITER):
        info = np.zeros((6, 6))
        grad = np.zeros(6)
        for e, w in zip(estimates, weights):
            err = log_map(e.pose @ mean.inverse())
            # d err / d delta = -J_l(-err)^-1
            g = np.linalg.inv(se3_left_jacobian(-err))
            gw = g.T @ w
            info += gw @ g
            grad += gw @ err
        try:
            delta = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularInformation("summed information is singular") from exc
        mean = exp_map(delta) @ mean
        if float(np.linalg.norm(delta)) < FUSION_TOL:
            break

    if np.linalg.cond(info) > 1e15:
        raise SingularInformation("summed information is ill-conditioned")
    cov = np.linalg.inv(info)
    return PoseWithCovariance(mean, 0.5 * (cov + cov.T))


def deterministic_average(poses: Sequence[Pose]) -> Pose:
    """Unweighted on-manifold mean (fusion with identity covariances)."""
    if not poses:
        raise ValueError("need at least one pose")
    eye = np.eye(6)
    return fuse_estimates([PoseWithCovariance(p, eye) for p in poses]).pose
