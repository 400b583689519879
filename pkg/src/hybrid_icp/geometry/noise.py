"""Depth-image noise models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class DepthNoiseModel:
    """``kind`` is ``"none"``, ``"gaussian_percent"`` or ``"parametric_stereo"``.

    ``gaussian_percent`` draws sigma = ``percent``% of each pixel's depth;
    ``parametric_stereo`` uses sigma(z) = a0 + a1 z + a2 z^2.  The default
    coefficients are configuration, not a calibrated sensor model.
    """

    kind: str = "none"
    percent: float = 0.0
    a0: float = 0.001
    a1: float = 0.0
    a2: float = 0.0019

    def __post_init__(self) -> None:
        if self.kind not in ("none", "gaussian_percent", "parametric_stereo"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.percent < 0:
            raise ValueError("percent must be >= 0")

    @classmethod
    def gaussian(cls, percent: float) -> DepthNoiseModel:
        return cls("gaussian_percent", percent=percent)

    @classmethod
    def stereo(cls, a0: float = 0.001, a1: float = 0.0, a2: float = 0.0019) -> DepthNoiseModel:
        return cls("parametric_stereo", a0=a0, a1=a1, a2=a2)

    def sigma(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        if self.kind == "gaussian_percent":
            return z * (self.percent / 100.0)
        if self.kind == "parametric_stereo":
            return np.maximum(self.a0 + self.a1 * z + self.a2 * z * z, 0.0)
        return np.zeros_like(z)


def add_depth_noise(depth: NDArray[np.float64], model: DepthNoiseModel, rng: np.random.Generator) -> NDArray[np.float64]:
    """Independent per-pixel Gaussian noise on valid pixels.

    Pixels pushed to a non-positive depth become invalid (0).
    """
    if model.kind == "none":
        return depth
    out = np.array(depth, dtype=np.float64)
    valid = out > 0
    z = out[valid]
    noisy = z + model.sigma(z) * rng.standard_normal(z.shape)
    out[valid] = np.where(noisy > 0, noisy, 0.0)
    return out
