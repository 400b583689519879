"""Experiment configuration and its flat ``key = value`` file format.

Lines starting with ``#`` are comments.  List values are comma separated.
Example::

    experiment = init_noise
    meshes = sphere, box, cylinder
    variants = nn_p2p, proj_cascade_pp, hybrid
    samples_per_object = 10
    bins = 10
    seed = 7
    timing = fixed:0.5
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..errors import ConfigError

EXPERIMENTS = ("init_noise", "depth_noise", "model_noise", "sequential")

SINGLE_IMAGE_VARIANTS = {
    "nn_p2p": ("nn", "point_to_point"),
    "nn_p2l": ("nn", "point_to_plane"),
    "nn_cascade_pp": ("nn", "cascade_point_plane"),
    "nn_cascade_lp": ("nn", "cascade_plane_point"),
    "proj_p2p": ("projective", "point_to_point"),
    "proj_p2l": ("projective", "point_to_plane"),
    "proj_cascade_pp": ("projective", "cascade_point_plane"),
    "proj_cascade_lp": ("projective", "cascade_plane_point"),
    "hybrid": ("hybrid", "hybrid"),
}
SEQUENTIAL_ICP = ("projective_cascading", "hybrid")

DEFAULT_LEVELS = {
    "depth_noise": (0.0, 1.0, 2.0, 3.0, 4.0, 5.0),
    "model_noise": (0.0, 1.0, 2.0, 3.0, 4.0),
}
DEFAULT_VARIANTS = {
    "sequential": ("projective_cascading/last_estimate", "projective_cascading/average"),
}
DEFAULT_SINGLE_IMAGE_VARIANTS = ("nn_p2p", "proj_cascade_pp", "hybrid")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    meshes: tuple[str, ...] = ("sphere",)
    # empty: the experiment's default variants
    variants: tuple[str, ...] = ()
    samples_per_object: int = 10
    bins: int = 10
    seed: int = 0
    output_path: str = "report.csv"
    # None: wall-clock timing; a number: seconds charged per ICP call
    fixed_seconds: float | None = None
    alpha: float = 0.4
    levels: tuple[float, ...] = ()
    model_points: int = 2000
    # sequential experiment
    velocity: float = 0.1
    start_distance: float = 1.0
    stop_distance: float = 0.4
    reconstruction_level: int = 1

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not self.meshes:
            raise ConfigError("meshes must not be empty")
        if not self.variants:
            default = DEFAULT_VARIANTS.get(self.experiment, DEFAULT_SINGLE_IMAGE_VARIANTS)
            object.__setattr__(self, "variants", default)
        if self.samples_per_object < 1:
            raise ConfigError("samples_per_object must be >= 1")
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.fixed_seconds is not None and self.fixed_seconds < 0:
            raise ConfigError("fixed timing must be non-negative")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.model_points < 10:
            raise ConfigError("model_points must be >= 10")
        for v in self.variants:
            _check_variant(self.experiment, v)
        if self.experiment == "sequential" and not self.stop_distance < self.start_distance:
            raise ConfigError("stop_distance must be below start_distance")

    @property
    def effective_levels(self) -> tuple[float, ...]:
        return self.levels or DEFAULT_LEVELS.get(self.experiment, ())

    def with_overrides(self, **kw) -> ExperimentConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _check_variant(experiment: str, variant: str) -> None:
    if experiment == "sequential":
        from ..sequential import FUSION_METHODS

        icp, _, method = variant.partition("/")
        if icp not in SEQUENTIAL_ICP or method not in FUSION_METHODS:
            raise ConfigError(f"sequential variants look like 'projective_cascading/average', got {variant!r}")
    elif variant not in SINGLE_IMAGE_VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(SINGLE_IMAGE_VARIANTS)}")


def parse_timing(text: str) -> float | None:
    """``measured`` -> None, ``fixed:<seconds>`` -> seconds."""
    text = text.strip()
    if text == "measured":
        return None
    kind, _, value = text.partition(":")
    if kind != "fixed" or not value:
        raise ConfigError(f"timing must be 'measured' or 'fixed:<seconds>', got {text!r}")
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad fixed timing {value!r}") from exc


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "tuple[str, ...]":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if kind == "tuple[float, ...]":
            return tuple(float(s) for s in raw.split(",") if s.strip())
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str) -> ExperimentConfig:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key == "timing":
            values["fixed_seconds"] = parse_timing(raw)
        elif key in _FIELD_TYPES and key != "fixed_seconds":
            values[key] = _convert(key, raw)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'")
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
