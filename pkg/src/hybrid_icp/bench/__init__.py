"""Benchmark harness: scene sampling, experiments, CSV reports and the CLI."""

from .config import EXPERIMENTS, SINGLE_IMAGE_VARIANTS, ExperimentConfig, load_config, parse_config, parse_timing
from .experiments import (
    COLUMNS,
    SCHEMA_ID,
    ExperimentReport,
    ReportRow,
    mean_post_vsd,
    run_experiment,
    run_single_image_variant,
    summary_table,
    timing_table,
)
from .sampling import (
    BinnedScenarios,
    footprints_disjoint,
    rejection_sample_bins,
    sample_initialisation,
    sample_object_pose,
    vsd_bin,
)

__all__ = [
    "BinnedScenarios",
    "COLUMNS",
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentReport",
    "ReportRow",
    "SCHEMA_ID",
    "SINGLE_IMAGE_VARIANTS",
    "footprints_disjoint",
    "load_config",
    "mean_post_vsd",
    "parse_config",
    "parse_timing",
    "rejection_sample_bins",
    "run_experiment",
    "run_single_image_variant",
    "sample_initialisation",
    "sample_object_pose",
    "summary_table",
    "timing_table",
    "vsd_bin",
]
