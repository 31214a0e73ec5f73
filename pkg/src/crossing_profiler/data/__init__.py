"""Data pipeline: synthesis, CSV io, preprocessing, augmentation, bundling."""

from .augment import (
    MIN_SPLIT_LENGTH,
    NOISE_RANGE_FRACTION,
    NOISE_TRUNCATION_SDS,
    augment_downsample,
    augment_noise,
    truncated_normal,
)
from .dataset import (
    SPLIT_NAMES,
    AugmentPlan,
    DatasetBundle,
    FeatureStats,
    apportion_counts,
    assign_source_splits,
    build_dataset,
    bundle_manifest,
    compute_stats,
    load_bundle,
    save_bundle,
    stable_seed,
)
from .io_csv import (
    IMU_COLUMNS,
    IMU_SUFFIX,
    PROFILER_SUFFIX,
    SEQUENCE_HEADER,
    export_csv,
    export_raw_record,
    ingest_csv,
    ingest_sequence_csv,
    list_raw_records,
)
from .preprocess import (
    GPS_COLUMN,
    MIN_HALF_WIDTH,
    TARGET_COLUMN,
    AlignedSequence,
    PeakAlignment,
    align_by_peak,
    merge_channels,
    normalize_gps_altitude,
    record_to_sequence,
    resample_to_length,
)
from .synthetic import (
    GRAVITY,
    RawCrossingRecord,
    SceneConfig,
    synthesize_crossing,
)

__all__ = [
    "AlignedSequence",
    "AugmentPlan",
    "DatasetBundle",
    "FeatureStats",
    "GPS_COLUMN",
    "GRAVITY",
    "IMU_COLUMNS",
    "IMU_SUFFIX",
    "MIN_HALF_WIDTH",
    "MIN_SPLIT_LENGTH",
    "NOISE_RANGE_FRACTION",
    "NOISE_TRUNCATION_SDS",
    "PROFILER_SUFFIX",
    "PeakAlignment",
    "RawCrossingRecord",
    "SPLIT_NAMES",
    "SceneConfig",
    "SEQUENCE_HEADER",
    "TARGET_COLUMN",
    "align_by_peak",
    "apportion_counts",
    "assign_source_splits",
    "augment_downsample",
    "augment_noise",
    "build_dataset",
    "bundle_manifest",
    "compute_stats",
    "export_csv",
    "export_raw_record",
    "ingest_csv",
    "ingest_sequence_csv",
    "list_raw_records",
    "load_bundle",
    "merge_channels",
    "normalize_gps_altitude",
    "record_to_sequence",
    "resample_to_length",
    "save_bundle",
    "stable_seed",
    "synthesize_crossing",
    "truncated_normal",
]
