from .formats import (
    FEATURE_MAGIC,
    FORMAT_VERSION,
    LABEL_MAGIC,
    MODEL_MAGIC,
    Standardization,
    feature_file_from_bytes,
    feature_file_to_bytes,
    label_file_from_bytes,
    label_file_to_bytes,
    load_features,
    load_labels,
    load_model,
    model_file_from_bytes,
    model_file_to_bytes,
    save_features,
    save_labels,
    save_model,
)
from .report import (
    METRIC_FIELDS,
    REPORT_SCHEMA,
    EpochMetrics,
    RunReport,
    read_metrics_log,
    write_metrics_log,
)
from .synth import WITHIN_CLASS_STD, synth_blobs

__all__ = [
    "FEATURE_MAGIC",
    "FORMAT_VERSION",
    "LABEL_MAGIC",
    "MODEL_MAGIC",
    "METRIC_FIELDS",
    "REPORT_SCHEMA",
    "EpochMetrics",
    "RunReport",
    "Standardization",
    "WITHIN_CLASS_STD",
    "feature_file_from_bytes",
    "feature_file_to_bytes",
    "label_file_from_bytes",
    "label_file_to_bytes",
    "load_features",
    "load_labels",
    "load_model",
    "model_file_from_bytes",
    "model_file_to_bytes",
    "read_metrics_log",
    "save_features",
    "save_labels",
    "save_model",
    "synth_blobs",
    "write_metrics_log",
]
