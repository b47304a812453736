"""Single-channel EEG sleep staging: EDF reading, epoch stores, models,
quantization, device budgets and metrics."""

from ._sleepnet import (
    STAGES,
    Model,
    SleepNetError,
    check_fit,
    class_metrics,
    confusion,
    param_count,
    parse_tal,
    read_annotations,
    read_edf_header,
    read_signal,
    read_store,
    standardize,
    write_store,
)

__all__ = [
    "STAGES",
    "Model",
    "SleepNetError",
    "check_fit",
    "class_metrics",
    "confusion",
    "param_count",
    "parse_tal",
    "read_annotations",
    "read_edf_header",
    "read_signal",
    "read_store",
    "standardize",
    "write_store",
]
