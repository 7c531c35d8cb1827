"""Brain-tumor CADe: slice classifier, box detector, GrowCut segmentation."""

from ._cade import (
    Error,
    FormatError,
    IoError,
    NumericError,
    auc,
    box_dsc,
    confusion,
    dsc,
    generate_seeds,
    growcut,
    load_volume,
    median_filter,
    paired_t_test,
    param_count,
    resize,
    save_volume,
    shape_trace,
)

__all__ = [
    "Error",
    "FormatError",
    "IoError",
    "NumericError",
    "auc",
    "box_dsc",
    "confusion",
    "dsc",
    "generate_seeds",
    "growcut",
    "load_volume",
    "median_filter",
    "paired_t_test",
    "param_count",
    "resize",
    "save_volume",
    "shape_trace",
]
