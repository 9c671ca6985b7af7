"""Dense motion captioning toolkit.

Parsing for timestamped caption text, temporal-localization and caption
metrics, an order-aware story-style evaluator, a deterministic motion
composition pipeline, and embedding-similarity scoring, all behind one CLI.
"""

from dmc.core import (
    DenseAnnotation,
    InputError,
    MotionSequence,
    TimedSegment,
    Timestamp,
    TimestampError,
    format_timestamp,
    parse_timestamp,
    segment_iou,
)

__all__ = [
    "DenseAnnotation",
    "InputError",
    "MotionSequence",
    "TimedSegment",
    "Timestamp",
    "TimestampError",
    "format_timestamp",
    "parse_timestamp",
    "segment_iou",
]

__version__ = "0.1.0"
