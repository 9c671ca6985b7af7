"""Core domain types: timestamps, timed caption segments, and motion sequences.

Times are stored as integer centiseconds so that interval arithmetic,
matching, and text round-trips are exact; conversion to float seconds
happens only at metric boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CS_PER_SECOND = 100
CS_PER_MINUTE = 60 * CS_PER_SECOND
# "MM:SS:CC" has two minute digits, so anything >= 100 minutes is unrenderable.
MAX_RENDERABLE_CS = 100 * CS_PER_MINUTE

DEFAULT_FRAME_RATE_HZ = 20.0
DEFAULT_JOINT_COUNT = 22


class InputError(ValueError):
    """Invalid user-supplied data (text, file, or configuration)."""


class TimestampError(InputError):
    """Malformed or out-of-range timestamp."""


@dataclass(frozen=True, order=True)
class Timestamp:
    """A point in time, measured in whole centiseconds since sequence start."""

    total_cs: int

    def __post_init__(self) -> None:
        if isinstance(self.total_cs, bool) or not isinstance(self.total_cs, int):
            raise TimestampError(
                f"total_cs must be an int, got {type(self.total_cs).__name__}"
            )
        if self.total_cs < 0:
            raise TimestampError(f"total_cs must be non-negative, got {self.total_cs}")

    @classmethod
    def from_seconds(cls, seconds: float) -> "Timestamp":
        return cls(round(seconds * CS_PER_SECOND))

    @property
    def seconds(self) -> float:
        return self.total_cs / CS_PER_SECOND


def parse_timestamp(text: str) -> Timestamp:
    """Parse "MM:SS:CC" (minutes : seconds : centiseconds) into a Timestamp.

    Each field must be exactly two ASCII digits; seconds must be below 60.
    """
    parts = text.split(":")
    if len(parts) != 3:
        raise TimestampError(
            f"expected 3 colon-separated fields, got {len(parts)} in {text!r}"
        )
    names = ("minutes", "seconds", "centiseconds")
    values = []
    for name, part in zip(names, parts):
        if len(part) != 2 or not (part.isascii() and part.isdigit()):
            raise TimestampError(
                f"{name} field must be two digits, got {part!r} in {text!r}"
            )
        values.append(int(part))
    minutes, seconds, centis = values
    if seconds >= 60:
        raise TimestampError(f"seconds field must be < 60, got {seconds} in {text!r}")
    if centis >= 100:  # unreachable with two digits; kept as a guard
        raise TimestampError(f"centiseconds field must be < 100 in {text!r}")
    return Timestamp(minutes * CS_PER_MINUTE + seconds * CS_PER_SECOND + centis)


def format_timestamp(t: Timestamp) -> str:
    """Render a Timestamp as zero-padded "MM:SS:CC". Inverse of parse_timestamp."""
    if t.total_cs >= MAX_RENDERABLE_CS:
        raise TimestampError(
            f"timestamp {t.total_cs} cs is >= 100 minutes and cannot be rendered"
        )
    minutes, rest = divmod(t.total_cs, CS_PER_MINUTE)
    seconds, centis = divmod(rest, CS_PER_SECOND)
    return f"{minutes:02d}:{seconds:02d}:{centis:02d}"


@dataclass(frozen=True)
class TimedSegment:
    """A caption spanning the half-open time interval [start, end)."""

    start: Timestamp
    end: Timestamp
    caption: str

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise InputError(
                f"segment start ({self.start.total_cs} cs) must precede end "
                f"({self.end.total_cs} cs)"
            )
        if not self.caption or not self.caption.strip():
            raise InputError("segment caption must be non-empty")

    @property
    def length_cs(self) -> int:
        return self.end.total_cs - self.start.total_cs


def segment_iou(a: TimedSegment, b: TimedSegment) -> float:
    """Temporal intersection-over-union of two segments.

    Computed in integer centiseconds, so equal ratios compare exactly.
    """
    inter = min(a.end.total_cs, b.end.total_cs) - max(a.start.total_cs, b.start.total_cs)
    if inter <= 0:
        return 0.0
    union = a.length_cs + b.length_cs - inter
    return inter / union


@dataclass
class DenseAnnotation:
    """An ordered list of captioned segments covering one motion sequence.

    Well-formedness (segments sorted by start, ends within duration, and
    optionally pairwise non-overlap) is checked by validate_annotation, not
    enforced at construction: model predictions may violate it.
    """

    sequence_id: str
    duration: Timestamp
    segments: tuple[TimedSegment, ...]

    def __post_init__(self) -> None:
        self.segments = tuple(self.segments)

    @property
    def segment_count(self) -> int:
        return len(self.segments)

    @property
    def captions(self) -> list[str]:
        return [seg.caption for seg in self.segments]

    def to_dict(self) -> dict:
        return {
            "id": self.sequence_id,
            "duration_cs": self.duration.total_cs,
            "segments": [
                {
                    "start_cs": seg.start.total_cs,
                    "end_cs": seg.end.total_cs,
                    "caption": seg.caption,
                }
                for seg in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseAnnotation":
        try:
            segments = tuple(
                TimedSegment(
                    start=Timestamp(seg["start_cs"]),
                    end=Timestamp(seg["end_cs"]),
                    caption=seg["caption"],
                )
                for seg in data["segments"]
            )
            return cls(
                sequence_id=data["id"],
                duration=Timestamp(data["duration_cs"]),
                segments=segments,
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed annotation record: {exc}") from exc


@dataclass(frozen=True)
class Violation:
    """One broken annotation rule, pointing at the offending segment."""

    segment_index: int
    rule: str
    detail: str


def validate_annotation(
    annotation: DenseAnnotation, strict_nonoverlap: bool = False
) -> list[Violation]:
    """Check annotation invariants, returning violations as data.

    Rules: "unsorted" (segments not ascending by start), "end-exceeds-duration",
    and, with strict_nonoverlap, "overlap" between adjacent segments. Segment
    start < end and non-empty captions are already enforced by TimedSegment.
    """
    violations: list[Violation] = []
    duration_cs = annotation.duration.total_cs
    prev_start = -1
    for index, seg in enumerate(annotation.segments):
        if seg.start.total_cs < prev_start:
            violations.append(
                Violation(
                    segment_index=index,
                    rule="unsorted",
                    detail=(
                        f"start {seg.start.total_cs} cs is before the previous "
                        f"segment start {prev_start} cs"
                    ),
                )
            )
        prev_start = seg.start.total_cs
        if seg.end.total_cs > duration_cs:
            violations.append(
                Violation(
                    segment_index=index,
                    rule="end-exceeds-duration",
                    detail=(
                        f"end {seg.end.total_cs} cs exceeds sequence duration "
                        f"{duration_cs} cs"
                    ),
                )
            )
    if strict_nonoverlap:
        ordered = sorted(
            enumerate(annotation.segments), key=lambda item: item[1].start.total_cs
        )
        for (_, prev), (index, cur) in zip(ordered, ordered[1:]):
            if cur.start.total_cs < prev.end.total_cs:
                violations.append(
                    Violation(
                        segment_index=index,
                        rule="overlap",
                        detail=(
                            f"segment [{cur.start.total_cs}, {cur.end.total_cs}) cs "
                            f"overlaps [{prev.start.total_cs}, {prev.end.total_cs}) cs"
                        ),
                    )
                )
    return violations


@dataclass
class MotionSequence:
    """3D joint positions over time: an (N, J, 3) float32 array plus frame rate.

    Frames are stored as read-only float32 (positions in meters) so that the
    binary format round-trips bitwise and instances can be shared across
    workers. The frame rate is quantized to float32 for the same reason.
    """

    frames: np.ndarray
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ
    id: str = ""

    def __post_init__(self) -> None:
        frames = np.array(self.frames, dtype=np.float32, copy=True)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise InputError(f"frames must have shape (N, J, 3), got {frames.shape}")
        if frames.shape[0] < 1 or frames.shape[1] < 1:
            raise InputError(f"need at least one frame and one joint, got {frames.shape}")
        if not np.isfinite(frames).all():
            raise InputError("frames contain non-finite values")
        frames.setflags(write=False)
        self.frames = frames
        rate = float(np.float32(self.frame_rate_hz))
        if not math.isfinite(rate) or rate <= 0:
            raise InputError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        self.frame_rate_hz = rate

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_joints(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_frames / self.frame_rate_hz


ATOMIC_SOURCES = ("generated", "mocap")


@dataclass
class AtomicEntry:
    """One atomic action: a short motion, its caption, and pool metadata.

    The motion may be omitted for annotation-only pipelines (timeline
    planning needs only gt_duration_s); operations that require frames
    raise if it is missing.
    """

    id: str
    caption: str
    gt_duration_s: float
    source: str
    alignment_score: float | None = None
    motion: MotionSequence | None = None

    def __post_init__(self) -> None:
        if self.source not in ATOMIC_SOURCES:
            raise InputError(
                f"source must be one of {ATOMIC_SOURCES}, got {self.source!r}"
            )
        if not (math.isfinite(self.gt_duration_s) and self.gt_duration_s > 0):
            raise InputError(f"gt_duration_s must be positive, got {self.gt_duration_s}")
        if self.alignment_score is not None and not (
            -1.0 <= self.alignment_score <= 1.0
        ):
            raise InputError(
                f"alignment_score must be in [-1, 1], got {self.alignment_score}"
            )
        if self.motion is not None:
            frame_s = 1.0 / self.motion.frame_rate_hz
            if abs(self.motion.duration_s - self.gt_duration_s) > frame_s + 1e-9:
                raise InputError(
                    f"gt_duration_s {self.gt_duration_s} disagrees with motion "
                    f"duration {self.motion.duration_s} by more than one frame"
                )
