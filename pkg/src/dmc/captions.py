"""Timestamped caption text: parsing, serialization, and caption shuffling.

The text grammar carries start times only ("MM:SS:CC – caption" entries,
separated by commas or newlines), so segment ends are inferred: each entry
ends where the next begins, and the last ends at the total duration.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

from dmc.core import (
    DenseAnnotation,
    InputError,
    TimedSegment,
    Timestamp,
    TimestampError,
    format_timestamp,
    parse_timestamp,
)


class CaptionParseError(InputError):
    """Strict-mode parse failure."""


# Strict mode accepts only the en-dash; lenient also takes hyphen or colon.
_STRICT_ENTRY = re.compile(r"^(\d{2}:\d{2}:\d{2})\s*–\s*(.*)$")
_LENIENT_ENTRY = re.compile(r"^(\d{2}:\d{2}:\d{2})\s*[–\-:]\s*(.*)$")
# Commas split entries only when a new timestamped entry follows, so captions
# containing commas survive a serialize/parse round-trip.
_STRICT_SPLIT = re.compile(r",(?=\s*\d{2}:\d{2}:\d{2}\s*–)")
_LENIENT_SPLIT = re.compile(r",(?=\s*\d{2}:\d{2}:\d{2}\s*[–\-:])")


@dataclass
class ParseOutcome:
    """Parsed annotation plus lenient-mode diagnostics."""

    annotation: DenseAnnotation
    warnings: list[tuple[int, str]] = field(default_factory=list)
    dropped_lines: int = 0


def _fragments(text: str, strict: bool) -> list[tuple[int, str]]:
    """Split text into (line_number, entry_text) fragments."""
    splitter = _STRICT_SPLIT if strict else _LENIENT_SPLIT
    out = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        for piece in splitter.split(line):
            piece = piece.strip()
            if piece:
                out.append((lineno, piece))
    return out


def parse_dense_text(
    text: str,
    total_duration: Timestamp,
    mode: str = "strict",
    sequence_id: str = "",
) -> ParseOutcome:
    """Parse start-only caption text into a DenseAnnotation.

    Strict mode raises CaptionParseError on any unparseable entry,
    non-increasing starts, or a start at/after total_duration. Lenient mode
    never raises: offending entries are dropped with a (line, message)
    warning, and preamble text before the first valid entry is skipped.
    """
    if mode not in ("strict", "lenient"):
        raise InputError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    if total_duration.total_cs <= 0:
        raise InputError("total_duration must be positive")
    strict = mode == "strict"
    entry_re = _STRICT_ENTRY if strict else _LENIENT_ENTRY

    starts: list[Timestamp] = []
    captions: list[str] = []
    warnings: list[tuple[int, str]] = []
    dropped = 0

    def reject(lineno: int, message: str) -> None:
        nonlocal dropped
        if strict:
            raise CaptionParseError(f"line {lineno}: {message}")
        warnings.append((lineno, message))
        dropped += 1

    for lineno, fragment in _fragments(text, strict):
        match = entry_re.match(fragment)
        if not match:
            if starts or strict:
                reject(lineno, f"not a timestamped entry: {fragment!r}")
            else:
                warnings.append((lineno, f"preamble skipped: {fragment!r}"))
                dropped += 1
            continue
        try:
            start = parse_timestamp(match.group(1))
        except TimestampError as exc:
            reject(lineno, str(exc))
            continue
        caption = match.group(2).strip()
        if not caption:
            reject(lineno, f"empty caption after {match.group(1)}")
            continue
        if starts and start <= starts[-1]:
            reject(
                lineno,
                f"start {format_timestamp(start)} does not increase past "
                f"{format_timestamp(starts[-1])}",
            )
            continue
        if start.total_cs >= total_duration.total_cs:
            reject(
                lineno,
                f"start {format_timestamp(start)} is at or past the total "
                f"duration {format_timestamp(total_duration)}",
            )
            continue
        starts.append(start)
        captions.append(caption)

    if strict and not starts:
        raise CaptionParseError("no entries found")

    ends = starts[1:] + [total_duration]
    segments = tuple(
        TimedSegment(start=s, end=e, caption=c)
        for s, e, c in zip(starts, ends, captions)
    )
    annotation = DenseAnnotation(
        sequence_id=sequence_id, duration=total_duration, segments=segments
    )
    return ParseOutcome(annotation=annotation, warnings=warnings, dropped_lines=dropped)


def serialize_dense_text(annotation: DenseAnnotation) -> str:
    """Render an annotation in the start-only text grammar.

    Only starts are written; ends are recoverable by parsing when the
    annotation is contiguous (each segment ends where the next begins).
    """
    return ", ".join(
        f"{format_timestamp(seg.start)} – {seg.caption}"
        for seg in annotation.segments
    )


def shuffle_segment_captions(annotation: DenseAnnotation, seed: int) -> DenseAnnotation:
    """Permute captions across segments, keeping every timestamp in place.

    The permutation is uniform over non-identity permutations and
    deterministic for a fixed seed. Needs at least two segments.
    """
    count = annotation.segment_count
    if count < 2:
        raise InputError(f"need at least 2 segments to shuffle, got {count}")
    rng = random.Random(seed)
    order = list(range(count))
    while True:
        rng.shuffle(order)
        if any(pos != idx for idx, pos in enumerate(order)):
            break
    segments = tuple(
        TimedSegment(start=seg.start, end=seg.end, caption=annotation.segments[src].caption)
        for seg, src in zip(annotation.segments, order)
    )
    return DenseAnnotation(
        sequence_id=annotation.sequence_id,
        duration=annotation.duration,
        segments=segments,
    )
