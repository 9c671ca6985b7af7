"""File formats: motion binaries, annotation JSONL, atomic-pool JSONL.

All writers are atomic (temp file in the target directory, then rename), so
readers never observe a half-written file. Binary motion data round-trips
bitwise because sequences are stored and loaded as little-endian float32.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from dmc.core import AtomicEntry, DenseAnnotation, InputError, MotionSequence

MOTION_MAGIC = b"DMC1"
# magic + u32 N + u32 J + f32 fps + u16 id-length
_HEADER = struct.Struct("<4sIIfH")


class MotionFileError(InputError):
    """Structurally invalid motion binary."""


def dump_motion_bytes(motion: MotionSequence) -> bytes:
    id_bytes = motion.id.encode("utf-8")
    if len(id_bytes) > 0xFFFF:
        raise InputError(f"motion id is {len(id_bytes)} bytes; limit is 65535")
    header = _HEADER.pack(
        MOTION_MAGIC,
        motion.num_frames,
        motion.num_joints,
        motion.frame_rate_hz,
        len(id_bytes),
    )
    payload = np.ascontiguousarray(motion.frames, dtype="<f4").tobytes()
    return header + id_bytes + payload


def load_motion_bytes(data: bytes) -> MotionSequence:
    if len(data) < _HEADER.size:
        raise MotionFileError(
            f"file is {len(data)} bytes, shorter than the {_HEADER.size}-byte header"
        )
    magic, n, j, fps, id_len = _HEADER.unpack_from(data)
    if magic != MOTION_MAGIC:
        raise MotionFileError(f"bad magic {magic!r}, expected {MOTION_MAGIC!r}")
    if not math.isfinite(fps) or fps <= 0:
        raise MotionFileError(f"non-positive frame rate {fps}")
    offset = _HEADER.size
    if len(data) < offset + id_len:
        raise MotionFileError("truncated id field")
    seq_id = data[offset : offset + id_len].decode("utf-8")
    offset += id_len
    expected = n * j * 3 * 4
    if len(data) != offset + expected:
        raise MotionFileError(
            f"expected {expected} payload bytes for N={n}, J={j}, "
            f"got {len(data) - offset}"
        )
    frames = np.frombuffer(data, dtype="<f4", count=n * j * 3, offset=offset)
    try:
        return MotionSequence(
            frames=frames.reshape(n, j, 3), frame_rate_hz=fps, id=seq_id
        )
    except InputError as exc:
        raise MotionFileError(str(exc)) from exc


def write_bytes_atomic(path: str | Path, data: bytes) -> None:
    """Write data to path via a temp file and rename, never leaving partial files."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_text_atomic(path: str | Path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def save_motion(path: str | Path, motion: MotionSequence) -> None:
    write_bytes_atomic(path, dump_motion_bytes(motion))


def load_motion(path: str | Path) -> MotionSequence:
    return load_motion_bytes(Path(path).read_bytes())


def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ": "))


def write_annotations(path: str | Path, annotations: list[DenseAnnotation]) -> None:
    lines = [_json_line(a.to_dict()) for a in annotations]
    write_text_atomic(path, "".join(line + "\n" for line in lines))


def read_annotations(path: str | Path) -> list[DenseAnnotation]:
    annotations = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                annotations.append(DenseAnnotation.from_dict(record))
            except InputError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
    return annotations


def read_pool(
    path: str | Path,
    motions_dir: str | Path | None = None,
    load_motions: bool = False,
) -> list[AtomicEntry]:
    """Read an atomic pool from JSONL.

    Each line: {"id", "caption", "gt_duration_s", "source", "alignment_score"?,
    "motion_path"?}. Motion binaries are only loaded when load_motions is set;
    motion_path is resolved against motions_dir (or the pool file's directory).
    """
    base = Path(motions_dir) if motions_dir is not None else Path(path).parent
    entries = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                motion = None
                if load_motions and record.get("motion_path"):
                    motion = load_motion(base / record["motion_path"])
                entries.append(
                    AtomicEntry(
                        id=record["id"],
                        caption=record["caption"],
                        gt_duration_s=record["gt_duration_s"],
                        source=record["source"],
                        alignment_score=record.get("alignment_score"),
                        motion=motion,
                    )
                )
            except KeyError as exc:
                raise InputError(f"{path}:{lineno}: missing field {exc}") from exc
            except InputError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
    seen: set[str] = set()
    for entry in entries:
        if entry.id in seen:
            raise InputError(f"{path}: duplicate pool id {entry.id!r}")
        seen.add(entry.id)
    return entries


def read_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    """Read embedding JSONL ({"id", "vector"}) into an id → float64 vector map."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                key = record["id"]
                vec = np.asarray(record["vector"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}:{lineno}: bad embedding record: {exc}") from exc
            if vec.ndim != 1 or vec.size == 0:
                raise InputError(f"{path}:{lineno}: vector must be a non-empty list")
            if not np.isfinite(vec).all():
                raise InputError(f"{path}:{lineno}: vector has non-finite values")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise InputError(
                    f"{path}:{lineno}: vector length {vec.size} != first length {dim}"
                )
            if key in vectors:
                raise InputError(f"{path}:{lineno}: duplicate id {key!r}")
            vectors[key] = vec
    return vectors
