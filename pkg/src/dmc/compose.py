"""Deterministic composition of long sequences from atomic motions.

Pipeline: filter the atomic pool by alignment score, sample 2..10 atomics,
perturb each duration inside its sampling interval, lay them on a timeline
separated by fixed transition gaps, and (when motion data is present) fill
the gaps by interpolation or cross-blending. All randomness flows from one
integer seed through per-sequence hashed sub-seeds, so outputs are pure
functions of (pool, config, seed).
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from dmc.core import (
    AtomicEntry,
    DenseAnnotation,
    InputError,
    MotionSequence,
    TimedSegment,
    Timestamp,
)
from dmc.textmetrics import tokenize

SPLIT_NAMES = ("train", "val", "test")
MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CompositionConfig:
    k_min: int = 2
    k_max: int = 10
    alpha_s: float = 0.3
    beta: float = 0.8
    transition_s: float = 0.5
    blend_frames: int = 10
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    min_alignment: float = 0.5

    def __post_init__(self) -> None:
        if not 2 <= self.k_min <= self.k_max:
            raise InputError(
                f"need 2 <= k_min <= k_max, got k_min={self.k_min}, k_max={self.k_max}"
            )
        if self.transition_s < 0:
            raise InputError(f"transition_s must be >= 0, got {self.transition_s}")
        if len(self.split_ratios) != len(SPLIT_NAMES):
            raise InputError(f"split_ratios needs {len(SPLIT_NAMES)} entries")
        if any(r < 0 for r in self.split_ratios):
            raise InputError("split ratios must be non-negative")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise InputError(f"split ratios must sum to 1, got {self.split_ratios}")
        if not 0.0 < self.beta < 2.0:
            raise InputError(f"beta must be in (0, 2), got {self.beta}")

    @property
    def transition_cs(self) -> int:
        return round(self.transition_s * 100)

    def to_dict(self) -> dict:
        return {
            "k_min": self.k_min,
            "k_max": self.k_max,
            "alpha_s": self.alpha_s,
            "beta": self.beta,
            "transition_s": self.transition_s,
            "blend_frames": self.blend_frames,
            "seed": self.seed,
            "split_ratios": list(self.split_ratios),
            "min_alignment": self.min_alignment,
        }


def duration_interval(t_gt: float, cfg: CompositionConfig) -> tuple[float, float]:
    """Sampling interval for a perturbed duration, in seconds."""
    lower = t_gt * cfg.beta + cfg.alpha_s
    upper = min((2.0 - cfg.beta) * t_gt + cfg.alpha_s, t_gt + cfg.beta + 1.0)
    return (lower, upper)


def sample_duration(t_gt: float, cfg: CompositionConfig, rng: random.Random) -> float:
    """Uniform duration perturbation of a ground-truth duration."""
    if t_gt <= 0:
        raise InputError(f"t_gt must be positive, got {t_gt}")
    lower, upper = duration_interval(t_gt, cfg)
    if lower > upper:  # cannot happen for t_gt > 0 with default constants
        return lower
    return rng.uniform(lower, upper)


@dataclass(frozen=True)
class PlanEntry:
    atomic_id: str
    planned_duration_s: float
    start_cs: int
    end_cs: int

    def to_dict(self) -> dict:
        return {
            "atomic_id": self.atomic_id,
            "planned_duration_s": self.planned_duration_s,
            "start_cs": self.start_cs,
            "end_cs": self.end_cs,
        }


@dataclass
class TimelinePlan:
    entries: list[PlanEntry]
    total_duration_cs: int

    @property
    def gap_spans_cs(self) -> list[tuple[int, int]]:
        return [
            (prev.end_cs, cur.start_cs)
            for prev, cur in zip(self.entries, self.entries[1:])
        ]


def plan_timeline(
    pool: list[AtomicEntry],
    cfg: CompositionConfig,
    rng: random.Random,
    sequence_id: str = "",
) -> tuple[TimelinePlan, DenseAnnotation]:
    """Sample K atomics without replacement and lay them out in time.

    Segment 0 starts at 0; each later segment starts one transition gap
    after the previous segment's end. Caption timestamps cover the atomics
    only, so the gaps stay unannotated (they are recorded in the manifest).
    """
    if len(pool) < cfg.k_max:
        raise InputError(
            f"pool has {len(pool)} entries; need at least k_max={cfg.k_max}"
        )
    k = rng.randint(cfg.k_min, cfg.k_max)
    chosen = rng.sample(pool, k)
    entries = []
    segments = []
    cursor_cs = 0
    for index, atomic in enumerate(chosen):
        if index > 0:
            cursor_cs += cfg.transition_cs
        planned = sample_duration(atomic.gt_duration_s, cfg, rng)
        length_cs = max(1, round(planned * 100))
        entry = PlanEntry(
            atomic_id=atomic.id,
            planned_duration_s=planned,
            start_cs=cursor_cs,
            end_cs=cursor_cs + length_cs,
        )
        entries.append(entry)
        segments.append(
            TimedSegment(
                start=Timestamp(entry.start_cs),
                end=Timestamp(entry.end_cs),
                caption=atomic.caption,
            )
        )
        cursor_cs = entry.end_cs
    plan = TimelinePlan(entries=entries, total_duration_cs=cursor_cs)
    annotation = DenseAnnotation(
        sequence_id=sequence_id,
        duration=Timestamp(cursor_cs),
        segments=tuple(segments),
    )
    return plan, annotation


def _frame_boundary(cs: int, fps: float) -> int:
    return round(cs * fps / 100.0)


def _fit_frames(frames: np.ndarray, target: int) -> np.ndarray:
    """Fit a (N, J, 3) block to exactly `target` frames.

    Longer sources keep their leading frames; shorter ones are stretched by
    linear interpolation over the frame axis.
    """
    n = frames.shape[0]
    if target == n:
        return frames
    if target < n:
        return frames[:target]
    positions = np.linspace(0.0, n - 1.0, target)
    lo = np.floor(positions).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    w = (positions - lo).astype(np.float32).reshape(-1, 1, 1)
    return (frames[lo] * (1.0 - w) + frames[hi] * w).astype(np.float32)


def _gap_frames_hard(last: np.ndarray, first: np.ndarray, count: int) -> np.ndarray:
    """Constant-velocity fill: interior points of the line from last to first."""
    out = np.empty((count,) + last.shape, dtype=np.float32)
    for t in range(count):
        w = np.float32((t + 1) / (count + 1))
        out[t] = last * (np.float32(1.0) - w) + first * w
    return out


def _gap_frames_blend(last: np.ndarray, first: np.ndarray, count: int) -> np.ndarray:
    """Smoothstep cross-blend whose first/last frames equal the sources bitwise."""
    if count < 2:
        raise InputError(
            "blend transitions need at least 2 gap frames; "
            "raise the frame rate or use mode 'hard'"
        )
    out = np.empty((count,) + last.shape, dtype=np.float32)
    for t in range(count):
        u = t / (count - 1)
        w = np.float32(3.0 * u * u - 2.0 * u * u * u)
        out[t] = last * (np.float32(1.0) - w) + first * w
    out[0] = last
    out[-1] = first
    return out


def slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Spherical interpolation between unit quaternions (rotation inputs only).

    Falls back to normalized linear interpolation when the inputs are nearly
    parallel. Positional joint data goes through the cross-blend instead.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 0.9995:
        mix = q0 + u * (q1 - q0)
        return mix / np.linalg.norm(mix)
    theta = math.acos(min(1.0, dot))
    return (
        math.sin((1.0 - u) * theta) * q0 + math.sin(u * theta) * q1
    ) / math.sin(theta)


def concat_motions(
    plan: TimelinePlan,
    pool: dict[str, AtomicEntry],
    mode: str = "blend",
    cfg: CompositionConfig | None = None,
    sequence_id: str = "",
) -> MotionSequence:
    """Realize a timeline as one motion sequence.

    Each atomic is fitted to its planned span (trim from the front when too
    long, linear time-stretch when too short); transition gaps are filled by
    straight-line interpolation (hard) or an endpoint-pinned smoothstep
    cross-blend (blend). Frame counts come from rounding the centisecond
    boundaries, so the output length is exactly round(total_duration x fps).
    """
    if mode not in ("hard", "blend"):
        raise InputError(f"mode must be 'hard' or 'blend', got {mode!r}")
    if not plan.entries:
        raise InputError("empty timeline plan")
    motions = []
    for entry in plan.entries:
        atomic = pool.get(entry.atomic_id)
        if atomic is None:
            raise InputError(f"plan references unknown atomic {entry.atomic_id!r}")
        if atomic.motion is None:
            raise InputError(f"atomic {entry.atomic_id!r} carries no motion data")
        motions.append(atomic.motion)
    fps = motions[0].frame_rate_hz
    joints = motions[0].num_joints
    for motion in motions[1:]:
        if motion.frame_rate_hz != fps or motion.num_joints != joints:
            raise InputError(
                f"atomic {motion.id!r} has J={motion.num_joints} at "
                f"{motion.frame_rate_hz} Hz; expected J={joints} at {fps} Hz"
            )
    blocks = []
    prev_last: np.ndarray | None = None
    prev_end_f = 0
    for entry, motion in zip(plan.entries, motions):
        start_f = _frame_boundary(entry.start_cs, fps)
        end_f = _frame_boundary(entry.end_cs, fps)
        if end_f <= start_f:
            raise InputError(
                f"segment [{entry.start_cs}, {entry.end_cs}) cs spans no frames "
                f"at {fps} Hz"
            )
        fitted = _fit_frames(motion.frames, end_f - start_f)
        if prev_last is not None and start_f > prev_end_f:
            gap = start_f - prev_end_f
            fill = (
                _gap_frames_hard(prev_last, fitted[0], gap)
                if mode == "hard"
                else _gap_frames_blend(prev_last, fitted[0], gap)
            )
            blocks.append(fill)
        blocks.append(fitted)
        prev_last = fitted[-1]
        prev_end_f = end_f
    frames = np.concatenate(blocks, axis=0)
    return MotionSequence(frames=frames, frame_rate_hz=fps, id=sequence_id)


@dataclass
class PoolFilterReport:
    kept: int
    removed: int
    kept_by_source: dict[str, int]
    removed_by_source: dict[str, int]
    unscored_kept: int
    warnings: list[str] = field(default_factory=list)


def filter_pool(
    pool: list[AtomicEntry], min_alignment: float = 0.5
) -> tuple[list[AtomicEntry], PoolFilterReport]:
    """Drop entries whose alignment score falls below the threshold.

    The comparison is inclusive (score == threshold is kept). Entries with
    no score at all are kept but counted separately.
    """
    kept, removed = [], []
    unscored = 0
    for entry in pool:
        if entry.alignment_score is None:
            unscored += 1
            kept.append(entry)
        elif entry.alignment_score >= min_alignment:
            kept.append(entry)
        else:
            removed.append(entry)
    warnings = []
    if unscored:
        warnings.append(f"{unscored} entries have no alignment score; kept")
    if not kept:
        warnings.append("filter removed every pool entry")

    def by_source(entries: list[AtomicEntry]) -> dict[str, int]:
        counts: dict[str, int] = {}
        for entry in entries:
            counts[entry.source] = counts.get(entry.source, 0) + 1
        return counts

    return kept, PoolFilterReport(
        kept=len(kept),
        removed=len(removed),
        kept_by_source=by_source(kept),
        removed_by_source=by_source(removed),
        unscored_kept=unscored,
        warnings=warnings,
    )


def _load_default_lexicon() -> frozenset[str]:
    text = resources.files("dmc.data").joinpath("motion_verbs.txt").read_text("utf-8")
    verbs = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            verbs.add(line.lower())
    return frozenset(verbs)


_DEFAULT_LEXICON: frozenset[str] | None = None


def default_verb_lexicon() -> frozenset[str]:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = _load_default_lexicon()
    return _DEFAULT_LEXICON


def _inflection_candidates(token: str) -> list[str]:
    """Base forms a surface token might inflect from (-s/-es/-ies/-ed/-ing)."""
    forms = [token]
    if token.endswith("ies") and len(token) > 4:
        forms.append(token[:-3] + "y")
    if token.endswith("es") and len(token) > 3:
        forms.append(token[:-2])
    if token.endswith("s") and len(token) > 2:
        forms.append(token[:-1])
    for suffix in ("ed", "ing"):
        if token.endswith(suffix) and len(token) > len(suffix) + 1:
            stem = token[: -len(suffix)]
            forms.append(stem)
            forms.append(stem + "e")
            if len(stem) >= 2 and stem[-1] == stem[-2]:
                forms.append(stem[:-1])
    return forms


def count_verbs(caption: str, lexicon: frozenset[str] | None = None) -> int:
    """Count caption tokens whose base form is in the verb lexicon."""
    lexicon = lexicon if lexicon is not None else default_verb_lexicon()
    count = 0
    for token in tokenize(caption):
        if any(form in lexicon for form in _inflection_candidates(token)):
            count += 1
    return count


def partition_by_verbs(
    caption: str,
    lexicon: frozenset[str] | None = None,
    tagger=None,
) -> tuple[int, str]:
    """(verb_count, "simple"|"complex"): two or more verbs make it complex.

    A custom tagger (token list -> verb count) replaces the default
    lexicon-based counter when provided.
    """
    if tagger is not None:
        verbs = tagger(tokenize(caption))
    else:
        verbs = count_verbs(caption, lexicon)
    return verbs, ("simple" if verbs <= 1 else "complex")


@dataclass
class MotionWindow:
    """One fixed-size window; mask marks real frames (False = zero padding)."""

    start: int
    frames: np.ndarray
    mask: np.ndarray
    from_grid: bool


def window_motion(
    motion: MotionSequence, window: int = 16, stride: int = 8
) -> list[MotionWindow]:
    """Cut a sequence into overlapping fixed-size windows.

    Grid windows start at 0, stride, 2*stride, ...; when the grid leaves a
    tail uncovered, one extra window ending at the last frame is appended.
    Sequences shorter than the window yield a single zero-padded window.
    """
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    if not 1 <= stride < window:
        raise InputError(f"stride must satisfy 1 <= stride < window, got {stride}")
    n = motion.num_frames
    if n < window:
        frames = np.zeros((window,) + motion.frames.shape[1:], dtype=np.float32)
        frames[:n] = motion.frames
        mask = np.zeros(window, dtype=bool)
        mask[:n] = True
        return [MotionWindow(start=0, frames=frames, mask=mask, from_grid=True)]
    full_mask = np.ones(window, dtype=bool)
    count = (n - window) // stride + 1
    windows = [
        MotionWindow(
            start=k * stride,
            frames=motion.frames[k * stride : k * stride + window],
            mask=full_mask.copy(),
            from_grid=True,
        )
        for k in range(count)
    ]
    covered = (count - 1) * stride + window
    if covered < n:
        start = n - window
        windows.append(
            MotionWindow(
                start=start,
                frames=motion.frames[start : start + window],
                mask=full_mask.copy(),
                from_grid=False,
            )
        )
    return windows


def sequence_seed(seed: int, index: int) -> int:
    """Per-sequence sub-seed: stable hash of the master seed and index."""
    digest = hashlib.sha256(f"{seed}:{index}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def compose_sequence(
    pool: list[AtomicEntry],
    cfg: CompositionConfig,
    index: int,
) -> tuple[TimelinePlan, DenseAnnotation, int]:
    """Plan one output sequence; pure function of (pool, cfg, index)."""
    sub_seed = sequence_seed(cfg.seed, index)
    rng = random.Random(sub_seed)
    sequence_id = f"seq-{index:06d}"
    plan, annotation = plan_timeline(pool, cfg, rng, sequence_id=sequence_id)
    return plan, annotation, sub_seed


def assign_splits(count: int, cfg: CompositionConfig) -> list[str]:
    """Split name per sequence index, by seeded shuffle honoring the ratios."""
    order = list(range(count))
    random.Random(sequence_seed(cfg.seed, -1)).shuffle(order)
    r1, r2, _ = cfg.split_ratios
    cut1 = round(count * r1)
    cut2 = round(count * (r1 + r2))
    names = [""] * count
    for rank, index in enumerate(order):
        if rank < cut1:
            names[index] = "train"
        elif rank < cut2:
            names[index] = "val"
        else:
            names[index] = "test"
    return names


@dataclass
class DatasetManifest:
    config: dict
    sequences: list[dict]
    split_sizes: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "config": self.config,
            "split_sizes": self.split_sizes,
            "sequences": self.sequences,
        }


@dataclass
class BuiltDataset:
    manifest: DatasetManifest
    plans: list[TimelinePlan]
    annotations: list[DenseAnnotation]


def build_dataset(
    pool: list[AtomicEntry], count: int, cfg: CompositionConfig
) -> BuiltDataset:
    """Compose `count` annotated sequences plus a reproducibility manifest.

    The pool is used as given (filter first). Every sequence is derived from
    its own hashed sub-seed, so regeneration of any subset is independent of
    the others and of thread scheduling.
    """
    if count < 1:
        raise InputError(f"count must be >= 1, got {count}")
    splits = assign_splits(count, cfg)
    plans = []
    annotations = []
    records = []
    for index in range(count):
        plan, annotation, sub_seed = compose_sequence(pool, cfg, index)
        plans.append(plan)
        annotations.append(annotation)
        records.append(
            {
                "id": annotation.sequence_id,
                "seed": sub_seed,
                "split": splits[index],
                "atomic_ids": [entry.atomic_id for entry in plan.entries],
                "entries": [entry.to_dict() for entry in plan.entries],
                "gap_spans_cs": [list(span) for span in plan.gap_spans_cs],
                "total_duration_cs": plan.total_duration_cs,
            }
        )
    sizes = {name: splits.count(name) for name in SPLIT_NAMES}
    manifest = DatasetManifest(
        config=cfg.to_dict(), sequences=records, split_sizes=sizes
    )
    return BuiltDataset(manifest=manifest, plans=plans, annotations=annotations)
