"""Temporal localization metrics and full evaluation reports.

Localization uses greedy IoU matching (any overlap counts for tIoU;
thresholds apply to F1 and caption metrics). Caption metrics are computed
on matched pairs per IoU threshold and averaged over thresholds. Corpus
aggregation is macro: the mean of per-sequence scores in sorted-id order,
which keeps reports byte-identical at any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from dmc.core import DenseAnnotation, InputError, TimedSegment, Timestamp, segment_iou
from dmc.soda import ScoreMatrix, soda_score
from dmc.textmetrics import (
    CorpusStats,
    bleu_n,
    build_corpus_stats,
    cider,
    meteor_lite,
    rouge_l,
    tokenize,
)

DEFAULT_IOU_THRESHOLDS = (0.3, 0.5, 0.7, 0.9)
CAPTION_METRICS = ("bleu1", "bleu4", "cider", "meteor", "rouge_l")
REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    scorers: tuple[str, ...] = CAPTION_METRICS
    soda_iou_weighted: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        if not self.iou_thresholds:
            raise InputError("need at least one IoU threshold")
        if list(self.iou_thresholds) != sorted(self.iou_thresholds):
            raise InputError("IoU thresholds must be sorted ascending")
        for tau in self.iou_thresholds:
            if not 0.0 < tau <= 1.0:
                raise InputError(f"IoU threshold {tau} outside (0, 1]")
        unknown = set(self.scorers) - set(CAPTION_METRICS)
        if unknown:
            raise InputError(f"unknown caption metrics: {sorted(unknown)}")
        if self.threads < 1:
            raise InputError(f"threads must be >= 1, got {self.threads}")

    def to_dict(self) -> dict:
        # threads is an execution knob, not a scoring parameter; leaving it
        # out keeps reports byte-identical across worker counts.
        return {
            "iou_thresholds": list(self.iou_thresholds),
            "scorers": list(self.scorers),
            "soda_iou_weighted": self.soda_iou_weighted,
            "aggregation": "macro",
        }


@dataclass
class MatchResult:
    """Greedy one-to-one matching; pairs are (pred-index, ref-index, iou)."""

    pairs: list[tuple[int, int, float]]
    unmatched_preds: list[int]
    unmatched_refs: list[int]


def greedy_match(preds: DenseAnnotation, refs: DenseAnnotation) -> MatchResult:
    """Repeatedly match the highest-IoU free pair until no overlap remains.

    Zero-IoU pairs are never matched. Equal IoUs are resolved toward the
    smaller reference index, then the smaller prediction index, so the
    result is a pure function of the inputs.
    """
    candidates = []
    for r, ref_seg in enumerate(refs.segments):
        for p, pred_seg in enumerate(preds.segments):
            iou = segment_iou(pred_seg, ref_seg)
            if iou > 0.0:
                candidates.append((-iou, r, p))
    candidates.sort()
    free_preds = [True] * preds.segment_count
    free_refs = [True] * refs.segment_count
    pairs = []
    for neg_iou, r, p in candidates:
        if free_preds[p] and free_refs[r]:
            free_preds[p] = False
            free_refs[r] = False
            pairs.append((p, r, -neg_iou))
    return MatchResult(
        pairs=pairs,
        unmatched_preds=[p for p, is_free in enumerate(free_preds) if is_free],
        unmatched_refs=[r for r, is_free in enumerate(free_refs) if is_free],
    )


def tiou_f1(
    match: MatchResult,
    num_preds: int,
    num_refs: int,
    thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS,
) -> tuple[float, float]:
    """(tIoU, F1), both x100.

    tIoU is the mean IoU over matched pairs only; unmatched segments are
    penalized through F1, which counts a pair as a true positive at
    threshold tau when its IoU >= tau (inclusive) and averages the
    per-threshold harmonic F1.
    """
    if num_preds == 0 or num_refs == 0:
        return (0.0, 0.0)
    ious = [iou for _, _, iou in match.pairs]
    tiou = 100.0 * sum(ious) / len(ious) if ious else 0.0
    f1_total = 0.0
    for tau in thresholds:
        tp = sum(1 for iou in ious if iou >= tau)
        if tp == 0:
            continue
        precision = tp / num_preds
        recall = tp / num_refs
        f1_total += 2.0 * precision * recall / (precision + recall)
    return (tiou, 100.0 * f1_total / len(thresholds))


def _pair_caption_scores(
    preds: DenseAnnotation,
    refs: DenseAnnotation,
    match: MatchResult,
    scorers: tuple[str, ...],
    stats: CorpusStats,
) -> list[tuple[float, dict[str, float]]]:
    scored = []
    for p, r, iou in match.pairs:
        cand = tokenize(preds.segments[p].caption)
        ref = [tokenize(refs.segments[r].caption)]
        values = {}
        for name in scorers:
            if name == "bleu1":
                values[name] = bleu_n(cand, ref, n=1)
            elif name == "bleu4":
                values[name] = bleu_n(cand, ref, n=4)
            elif name == "rouge_l":
                values[name] = rouge_l(cand, ref)
            elif name == "meteor":
                values[name] = meteor_lite(cand, ref)
            elif name == "cider":
                values[name] = cider(cand, ref, stats)
        scored.append((iou, values))
    return scored


def thresholded_caption_eval(
    preds: DenseAnnotation,
    refs: DenseAnnotation,
    scorers: tuple[str, ...],
    thresholds: tuple[float, ...],
    stats: CorpusStats,
    match: MatchResult | None = None,
) -> dict[str, float]:
    """Caption metrics over IoU-thresholded greedy matches, x100.

    Per threshold, pairs with IoU >= tau are scored and averaged (0 when
    none survive); the reported value is the mean over thresholds.
    """
    if match is None:
        match = greedy_match(preds, refs)
    scored = _pair_caption_scores(preds, refs, match, scorers, stats)
    result = {}
    for name in scorers:
        total = 0.0
        for tau in thresholds:
            kept = [values[name] for iou, values in scored if iou >= tau]
            if kept:
                total += sum(kept) / len(kept)
        result[name] = 100.0 * total / len(thresholds)
    return result


def aggregate_frame_labels(
    labels: list[str],
    frame_rate_hz: float,
    sequence_id: str = "",
) -> DenseAnnotation:
    """Run-length encode per-frame labels into a dense annotation.

    Frame i spans [i/fps, (i+1)/fps); maximal runs of one label become one
    segment. Boundaries are rounded to whole centiseconds, so frame rates
    above 100 Hz can collapse a single-frame run and are rejected.
    """
    if not labels:
        raise InputError("need at least one frame label")
    if frame_rate_hz <= 0:
        raise InputError(f"frame_rate_hz must be positive, got {frame_rate_hz}")
    boundaries_cs = [round(i * 100.0 / frame_rate_hz) for i in range(len(labels) + 1)]
    segments = []
    run_start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[run_start]:
            start_cs = boundaries_cs[run_start]
            end_cs = boundaries_cs[i]
            if end_cs <= start_cs:
                raise InputError(
                    f"frame run [{run_start}, {i}) collapses on the centisecond "
                    f"grid at {frame_rate_hz} Hz"
                )
            if not labels[run_start] or not labels[run_start].strip():
                raise InputError(f"empty label at frame {run_start}")
            segments.append(
                TimedSegment(
                    start=Timestamp(start_cs),
                    end=Timestamp(end_cs),
                    caption=labels[run_start],
                )
            )
            run_start = i
    return DenseAnnotation(
        sequence_id=sequence_id,
        duration=Timestamp(boundaries_cs[-1]),
        segments=tuple(segments),
    )


@dataclass
class MetricReport:
    per_sequence: dict[str, dict[str, float]]
    corpus: dict[str, float]
    config: dict
    warnings: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "counts": self.counts,
            "corpus": self.corpus,
            "per_sequence": self.per_sequence,
            "warnings": self.warnings,
        }


def _zero_scores(config: EvalConfig, with_external: bool) -> dict[str, float]:
    scores = {name: 0.0 for name in config.scorers}
    scores.update(
        tiou=0.0, f1=0.0, soda_precision=0.0, soda_recall=0.0, soda_f=0.0
    )
    if with_external:
        scores.update(
            soda_external_precision=0.0, soda_external_recall=0.0, soda_external_f=0.0
        )
    return scores


def _evaluate_sequence(
    preds: DenseAnnotation,
    refs: DenseAnnotation,
    config: EvalConfig,
    stats: CorpusStats,
    external: ScoreMatrix | None,
) -> dict[str, float]:
    match = greedy_match(preds, refs)
    tiou, f1 = tiou_f1(match, preds.segment_count, refs.segment_count, config.iou_thresholds)
    scores = thresholded_caption_eval(
        preds, refs, config.scorers, config.iou_thresholds, stats, match
    )
    scores["tiou"] = tiou
    scores["f1"] = f1
    precision, recall, soda_f = soda_score(
        refs, preds, iou_weighted=config.soda_iou_weighted
    )
    scores["soda_precision"] = 100.0 * precision
    scores["soda_recall"] = 100.0 * recall
    scores["soda_f"] = 100.0 * soda_f
    if external is not None:
        precision, recall, soda_f = soda_score(refs, preds, matrix=external)
        scores["soda_external_precision"] = 100.0 * precision
        scores["soda_external_recall"] = 100.0 * recall
        scores["soda_external_f"] = 100.0 * soda_f
    return scores


def _index_by_id(annotations: list[DenseAnnotation], label: str) -> dict[str, DenseAnnotation]:
    table: dict[str, DenseAnnotation] = {}
    for annotation in annotations:
        if annotation.sequence_id in table:
            raise InputError(f"duplicate {label} id {annotation.sequence_id!r}")
        table[annotation.sequence_id] = annotation
    return table


def evaluate(
    refs: list[DenseAnnotation],
    preds: list[DenseAnnotation],
    config: EvalConfig | None = None,
    external_scores: dict[str, ScoreMatrix] | None = None,
) -> MetricReport:
    """Score predictions against references, id by id.

    Every reference id contributes to the macro average; a reference with
    no prediction scores zero across the board with a warning. Predictions
    whose id has no reference are ignored with a warning. CIDEr document
    frequencies are built once from every reference caption in the split.
    """
    config = config or EvalConfig()
    ref_table = _index_by_id(refs, "reference")
    pred_table = _index_by_id(preds, "prediction")
    if not ref_table:
        raise InputError("no reference sequences")
    if not set(ref_table) & set(pred_table):
        raise InputError("no prediction id matches any reference id")
    stats = build_corpus_stats(
        [[tokenize(seg.caption)] for ref in refs for seg in ref.segments]
    )
    warnings = []
    missing = sorted(set(ref_table) - set(pred_table))
    for seq_id in missing:
        warnings.append(f"no prediction for reference id {seq_id!r}; scored as zero")
    for seq_id in sorted(set(pred_table) - set(ref_table)):
        warnings.append(f"prediction id {seq_id!r} has no reference; ignored")
    if external_scores is not None:
        lacking = sorted((set(ref_table) & set(pred_table)) - set(external_scores))
        if lacking:
            raise InputError(f"external scores missing for ids: {lacking[:5]}")

    ref_ids = sorted(ref_table)
    shared = [seq_id for seq_id in ref_ids if seq_id in pred_table]

    def work(seq_id: str) -> tuple[str, dict[str, float]]:
        external = external_scores.get(seq_id) if external_scores else None
        return seq_id, _evaluate_sequence(
            pred_table[seq_id], ref_table[seq_id], config, stats, external
        )

    if config.threads > 1 and len(shared) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = dict(pool.map(work, shared))
    else:
        results = dict(work(seq_id) for seq_id in shared)

    with_external = external_scores is not None
    per_sequence = {}
    for seq_id in ref_ids:
        if seq_id in results:
            per_sequence[seq_id] = results[seq_id]
            if ref_table[seq_id].segment_count == 0 or pred_table[seq_id].segment_count == 0:
                warnings.append(f"id {seq_id!r}: empty segment list; localization scored zero")
        else:
            per_sequence[seq_id] = _zero_scores(config, with_external)

    metric_names = sorted(next(iter(per_sequence.values())))
    corpus = {}
    for name in metric_names:
        corpus[name] = sum(per_sequence[seq_id].get(name, 0.0) for seq_id in ref_ids) / len(ref_ids)
    counts = {
        "references": len(ref_table),
        "predictions": len(pred_table),
        "evaluated": len(shared),
        "missing_predictions": len(missing),
    }
    return MetricReport(
        per_sequence=per_sequence,
        corpus=corpus,
        config=config.to_dict(),
        warnings=warnings,
        counts=counts,
    )
