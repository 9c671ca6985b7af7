"""Order-preserving alignment of predicted vs. reference captions.

A score matrix (rows = reference segments, cols = predicted segments) is
aligned by dynamic programming to the one-to-one, order-preserving matching
with maximal total score; the total yields redundancy-penalizing precision
(s*/P), recall (s*/R), and their harmonic F1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from dmc.core import DenseAnnotation, InputError, segment_iou
from dmc.textmetrics import meteor_lite, tokenize

CaptionScorer = Callable[[str, str], float]


def meteor_caption_scorer(prediction: str, reference: str) -> float:
    return meteor_lite(tokenize(prediction), [tokenize(reference)])


@dataclass
class ScoreMatrix:
    """R x P caption scores; entry (i, j) scores prediction j against reference i."""

    scores: list[list[float]]
    provenance: str = "internal-metric"

    def __post_init__(self) -> None:
        widths = {len(row) for row in self.scores}
        if len(widths) > 1:
            raise InputError(f"ragged score matrix: row widths {sorted(widths)}")
        for i, row in enumerate(self.scores):
            for j, value in enumerate(row):
                if not (isinstance(value, (int, float)) and math.isfinite(value)):
                    raise InputError(f"non-finite score at ({i}, {j}): {value!r}")
                if value < 0:
                    raise InputError(f"negative score at ({i}, {j}): {value}")

    @property
    def num_refs(self) -> int:
        return len(self.scores)

    @property
    def num_preds(self) -> int:
        return len(self.scores[0]) if self.scores else 0


@dataclass
class AlignmentPath:
    """Matched (ref-index, pred-index) pairs, strictly increasing in both."""

    pairs: list[tuple[int, int]]
    total_score: float


def build_score_matrix(
    refs: DenseAnnotation,
    preds: DenseAnnotation,
    scorer: CaptionScorer = meteor_caption_scorer,
    iou_weighted: bool = True,
) -> ScoreMatrix:
    """Score every (reference, prediction) caption pair.

    With iou_weighted set (the default), each entry is multiplied by the
    temporal IoU of the two segments, so well-phrased but misplaced captions
    still score low.
    """
    rows = []
    for i, ref_seg in enumerate(refs.segments):
        row = []
        for j, pred_seg in enumerate(preds.segments):
            try:
                value = scorer(pred_seg.caption, ref_seg.caption)
            except Exception as exc:
                raise InputError(f"scorer failed on pair (ref {i}, pred {j}): {exc}") from exc
            if iou_weighted:
                value *= segment_iou(pred_seg, ref_seg)
            row.append(value)
        rows.append(row)
    return ScoreMatrix(scores=rows, provenance="internal-metric")


def dp_align(matrix: ScoreMatrix) -> AlignmentPath:
    """Best order-preserving one-to-one matching by total score.

    Ties are broken toward the lexicographically smallest pair sequence
    (comparing (ref, pred) pairs front to back, a prefix sorting before any
    extension). The reconstruction's float comparisons are exact because
    suffix values are copied, never recomputed, during the DP.
    """
    s = matrix.scores
    n_refs, n_preds = matrix.num_refs, matrix.num_preds
    # f[i][j] = best total over refs i.. and preds j..
    f = [[0.0] * (n_preds + 1) for _ in range(n_refs + 1)]
    for i in range(n_refs - 1, -1, -1):
        for j in range(n_preds - 1, -1, -1):
            f[i][j] = max(f[i + 1][j], f[i][j + 1], s[i][j] + f[i + 1][j + 1])
    pairs: list[tuple[int, int]] = []
    i = j = 0
    while i < n_refs and j < n_preds and f[i][j] > 0.0:
        target = f[i][j]
        found = False
        for a in range(i, n_refs):
            for b in range(j, n_preds):
                if s[a][b] + f[a + 1][b + 1] == target:
                    pairs.append((a, b))
                    i, j = a + 1, b + 1
                    found = True
                    break
            if found:
                break
        assert found, "suffix table is inconsistent"
    return AlignmentPath(pairs=pairs, total_score=f[0][0])


def soda_score(
    refs: DenseAnnotation,
    preds: DenseAnnotation,
    scorer: CaptionScorer = meteor_caption_scorer,
    iou_weighted: bool = True,
    matrix: ScoreMatrix | None = None,
) -> tuple[float, float, float]:
    """(precision, recall, f1) from the optimal alignment's total score s*.

    precision = s*/P and recall = s*/R, so duplicated or missing predictions
    are penalized even when every matched pair scores perfectly. Either side
    empty yields all zeros. Scores are raw; reports scale by 100.
    """
    n_refs = refs.segment_count
    n_preds = preds.segment_count
    if n_refs == 0 or n_preds == 0:
        return (0.0, 0.0, 0.0)
    if matrix is None:
        matrix = build_score_matrix(refs, preds, scorer, iou_weighted)
    if matrix.num_refs != n_refs or matrix.num_preds != n_preds:
        raise InputError(
            f"score matrix is {matrix.num_refs}x{matrix.num_preds}, "
            f"annotations require {n_refs}x{n_preds}"
        )
    best = dp_align(matrix).total_score
    precision = best / n_preds
    recall = best / n_refs
    if precision + recall == 0.0:
        return (0.0, 0.0, 0.0)
    f1 = 2.0 * precision * recall / (precision + recall)
    return (precision, recall, f1)


def segment_keys(annotation: DenseAnnotation) -> list[str]:
    """Stable per-segment identifiers used by external score files."""
    return [f"{annotation.sequence_id}#{i}" for i in range(annotation.segment_count)]


def load_external_scores(
    path: str | Path, refs: DenseAnnotation, preds: DenseAnnotation
) -> ScoreMatrix:
    """Load a precomputed score matrix (e.g. from a neural caption scorer).

    Format: JSON object {"ref_ids": [...], "pred_ids": [...], "scores":
    [[...]]} where ids are "<sequence-id>#<segment-index>" in annotation
    order. Dimension or id mismatches and non-finite entries are errors.
    """
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    return external_scores_from_dict(record, refs, preds, label=str(path))


def external_scores_from_dict(
    record: dict, refs: DenseAnnotation, preds: DenseAnnotation, label: str = "scores"
) -> ScoreMatrix:
    try:
        ref_ids = list(record["ref_ids"])
        pred_ids = list(record["pred_ids"])
        scores = [[float(v) for v in row] for row in record["scores"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{label}: malformed score file: {exc}") from exc
    if ref_ids != segment_keys(refs):
        raise InputError(f"{label}: ref_ids do not match the reference segments")
    if pred_ids != segment_keys(preds):
        raise InputError(f"{label}: pred_ids do not match the predicted segments")
    if len(scores) != len(ref_ids) or any(len(row) != len(pred_ids) for row in scores):
        raise InputError(
            f"{label}: scores must be {len(ref_ids)}x{len(pred_ids)} to match the ids"
        )
    matrix = ScoreMatrix(scores=scores, provenance="external-file")
    return matrix
