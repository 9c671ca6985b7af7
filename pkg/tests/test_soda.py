"""Alignment-based caption scoring: DP oracle, score matrices, external files."""

import json
import random

import pytest

from dmc.core import DenseAnnotation, InputError, TimedSegment, Timestamp
from dmc.soda import (
    AlignmentPath,
    ScoreMatrix,
    build_score_matrix,
    dp_align,
    external_scores_from_dict,
    load_external_scores,
    meteor_caption_scorer,
    segment_keys,
    soda_score,
)
from dmc.textmetrics import meteor_lite, tokenize


def annotation(seq_id, spans_and_captions, duration=None):
    segments = tuple(
        TimedSegment(Timestamp(a), Timestamp(b), caption)
        for a, b, caption in spans_and_captions
    )
    total = duration if duration is not None else max(b for _, b, _ in spans_and_captions)
    return DenseAnnotation(seq_id, Timestamp(total), segments)


def matrix(rows):
    return ScoreMatrix(scores=[list(r) for r in rows], provenance="internal-metric")


# ---------------------------------------------------------------------------
# brute-force oracle over all order-preserving matchings
# ---------------------------------------------------------------------------


def all_monotone_matchings(n_refs, n_preds):
    found = []

    def extend(i, j, acc):
        found.append(list(acc))
        for a in range(i, n_refs):
            for b in range(j, n_preds):
                acc.append((a, b))
                extend(a + 1, b + 1, acc)
                acc.pop()

    extend(0, 0, [])
    return found


def oracle_align(scores):
    n_refs, n_preds = len(scores), len(scores[0]) if scores else 0
    best_pairs, best_total = [], 0.0
    for pairs in all_monotone_matchings(n_refs, n_preds):
        total = sum(scores[a][b] for a, b in pairs)
        if total > best_total or (total == best_total and pairs < best_pairs):
            best_pairs, best_total = pairs, total
    return best_pairs, best_total


class TestDpAlign:
    def test_single_cell(self):
        path = dp_align(matrix([[0.8]]))
        assert path.pairs == [(0, 0)]
        assert path.total_score == 0.8

    def test_diagonal_dominant(self):
        path = dp_align(matrix([[1.0, 0.0], [0.0, 1.0]]))
        assert path.pairs == [(0, 0), (1, 1)]
        assert path.total_score == 2.0

    def test_crossing_forbidden(self):
        # the two large entries cross, so only one of them can be used
        path = dp_align(matrix([[0.0, 1.0], [1.0, 0.0]]))
        assert path.total_score == 1.0
        assert path.pairs == [(0, 1)]

    def test_zero_matrix_gives_empty_path(self):
        path = dp_align(matrix([[0.0, 0.0], [0.0, 0.0]]))
        assert path.pairs == []
        assert path.total_score == 0.0

    def test_leading_zero_pair_when_lex_smaller(self):
        # [(0,0),(1,1)] and [(1,1)] tie on total; the former is lex-smaller
        path = dp_align(matrix([[0.0, 0.0], [0.0, 5.0]]))
        assert path.pairs == [(0, 0), (1, 1)]

    def test_trailing_zero_pairs_excluded(self):
        path = dp_align(matrix([[5.0, 0.0], [0.0, 0.0]]))
        assert path.pairs == [(0, 0)]

    def test_rectangular(self):
        path = dp_align(matrix([[0.0, 2.0, 0.0]]))
        assert path.pairs == [(0, 1)]
        assert path.total_score == 2.0

    def test_matches_oracle_on_random_matrices(self):
        rng = random.Random(555)
        for _ in range(250):
            n_refs = rng.randint(0, 4)
            n_preds = rng.randint(0, 4)
            scores = [
                [rng.randint(0, 1023) / 1024.0 * (rng.random() < 0.7) for _ in range(n_preds)]
                for _ in range(n_refs)
            ]
            got = dp_align(ScoreMatrix(scores=scores, provenance="internal-metric"))
            want_pairs, want_total = oracle_align(scores) if n_refs and n_preds else ([], 0.0)
            assert got.total_score == want_total
            assert got.pairs == want_pairs

    def test_monotone_in_entries(self):
        rng = random.Random(99)
        for _ in range(100):
            scores = [[rng.randint(0, 7) / 8.0 for _ in range(3)] for _ in range(3)]
            base = dp_align(matrix(scores)).total_score
            i, j = rng.randrange(3), rng.randrange(3)
            scores[i][j] += 0.25
            assert dp_align(matrix(scores)).total_score >= base


class TestScoreMatrix:
    def test_rejects_ragged(self):
        with pytest.raises(InputError):
            ScoreMatrix(scores=[[0.1, 0.2], [0.3]], provenance="internal-metric")

    def test_rejects_negative(self):
        with pytest.raises(InputError):
            matrix([[-0.1]])

    def test_rejects_non_finite(self):
        with pytest.raises(InputError):
            matrix([[float("nan")]])

    def test_dimensions(self):
        m = matrix([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert (m.num_refs, m.num_preds) == (2, 3)


class TestBuildScoreMatrix:
    def test_identity_entry_is_meteor_self_score(self):
        caption = "walks to the left slowly"
        ann = annotation("a", [(0, 100, caption)])
        m = build_score_matrix(ann, ann)
        assert m.scores[0][0] == meteor_lite(tokenize(caption), [tokenize(caption)])

    def test_disjoint_intervals_zero_when_weighted(self):
        ref = annotation("a", [(0, 100, "walks")], duration=300)
        pred = annotation("a", [(200, 300, "walks")], duration=300)
        assert build_score_matrix(ref, pred).scores == [[0.0]]

    def test_unweighted_ignores_intervals(self):
        ref = annotation("a", [(0, 100, "walks")], duration=300)
        pred = annotation("a", [(200, 300, "walks")], duration=300)
        m = build_score_matrix(ref, pred, iou_weighted=False)
        assert m.scores[0][0] == pytest.approx(0.5)  # single-token self score

    def test_scorer_failure_names_the_pair(self):
        def bad(prediction, reference):
            raise RuntimeError("boom")

        ref = annotation("a", [(0, 100, "walks")])
        with pytest.raises(InputError, match=r"ref 0, pred 0"):
            build_score_matrix(ref, ref, scorer=bad)


class TestSodaScore:
    def test_empty_sides(self):
        ref = annotation("a", [(0, 100, "walks")])
        empty = DenseAnnotation("a", Timestamp(100), ())
        assert soda_score(ref, empty) == (0.0, 0.0, 0.0)
        assert soda_score(empty, ref) == (0.0, 0.0, 0.0)

    def test_self_alignment_is_mean_meteor_self_score(self):
        caption = "a b c d e f g h i j"
        ann = annotation("a", [(0, 100, caption), (100, 200, caption + " k")])
        p, r, f1 = soda_score(ann, ann)
        selfscores = [
            meteor_lite(tokenize(seg.caption), [tokenize(seg.caption)])
            for seg in ann.segments
        ]
        want = sum(selfscores) / len(selfscores)
        assert p == pytest.approx(want, abs=1e-12)
        assert r == pytest.approx(want, abs=1e-12)
        assert f1 == pytest.approx(want, abs=1e-12)

    def test_ten_token_identity_fixture(self):
        caption = "a b c d e f g h i j"
        ann = annotation("a", [(0, 100, caption)])
        _, _, f1 = soda_score(ann, ann)
        assert f1 == pytest.approx(0.9995, abs=1e-9)

    def test_duplicate_prediction_penalized(self):
        caption = "walks then sits"
        s = meteor_lite(tokenize(caption), [tokenize(caption)])
        ref = annotation("a", [(0, 100, caption)])
        pred = annotation("a", [(0, 100, caption), (0, 100, caption)], duration=100)
        p, r, f1 = soda_score(ref, pred)
        assert p == pytest.approx(s / 2.0, abs=1e-12)
        assert r == pytest.approx(s, abs=1e-12)
        assert f1 == pytest.approx(2.0 / 3.0 * s, abs=1e-12)

    def test_zero_score_prediction_lowers_precision_only(self):
        ref = annotation("a", [(0, 100, "walks")], duration=400)
        pred1 = annotation("a", [(0, 100, "walks")], duration=400)
        pred2 = annotation("a", [(0, 100, "walks"), (300, 400, "zzz")], duration=400)
        p1, r1, _ = soda_score(ref, pred1)
        p2, r2, _ = soda_score(ref, pred2)
        assert p2 < p1
        assert r2 == r1

    def test_external_matrix_dimensions_checked(self):
        ref = annotation("a", [(0, 100, "walks")])
        with pytest.raises(InputError):
            soda_score(ref, ref, matrix=matrix([[0.1, 0.2]]))

    def test_f1_bounded_by_max_entry(self):
        rng = random.Random(31)
        ref = annotation("a", [(0, 100, "x"), (100, 200, "y"), (200, 300, "z")])
        for _ in range(50):
            scores = [[rng.randint(0, 1023) / 1024.0 for _ in range(3)] for _ in range(3)]
            _, _, f1 = soda_score(ref, ref, matrix=matrix(scores))
            assert f1 <= max(max(row) for row in scores) + 1e-12


class TestExternalScores:
    def test_round_trip(self, tmp_path):
        ref = annotation("seq", [(0, 100, "walks"), (100, 200, "sits")])
        pred = annotation("seq", [(0, 200, "moves")], duration=200)
        record = {
            "ref_ids": segment_keys(ref),
            "pred_ids": segment_keys(pred),
            "scores": [[0.25], [0.75]],
        }
        path = tmp_path / "scores.json"
        path.write_text(json.dumps(record), encoding="utf-8")
        m = load_external_scores(path, ref, pred)
        assert m.provenance == "external-file"
        assert m.scores == [[0.25], [0.75]]

    def test_segment_keys_format(self):
        ref = annotation("seq-000001", [(0, 100, "walks"), (100, 200, "sits")])
        assert segment_keys(ref) == ["seq-000001#0", "seq-000001#1"]

    def test_id_mismatch(self):
        ref = annotation("seq", [(0, 100, "walks")])
        record = {"ref_ids": ["other#0"], "pred_ids": segment_keys(ref), "scores": [[0.1]]}
        with pytest.raises(InputError, match="ref_ids"):
            external_scores_from_dict(record, ref, ref)

    def test_dimension_mismatch(self):
        ref = annotation("seq", [(0, 100, "walks"), (100, 200, "sits")])
        record = {
            "ref_ids": segment_keys(ref),
            "pred_ids": segment_keys(ref),
            "scores": [[0.1, 0.2]],
        }
        with pytest.raises(InputError):
            external_scores_from_dict(record, ref, ref)

    def test_non_finite_entry(self):
        ref = annotation("seq", [(0, 100, "walks")])
        record = {
            "ref_ids": segment_keys(ref),
            "pred_ids": segment_keys(ref),
            "scores": [[float("inf")]],
        }
        with pytest.raises(InputError):
            external_scores_from_dict(record, ref, ref)

    def test_invalid_json_file(self, tmp_path):
        ref = annotation("seq", [(0, 100, "walks")])
        path = tmp_path / "scores.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(InputError):
            load_external_scores(path, ref, ref)


def test_meteor_caption_scorer_tokenizes():
    assert meteor_caption_scorer("Walks!", "walks") == pytest.approx(0.5)


def test_alignment_path_total_matches_pairs():
    rng = random.Random(77)
    for _ in range(100):
        scores = [[rng.randint(0, 1023) / 1024.0 for _ in range(4)] for _ in range(4)]
        path = dp_align(ScoreMatrix(scores=scores, provenance="internal-metric"))
        assert path.total_score == sum(scores[a][b] for a, b in path.pairs)
        # strictly increasing in both coordinates
        for (a1, b1), (a2, b2) in zip(path.pairs, path.pairs[1:]):
            assert a1 < a2 and b1 < b2
