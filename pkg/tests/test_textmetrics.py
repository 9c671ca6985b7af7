"""Caption metric tests: pinned hand-computed values plus independent oracles."""

import math
import random
from collections import Counter

import pytest

from dmc.core import InputError
from dmc.textmetrics import (
    CorpusStats,
    bleu_n,
    build_corpus_stats,
    cider,
    meteor_lite,
    ngrams,
    rouge_l,
    tokenize,
)

# ---------------------------------------------------------------------------
# oracles, written from the metric definitions, not from the implementation
# ---------------------------------------------------------------------------


def oracle_bleu(cand, refs, n, smoothing=True):
    if not cand:
        return 0.0
    top = min(n, len(cand))
    logs = []
    for order in range(1, top + 1):
        grams = [tuple(cand[i : i + order]) for i in range(len(cand) - order + 1)]
        counts = Counter(grams)
        clip = Counter()
        for ref in refs:
            rcounts = Counter(tuple(ref[i : i + order]) for i in range(len(ref) - order + 1))
            for g, c in rcounts.items():
                clip[g] = max(clip[g], c)
        matched = sum(min(c, clip[g]) for g, c in counts.items())
        total = len(grams)
        if matched == 0:
            if not smoothing:
                return 0.0
            p = 1.0 / (total + 1.0)
        else:
            p = matched / total
        logs.append(math.log(p))
    c = len(cand)
    r = sorted(refs, key=lambda ref: (abs(len(ref) - c), len(ref)))[0]
    bp = 1.0 if c > len(r) else math.exp(1.0 - len(r) / c)
    return bp * math.exp(sum(logs) / top)


def oracle_lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def random_sentence(rng, vocab, max_len=9):
    return [rng.choice(vocab) for _ in range(rng.randint(1, max_len))]


# ---------------------------------------------------------------------------
# tokenize / ngrams
# ---------------------------------------------------------------------------


def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("Doing a left foot squat!") == ["doing", "a", "left", "foot", "squat"]
    assert len(tokenize("doing a left foot squat")) == 5


def test_tokenize_idempotent():
    rng = random.Random(1)
    vocab = ["Walks", "JUMPS,", "sits.", "x9", "-", "(turn)"]
    for _ in range(50):
        text = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 6)))
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


def test_ngrams():
    assert ngrams(["a", "b", "c"], 2) == [("a", "b"), ("b", "c")]
    assert ngrams(["a"], 2) == []


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


class TestBleu:
    def test_identity_scores_one(self):
        for tokens in (["walk"], ["a", "b"], ["a", "b", "c", "d", "e"]):
            assert bleu_n(tokens, [tokens], n=4) == pytest.approx(1.0, abs=1e-12)

    def test_clipped_precision_fixture(self):
        value = bleu_n(["the", "the", "the"], [["the", "cat"]], n=1)
        assert value == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_brevity_penalty_fixture(self):
        value = bleu_n(["a"], [["a", "b", "c", "d"]], n=1)
        assert value == pytest.approx(math.exp(1.0 - 4.0), abs=1e-12)

    def test_empty_candidate(self):
        assert bleu_n([], [["a"]], n=4) == 0.0

    def test_no_smoothing_zeroes_on_miss(self):
        assert bleu_n(["a", "b"], [["c", "d"]], n=1, smoothing=False) == 0.0
        assert bleu_n(["a", "b"], [["c", "d"]], n=1, smoothing=True) > 0.0

    def test_clipping_caps_repeats(self):
        once = bleu_n(["cat"], [["the", "cat"]], n=1)
        spam = bleu_n(["cat", "cat", "cat"], [["the", "cat"]], n=1)
        assert spam < once

    def test_reference_order_irrelevant(self):
        refs = [["a", "b", "c"], ["b", "c", "d", "e"]]
        cand = ["b", "c", "d"]
        assert bleu_n(cand, refs, n=4) == bleu_n(cand, list(reversed(refs)), n=4)

    def test_input_validation(self):
        with pytest.raises(InputError):
            bleu_n(["a"], [["a"]], n=0)
        with pytest.raises(InputError):
            bleu_n(["a"], [["a"]], n=5)
        with pytest.raises(InputError):
            bleu_n(["a"], [])

    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_matches_oracle_on_random_pairs(self, n):
        rng = random.Random(100 + n)
        vocab = ["a", "b", "c", "d"]
        for _ in range(300):
            cand = random_sentence(rng, vocab)
            refs = [random_sentence(rng, vocab) for _ in range(rng.randint(1, 3))]
            smoothing = rng.random() < 0.5
            got = bleu_n(cand, refs, n=n, smoothing=smoothing)
            want = oracle_bleu(cand, refs, n, smoothing)
            assert got == pytest.approx(want, abs=1e-12)
            assert 0.0 <= got <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# ROUGE_L
# ---------------------------------------------------------------------------


class TestRougeL:
    def test_identity(self):
        tokens = ["walks", "to", "the", "left"]
        assert rouge_l(tokens, [tokens]) == pytest.approx(1.0, abs=1e-12)

    def test_police_gunman_fixture(self):
        cand = ["police", "kill", "the", "gunman"]
        ref = ["police", "killed", "the", "gunman"]
        assert rouge_l(cand, [ref]) == pytest.approx(0.75, abs=1e-9)

    def test_empty_candidate(self):
        assert rouge_l([], [["a"]]) == 0.0

    def test_max_over_references(self):
        cand = ["a", "b", "c"]
        weak = ["a", "x", "y"]
        exact = ["a", "b", "c"]
        assert rouge_l(cand, [weak, exact]) == pytest.approx(1.0)
        assert rouge_l(cand, [exact, weak]) == pytest.approx(1.0)

    def test_matches_formula_with_oracle_lcs(self):
        rng = random.Random(7)
        vocab = ["a", "b", "c", "d", "e"]
        beta_sq = 1.2 * 1.2
        for _ in range(300):
            cand = random_sentence(rng, vocab)
            refs = [random_sentence(rng, vocab) for _ in range(rng.randint(1, 3))]
            want = 0.0
            for ref in refs:
                lcs = oracle_lcs(cand, ref)
                if lcs == 0:
                    continue
                recall, precision = lcs / len(ref), lcs / len(cand)
                want = max(
                    want,
                    (1 + beta_sq) * recall * precision / (recall + beta_sq * precision),
                )
            assert rouge_l(cand, refs) == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------


def corpus_of(*docs):
    return build_corpus_stats([[tokenize(d)] for d in docs])


class TestCider:
    def test_identity_in_two_document_corpus(self):
        stats = corpus_of("a b c d e", "f g h i j")
        cand = tokenize("a b c d e")
        assert cider(cand, [cand], stats) == pytest.approx(10.0, abs=1e-6)

    def test_single_document_corpus_scores_zero(self):
        stats = corpus_of("a b c d e")
        cand = tokenize("a b c d e")
        assert cider(cand, [cand], stats) == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_vocabulary_scores_zero(self):
        stats = corpus_of("a b", "c d")
        assert cider(["a", "b"], [["c", "d"]], stats) == 0.0

    def test_hand_computed_partial_overlap(self):
        # cand [a,a] vs ref [a,b]: order-1 cosine with clipping is 1/(2*sqrt(2)),
        # orders 2..4 contribute 0, no length penalty
        stats = corpus_of("a b", "c d")
        got = cider(["a", "a"], [["a", "b"]], stats)
        want = 10.0 * (1.0 / (2.0 * math.sqrt(2.0))) / 4.0
        assert got == pytest.approx(want, abs=1e-12)

    def test_length_penalty(self):
        # same unigram content, lengths 2 vs 8: penalty exp(-36/72)
        stats = corpus_of("a b", "c d")
        short = cider(["a", "b"], [["a", "b"] * 4], stats)
        same = cider(["a", "b"] * 4, [["a", "b"] * 4], stats)
        assert short < same

    def test_swapping_identical_pair_is_stable(self):
        stats = corpus_of("a b c", "d e f")
        x, y = tokenize("a b c"), tokenize("a b c")
        assert cider(x, [y], stats) == cider(y, [x], stats)

    def test_unseen_ngram_gets_clamped_df(self):
        stats = corpus_of("a b", "c d")
        assert stats.idf(("zzz",)) == pytest.approx(math.log(2.0))

    def test_df_never_exceeds_document_count(self):
        rng = random.Random(3)
        docs = [
            [random_sentence(rng, ["a", "b", "c"], 6) for _ in range(rng.randint(1, 3))]
            for _ in range(10)
        ]
        stats = build_corpus_stats(docs)
        assert all(0 < df <= stats.document_count for df in stats.document_frequency.values())

    def test_range(self):
        rng = random.Random(11)
        vocab = ["a", "b", "c", "d"]
        docs = [[random_sentence(rng, vocab)] for _ in range(6)]
        stats = build_corpus_stats(docs)
        for _ in range(200):
            cand = random_sentence(rng, vocab)
            refs = [random_sentence(rng, vocab) for _ in range(rng.randint(1, 3))]
            value = cider(cand, refs, stats)
            assert 0.0 <= value <= 10.0 + 1e-9

    def test_empty_corpus_rejected(self):
        with pytest.raises(InputError):
            build_corpus_stats([])
        with pytest.raises(InputError):
            CorpusStats(document_frequency={}, document_count=0)


# ---------------------------------------------------------------------------
# METEOR-lite
# ---------------------------------------------------------------------------


class TestMeteorLite:
    def test_identical_ten_tokens(self):
        tokens = list("abcdefghij")
        assert meteor_lite(tokens, [tokens]) == pytest.approx(0.9995, abs=1e-9)

    def test_identical_single_token(self):
        assert meteor_lite(["walk"], [["walk"]]) == pytest.approx(0.5, abs=1e-12)

    def test_identical_three_tokens(self):
        tokens = ["walks", "then", "sits"]
        want = 1.0 - 0.5 * (1.0 / 3.0) ** 3
        assert meteor_lite(tokens, [tokens]) == pytest.approx(want, abs=1e-12)

    def test_no_overlap(self):
        assert meteor_lite(["a", "b"], [["c", "d"]]) == 0.0

    def test_stem_stage_matches_inflections(self):
        cand = ["the", "man", "running"]
        ref = ["the", "man", "runs"]
        want = 1.0 - 0.5 * (1.0 / 3.0) ** 3
        assert meteor_lite(cand, [ref]) == pytest.approx(want, abs=1e-12)

    def test_recall_weighted_f_mean(self):
        # P=1, R=0.5: F = PR/(0.9P + 0.1R) = 0.5/0.95; one chunk, penalty 0.5
        got = meteor_lite(["walks"], [["walks", "fast"]])
        assert got == pytest.approx((0.5 / 0.95) * 0.5, abs=1e-12)

    def test_scrambled_order_pays_chunk_penalty(self):
        # every token matches but each pair is its own chunk
        got = meteor_lite(["a", "c", "b", "d"], [["a", "b", "c", "d"]])
        assert got == pytest.approx(0.5, abs=1e-12)

    def test_max_over_references(self):
        cand = ["walks", "left"]
        far = [["sits"]]
        assert meteor_lite(cand, [["walks", "left"]] + far) > meteor_lite(cand, far)

    def test_range_and_reference_permutation(self):
        rng = random.Random(23)
        vocab = ["walk", "walks", "run", "running", "sit", "left"]
        for _ in range(200):
            cand = random_sentence(rng, vocab, 6)
            refs = [random_sentence(rng, vocab, 6) for _ in range(rng.randint(1, 3))]
            value = meteor_lite(cand, refs)
            assert 0.0 <= value <= 1.0
            shuffled = refs[:]
            rng.shuffle(shuffled)
            assert meteor_lite(cand, shuffled) == value
