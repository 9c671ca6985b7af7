"""Sentence-level caption metrics: BLEU, ROUGE_L, CIDEr, METEOR-lite.

All scorers take pre-tokenized captions (lowercase token lists) and return
raw scores: [0, 1] for BLEU/ROUGE/METEOR, [0, 10] for CIDEr. Reporting at
the conventional x100 scale happens in the evaluation layer.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

from dmc.core import InputError
from dmc.stemmer import stem

MAX_NGRAM_ORDER = 4

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN.findall(text.lower())


def ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def bleu_n(
    candidate: list[str],
    references: list[list[str]],
    n: int = 4,
    smoothing: bool = True,
) -> float:
    """Sentence BLEU: clipped n-gram precisions (orders 1..n) x brevity penalty.

    The effective top order is capped at the candidate length so an exact
    copy of a reference always scores 1.0. With smoothing on, an order with
    zero matches is add-one smoothed rather than zeroing the product.
    """
    if n < 1 or n > MAX_NGRAM_ORDER:
        raise InputError(f"n must be in 1..{MAX_NGRAM_ORDER}, got {n}")
    if not references:
        raise InputError("bleu_n needs at least one reference")
    if not candidate:
        return 0.0
    top = min(n, len(candidate))
    log_sum = 0.0
    for order in range(1, top + 1):
        cand_counts = Counter(ngrams(candidate, order))
        max_ref: Counter = Counter()
        for ref in references:
            for gram, count in Counter(ngrams(ref, order)).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        total = sum(cand_counts.values())
        clipped = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
        if clipped == 0:
            if not smoothing:
                return 0.0
            precision = 1.0 / (total + 1.0)
        else:
            precision = clipped / total
        log_sum += math.log(precision)
    c = len(candidate)
    r = min((len(ref) for ref in references), key=lambda length: (abs(length - c), length))
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_sum / top)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for token in a:
        cur = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(
    candidate: list[str], references: list[list[str]], beta: float = 1.2
) -> float:
    """LCS-based F-score, max over references; beta weighs recall over precision."""
    if not references:
        raise InputError("rouge_l needs at least one reference")
    if not candidate:
        return 0.0
    best = 0.0
    beta_sq = beta * beta
    for ref in references:
        if not ref:
            continue
        lcs = _lcs_length(candidate, ref)
        if lcs == 0:
            continue
        recall = lcs / len(ref)
        precision = lcs / len(candidate)
        score = (1.0 + beta_sq) * recall * precision / (recall + beta_sq * precision)
        best = max(best, score)
    return best


@dataclass
class CorpusStats:
    """Document frequencies over the reference corpus, for CIDEr's idf."""

    document_frequency: dict[tuple[str, ...], int]
    document_count: int

    def __post_init__(self) -> None:
        if self.document_count < 1:
            raise InputError("corpus must contain at least one document")

    def idf(self, gram: tuple[str, ...]) -> float:
        df = self.document_frequency.get(gram, 0)
        return math.log(self.document_count) - math.log(max(1.0, float(df)))


def build_corpus_stats(documents: list[list[list[str]]]) -> CorpusStats:
    """Count, per n-gram (n = 1..4), how many documents contain it.

    A document is one group of reference token lists; an n-gram occurring
    several times in a group still counts that group once.
    """
    if not documents:
        raise InputError("corpus must contain at least one document")
    df: dict[tuple[str, ...], int] = {}
    for group in documents:
        seen: set[tuple[str, ...]] = set()
        for tokens in group:
            for order in range(1, MAX_NGRAM_ORDER + 1):
                seen.update(ngrams(tokens, order))
        for gram in seen:
            df[gram] = df.get(gram, 0) + 1
    return CorpusStats(document_frequency=df, document_count=len(documents))


def _tfidf_vector(
    tokens: list[str], stats: CorpusStats
) -> tuple[list[dict[tuple[str, ...], float]], list[float]]:
    vectors = []
    norms = []
    for order in range(1, MAX_NGRAM_ORDER + 1):
        vec = {
            gram: count * stats.idf(gram)
            for gram, count in Counter(ngrams(tokens, order)).items()
        }
        vectors.append(vec)
        norms.append(math.sqrt(sum(value * value for value in vec.values())))
    return vectors, norms


def cider(
    candidate: list[str],
    references: list[list[str]],
    stats: CorpusStats,
    sigma: float = 6.0,
) -> float:
    """CIDEr-D: clipped tf-idf cosine per order with a gaussian length penalty.

    Averaged over orders 1..4 and over references, scaled x10 (raw range
    [0, 10]). A single-document corpus has every idf = 0 and scores 0.
    """
    if not references:
        raise InputError("cider needs at least one reference")
    if not candidate:
        return 0.0
    cand_vecs, cand_norms = _tfidf_vector(candidate, stats)
    per_order = [0.0] * MAX_NGRAM_ORDER
    for ref in references:
        ref_vecs, ref_norms = _tfidf_vector(ref, stats)
        delta = float(len(candidate) - len(ref))
        penalty = math.exp(-(delta * delta) / (2.0 * sigma * sigma))
        for idx in range(MAX_NGRAM_ORDER):
            dot = 0.0
            ref_vec = ref_vecs[idx]
            # Candidate counts are clipped at the reference counts, so
            # spamming a matched n-gram cannot inflate the similarity.
            for gram, value in cand_vecs[idx].items():
                other = ref_vec.get(gram, 0.0)
                dot += min(value, other) * other
            if cand_norms[idx] != 0.0 and ref_norms[idx] != 0.0:
                dot /= cand_norms[idx] * ref_norms[idx]
            per_order[idx] += dot * penalty
    mean = sum(per_order) / (MAX_NGRAM_ORDER * len(references))
    return mean * 10.0


def _stage_pairs(
    cand_keys: list[str],
    ref_keys: list[str],
    free_cand: list[bool],
    free_ref: list[bool],
) -> list[tuple[int, int]]:
    """Match free positions with equal keys, in-order within each key class.

    Pairing the i-th free occurrence with the i-th free occurrence never
    crosses inside a class, which keeps chunk counts minimal for the common
    case of few repeated words.
    """
    buckets: dict[str, list[int]] = {}
    for j, key in enumerate(ref_keys):
        if free_ref[j]:
            buckets.setdefault(key, []).append(j)
    pairs = []
    for i, key in enumerate(cand_keys):
        if not free_cand[i]:
            continue
        bucket = buckets.get(key)
        if bucket:
            pairs.append((i, bucket.pop(0)))
    return pairs


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    pairs = sorted(pairs)
    chunks = 0
    prev = None
    for ci, ri in pairs:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def _meteor_single(
    candidate: list[str],
    reference: list[str],
    alpha: float,
    beta: float,
    gamma: float,
) -> float:
    free_cand = [True] * len(candidate)
    free_ref = [True] * len(reference)
    pairs: list[tuple[int, int]] = []
    # Stage 1: exact surface matches; stage 2: Porter-stem matches on the rest.
    for cand_keys, ref_keys in (
        (candidate, reference),
        ([stem(t) for t in candidate], [stem(t) for t in reference]),
    ):
        stage = _stage_pairs(cand_keys, ref_keys, free_cand, free_ref)
        for ci, ri in stage:
            free_cand[ci] = False
            free_ref[ri] = False
        pairs.extend(stage)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    f_mean = precision * recall / (alpha * precision + (1.0 - alpha) * recall)
    penalty = gamma * (_chunk_count(pairs) / matches) ** beta
    return f_mean * (1.0 - penalty)


def meteor_lite(
    candidate: list[str],
    references: list[list[str]],
    alpha: float = 0.9,
    beta: float = 3.0,
    gamma: float = 0.5,
) -> float:
    """METEOR without synonym dictionaries: exact + stem unigram alignment.

    F_mean = PR / (alpha*P + (1-alpha)*R), discounted by a fragmentation
    penalty gamma * (chunks/matches)**beta; max over references.
    """
    if not references:
        raise InputError("meteor_lite needs at least one reference")
    if not candidate:
        return 0.0
    return max(
        (
            _meteor_single(candidate, ref, alpha, beta, gamma)
            for ref in references
            if ref
        ),
        default=0.0,
    )
