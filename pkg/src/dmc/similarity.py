"""Embedding-based motion-text alignment scores.

Embeddings always arrive from files (no encoder is bundled): a mean cosine
similarity over aligned id pairs, and a retrieval recall@1 where each text
queries the motions of its seeded batch. Shuffled-caption embeddings act as
extra hard-negative queries and are reported separately.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from dmc.core import InputError

EmbeddingTable = dict[str, np.ndarray]

DEFAULT_BATCH = 32


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InputError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise InputError("cosine is undefined for a zero vector")
    return float(np.dot(u, v)) / (nu * nv)


def _check_aligned(motions: EmbeddingTable, texts: EmbeddingTable, label: str) -> list[str]:
    missing = sorted(set(motions) - set(texts))
    extra = sorted(set(texts) - set(motions))
    if missing or extra:
        raise InputError(
            f"{label} ids do not match motions: "
            f"missing {missing[:5]}, unexpected {extra[:5]}"
        )
    return sorted(motions)


def tmr_similarity(motions: EmbeddingTable, texts: EmbeddingTable) -> float:
    """Mean cosine similarity over the shared ids (which must be identical sets)."""
    ids = _check_aligned(motions, texts, "texts")
    if not ids:
        raise InputError("empty embedding tables")
    return sum(cosine(motions[i], texts[i]) for i in ids) / len(ids)


@dataclass
class RetrievalReport:
    recall_at_1: float
    shuffled_recall_at_1: float | None
    num_queries: int
    num_shuffled_queries: int
    num_batches: int
    batch: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "recall_at_1": self.recall_at_1,
            "shuffled_recall_at_1": self.shuffled_recall_at_1,
            "num_queries": self.num_queries,
            "num_shuffled_queries": self.num_shuffled_queries,
            "num_batches": self.num_batches,
            "batch": self.batch,
            "seed": self.seed,
            "protocol": "text-to-motion recall@1, seeded batches",
        }


def _rank_first(query: np.ndarray, batch_motions: list[np.ndarray], own: int) -> bool:
    scores = [cosine(query, m) for m in batch_motions]
    best = max(range(len(scores)), key=lambda idx: (scores[idx], -idx))
    return best == own


def car_retrieval(
    motions: EmbeddingTable,
    true_texts: EmbeddingTable,
    shuffled_texts: list[EmbeddingTable] | None = None,
    batch: int = DEFAULT_BATCH,
    seed: int = 0,
) -> RetrievalReport:
    """Recall@1 of text-to-motion retrieval within seeded batches.

    Ids are shuffled by the seed and partitioned into batches of `batch`
    (the final batch may be smaller). Each true-caption embedding queries
    its batch's motions; a query counts when its own motion has the top
    cosine (earliest batch position wins exact ties). Each shuffled table
    contributes one extra query per id, still keyed to the source motion,
    aggregated into a separate recall.
    """
    ids = _check_aligned(motions, true_texts, "texts")
    for k, table in enumerate(shuffled_texts or []):
        _check_aligned(motions, table, f"shuffled_texts[{k}]")
    if batch < 2:
        raise InputError(f"batch must be >= 2, got {batch}")
    if batch > len(ids):
        raise InputError(f"batch {batch} exceeds population {len(ids)}")
    order = list(ids)
    random.Random(seed).shuffle(order)
    batches = [order[i : i + batch] for i in range(0, len(order), batch)]
    hits = queries = 0
    shuffled_hits = shuffled_queries = 0
    for group in batches:
        group_motions = [motions[i] for i in group]
        for pos, seq_id in enumerate(group):
            hits += _rank_first(true_texts[seq_id], group_motions, pos)
            queries += 1
            for table in shuffled_texts or []:
                shuffled_hits += _rank_first(table[seq_id], group_motions, pos)
                shuffled_queries += 1
    return RetrievalReport(
        recall_at_1=hits / queries,
        shuffled_recall_at_1=(
            shuffled_hits / shuffled_queries if shuffled_queries else None
        ),
        num_queries=queries,
        num_shuffled_queries=shuffled_queries,
        num_batches=len(batches),
        batch=batch,
        seed=seed,
    )


def similarity_report(
    motions: EmbeddingTable,
    texts: EmbeddingTable,
    shuffled_texts: list[EmbeddingTable] | None = None,
    batch: int = DEFAULT_BATCH,
    seed: int = 0,
) -> dict:
    """Combined cosine + retrieval report used by the command line."""
    retrieval = car_retrieval(motions, texts, shuffled_texts, batch=batch, seed=seed)
    report = {"tmr_similarity": tmr_similarity(motions, texts)}
    report.update(retrieval.to_dict())
    return report
