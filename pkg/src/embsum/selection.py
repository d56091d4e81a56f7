"""Turning a predicted summary embedding into extracted sentences.

Three selectors: the trained decoder's top-k extraction, the omega-sum
baseline (query the document aggregate directly), and the post-selection
heuristic that picks the best candidate summary by comparing candidate
embeddings against the summed context embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, model
from .corpus import Document, SentenceRecord
from .model import ModelParams

COMBINE_MODES = ("sum", "mean", "max")


@dataclass
class SelectionResult:
    doc_id: str
    ranked: list[tuple[int, float]]  # (sentence index, angle to query), ascending
    query: np.ndarray


def _rank(doc_id: str, doc, query, k: int) -> SelectionResult:
    indices = geometry.top_k_by_angle(query, doc, k)
    angles = geometry.angles_to(query, doc)
    return SelectionResult(doc_id=doc_id,
                           ranked=[(i, float(angles[i])) for i in indices],
                           query=np.asarray(query, dtype=np.float64))


def select_top_k(params: ModelParams, doc: Document, k: int = 3) -> SelectionResult:
    """Run the decoder and pick the k sentences closest to its final prediction."""
    trace = model.run_decoder(params, doc)
    return _rank(doc.doc_id, doc, trace.final_prediction, k)


def select_baseline(doc: Document, k: int = 1) -> SelectionResult:
    """Pick the sentence(s) most similar to the document aggregate omega."""
    w = geometry.omega(doc)
    if np.linalg.norm(w) == 0.0:
        raise ValueError(f"doc {doc.doc_id!r}: omega is the zero vector")
    return _rank(doc.doc_id, doc, w, k)


def post_select_candidate(candidates: list[SentenceRecord],
                          context: list[SentenceRecord],
                          combine: str = "sum") -> int:
    """Index of the candidate whose embedding best matches the context
    sentences. `combine` controls how context embeddings merge: "sum" (the
    omega-style default) and "mean" rank identically under cosine; "max"
    scores each candidate by its best single context sentence."""
    if not candidates:
        raise ValueError("no candidates")
    if not context:
        raise ValueError("no context sentences")
    if combine not in COMBINE_MODES:
        raise ValueError(f"combine must be one of {COMBINE_MODES}")
    ctx = np.stack([np.asarray(c.embedding, dtype=np.float64) for c in context])
    if combine == "max":
        scores = [max(geometry.cosine(cand.embedding, c) for c in ctx)
                  for cand in candidates]
    else:
        agg = ctx.mean(axis=0) if combine == "mean" else ctx.sum(axis=0)
        if np.linalg.norm(agg) == 0.0:
            raise ValueError("context embeddings sum to the zero vector")
        scores = [geometry.cosine(cand.embedding, agg) for cand in candidates]
    return int(np.argmax(scores))
