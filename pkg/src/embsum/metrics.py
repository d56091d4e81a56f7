"""Evaluation of predicted summaries: embedding cosine, ROUGE-L F1, BLEU.

Single-reference, single-sentence variants. Tokenization is fixed for
reproducibility: lowercase, punctuation split off into separate tokens,
whitespace split. BLEU uses add-one smoothing on n-gram orders with zero
matches, so values are not directly comparable with other toolkits.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import geometry

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def eval_cosine(pred_embedding, target_embedding) -> float:
    return geometry.cosine(pred_embedding, target_embedding)


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length, O(len(a)*len(b))."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l_f1(pred_tokens: list[str], ref_tokens: list[str]) -> float:
    """LCS-based F-measure with beta = 1."""
    if not ref_tokens:
        raise ValueError("empty reference")
    if not pred_tokens:
        return 0.0
    lcs = lcs_length(pred_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    p = lcs / len(pred_tokens)
    r = lcs / len(ref_tokens)
    return 2 * p * r / (p + r)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(pred_tokens: list[str], ref_tokens: list[str], max_n: int = 4) -> float:
    """Geometric mean of modified n-gram precisions times the brevity penalty.

    Orders are capped at the prediction length; an order with zero matches
    contributes (0 + 1) / (count + 1).
    """
    if not ref_tokens:
        raise ValueError("empty reference")
    if not pred_tokens:
        return 0.0
    n_max = min(max_n, len(pred_tokens))
    log_precisions = []
    for n in range(1, n_max + 1):
        pred_counts = _ngrams(pred_tokens, n)
        ref_counts = _ngrams(ref_tokens, n)
        total = sum(pred_counts.values())
        matches = sum(min(c, ref_counts[g]) for g, c in pred_counts.items())
        p = matches / total if matches > 0 else 1.0 / (total + 1)
        log_precisions.append(np.log(p))
    bp = 1.0
    if len(pred_tokens) < len(ref_tokens):
        bp = float(np.exp(1.0 - len(ref_tokens) / len(pred_tokens)))
    return float(bp * np.exp(np.mean(log_precisions)))


@dataclass
class DocScore:
    doc_id: str
    rouge_l_f1: float
    bleu: float
    cosine: float | None = None


@dataclass
class EvalReport:
    per_doc: list[DocScore] = field(default_factory=list)
    cosine_skipped: int = 0

    @property
    def corpus_means(self) -> dict:
        """Arithmetic means over scored documents only."""
        scored = self.per_doc
        cosines = [s.cosine for s in scored if s.cosine is not None]
        return {
            "n_docs": len(scored),
            "rouge_l_f1": float(np.mean([s.rouge_l_f1 for s in scored])) if scored else 0.0,
            "bleu": float(np.mean([s.bleu for s in scored])) if scored else 0.0,
            "cosine": float(np.mean(cosines)) if cosines else None,
            "cosine_skipped": self.cosine_skipped,
        }

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus_means,
            "per_doc": [{"doc_id": s.doc_id, "rouge_l_f1": s.rouge_l_f1,
                         "bleu": s.bleu, "cosine": s.cosine}
                        for s in self.per_doc],
        }


def score_document(doc_id: str, pred_text: str, ref_text: str,
                   pred_embedding=None, target_embedding=None) -> DocScore:
    pred = tokenize(pred_text)
    ref = tokenize(ref_text)
    cos = None
    if pred_embedding is not None and target_embedding is not None:
        cos = eval_cosine(pred_embedding, target_embedding)
    return DocScore(doc_id=doc_id, rouge_l_f1=rouge_l_f1(pred, ref),
                    bleu=bleu(pred, ref), cosine=cos)
