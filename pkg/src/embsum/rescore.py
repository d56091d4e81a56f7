"""Beam-hypothesis rescoring with named-entity promotion and penalty.

Token scores are log-probabilities (<= 0). Named entities absent from the
source text get their log-probability multiplied by `absent_factor` (default
50, pushing them far down); entities present in the source are multiplied by
`present_factor` (default 0.4, pulling them up). Non-entity tokens pass
through unchanged.

Entity tags and source-presence flags are inputs; a capitalization heuristic
tagger is provided for demonstration only.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

_SENTENCE_END = {".", "!", "?"}


@dataclass
class Token:
    surface: str
    logprob: float
    is_named_entity: bool = False
    present_in_source: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.logprob) and self.logprob <= 0.0):
            raise ValueError(
                f"token {self.surface!r}: logprob {self.logprob} must be finite and <= 0")


@dataclass
class Hypothesis:
    tokens: list[Token]
    score: float

    def validate(self) -> None:
        expected = sum(t.logprob for t in self.tokens)
        if abs(self.score - expected) > 1e-9:
            raise ValueError(
                f"hypothesis score {self.score} != sum of token logprobs {expected}")

    @classmethod
    def from_tokens(cls, tokens: list[Token]) -> "Hypothesis":
        return cls(tokens=tokens, score=sum(t.logprob for t in tokens))

    @property
    def text(self) -> str:
        return " ".join(t.surface for t in self.tokens)


@dataclass
class RescoreConfig:
    absent_factor: float = 50.0
    present_factor: float = 0.4

    def __post_init__(self):
        if not (self.absent_factor >= 1.0 >= self.present_factor > 0.0):
            raise ValueError(
                "need absent_factor >= 1 >= present_factor > 0 "
                f"(got {self.absent_factor}, {self.present_factor})")


def rescore_token(token: Token, config: RescoreConfig) -> float:
    """Rescored log-probability of a single token."""
    if token.logprob > 0.0:
        raise ValueError(f"token {token.surface!r} has positive logprob")
    if not token.is_named_entity:
        return token.logprob
    factor = config.present_factor if token.present_in_source else config.absent_factor
    return token.logprob * factor


def rescore_hypothesis(hyp: Hypothesis, config: RescoreConfig) -> Hypothesis:
    """Hypothesis with its cumulative score recomputed from rescored tokens.

    Token logprobs themselves are left untouched; only the cumulative score
    changes (it now sums rescored values, so `validate` no longer applies)."""
    return Hypothesis(tokens=[replace(t) for t in hyp.tokens],
                      score=sum(rescore_token(t, config) for t in hyp.tokens))


def rescore_hypotheses(hyps: list[Hypothesis], config: RescoreConfig) -> list[Hypothesis]:
    """Rescore and sort descending by score; equal scores keep input order."""
    if not hyps:
        raise ValueError("no hypotheses")
    rescored = [rescore_hypothesis(h, config) for h in hyps]
    return sorted(rescored, key=lambda h: -h.score)


# ---------------------------------------------------------------------------
# Heuristic tagging (demonstration only; real entity tags come from upstream)

def heuristic_entity_tags(surfaces: list[str]) -> list[bool]:
    """Capitalization heuristic: a token is tagged as a named entity when it
    starts uppercase and is not sentence-initial. Crude by design."""
    tags = []
    sentence_initial = True
    for s in surfaces:
        tags.append(bool(s) and s[0].isupper() and not sentence_initial)
        sentence_initial = s in _SENTENCE_END
    return tags


def mark_source_presence(surfaces: list[str], source_text: str) -> list[bool]:
    """Case-insensitive surface match against the source token multiset."""
    source = Counter(w.lower() for w in source_text.split())
    return [s.lower() in source for s in surfaces]


# ---------------------------------------------------------------------------
# Hypothesis file I/O: JSON Lines {doc_id, hyps: [{tokens: [{t, lp, ne, src}], score}]}

def read_hypotheses(path) -> list[tuple[str, list[Hypothesis]]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                doc_id = rec["doc_id"]
                hyps = [
                    Hypothesis(
                        tokens=[Token(surface=t["t"], logprob=float(t["lp"]),
                                      is_named_entity=bool(t.get("ne", False)),
                                      present_in_source=bool(t.get("src", False)))
                                for t in h["tokens"]],
                        score=float(h["score"]))
                    for h in rec["hyps"]
                ]
                for h in hyps:
                    h.validate()
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed hypothesis record: {exc}") from None
            out.append((doc_id, hyps))
    return out


def write_hypotheses(path, records: list[tuple[str, list[Hypothesis]]]) -> None:
    """Write rescored hypotheses, mirroring the input schema plus a rank field."""
    lines = []
    for doc_id, hyps in records:
        lines.append(json.dumps({
            "doc_id": doc_id,
            "hyps": [{"rank": rank,
                      "tokens": [{"t": t.surface, "lp": t.logprob,
                                  "ne": t.is_named_entity, "src": t.present_in_source}
                                 for t in h.tokens],
                      "score": h.score}
                     for rank, h in enumerate(hyps)],
        }, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
