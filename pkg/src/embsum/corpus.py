"""Data model and file I/O for embedding-annotated review documents.

A corpus on disk is a pair of files plus an index:

  <base>.jsonl       one JSON object per document:
                     {"doc_id": str, "sentences": [str, ...], "target": str|null}
  <base>.vec         binary sidecar: header {magic "USEG", u32 version=1,
                     u32 d, u64 total_vectors} followed by little-endian
                     float32 vectors in document order (per document: L
                     sentence vectors, then the target vector if present)
  <base>.index.json  maps doc_id -> {offset, length, has_target}; offset is
                     a vector index into the sidecar's data region

Corpus objects are immutable after load; safe for concurrent read.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"USEG"
FORMAT_VERSION = 1
DEFAULT_MAX_SENTENCES = 800
_HEADER = struct.Struct("<4sIIQ")

SPLITS = ("train", "valid", "test")


class CorpusError(ValueError):
    """Malformed corpus file or invariant violation."""


@dataclass
class SentenceRecord:
    text: str
    embedding: np.ndarray  # (d,) float32, unit norm within 1e-3


@dataclass
class TargetSummary:
    text: str
    embedding: np.ndarray


@dataclass
class Document:
    doc_id: str
    sentences: list[SentenceRecord]
    target: TargetSummary | None = None

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def embedding_matrix(self) -> np.ndarray:
        return np.stack([s.embedding for s in self.sentences])


@dataclass
class Corpus:
    embedding_dim: int
    documents: list[Document]
    split: str = "train"


def corpus_paths(path) -> tuple[Path, Path, Path]:
    """Derive (documents, sidecar, index) paths from either the documents
    file or the base path."""
    p = Path(path)
    base = p.with_suffix("") if p.suffix == ".jsonl" else p
    return base.with_suffix(".jsonl"), base.with_suffix(".vec"), Path(str(base) + ".index.json")


def _check_vector(vec: np.ndarray, d: int, where: str) -> np.ndarray:
    if vec.shape != (d,):
        raise CorpusError(f"{where}: expected dimension {d}, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise CorpusError(f"{where}: non-finite embedding entry")
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if not (0.9 <= norm <= 1.1):
        raise CorpusError(f"{where}: embedding norm {norm:.6f} outside [0.9, 1.1]")
    if abs(norm - 1.0) > 1e-3:
        # Renormalize export-rounded vectors; already-unit vectors are kept
        # bit-identical so load(write(c)) round-trips exactly.
        vec = (vec.astype(np.float64) / norm).astype(np.float32)
    return vec


def load_corpus(path, expect_targets: bool = False, *, split: str = "train",
                max_sentences: int = DEFAULT_MAX_SENTENCES) -> Corpus:
    """Load a corpus from its documents file (or base path) plus sidecar."""
    if split not in SPLITS:
        raise CorpusError(f"unknown split {split!r}")
    docs_path, vec_path, index_path = corpus_paths(path)
    for p in (docs_path, vec_path, index_path):
        if not p.exists():
            raise CorpusError(f"missing corpus file: {p}")

    raw = vec_path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CorpusError(f"{vec_path}: truncated header")
    magic, version, d, total = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorpusError(f"{vec_path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CorpusError(f"{vec_path}: unsupported version {version}")
    expected_bytes = _HEADER.size + 4 * d * total
    if len(raw) != expected_bytes:
        raise CorpusError(
            f"{vec_path}: size mismatch, header promises {total} vectors of "
            f"dim {d} ({expected_bytes} bytes), file has {len(raw)} bytes")
    vectors = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(total, d)

    index = json.loads(index_path.read_text(encoding="utf-8"))
    if index.get("dim") != d:
        raise CorpusError(f"{index_path}: dim {index.get('dim')} does not match sidecar d={d}")
    entries = index.get("documents", {})

    documents: list[Document] = []
    seen: set[str] = set()
    with open(docs_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{docs_path}:{lineno}: malformed JSON: {exc}") from None
            if not isinstance(rec, dict) or "doc_id" not in rec or "sentences" not in rec:
                raise CorpusError(f"{docs_path}:{lineno}: missing doc_id or sentences")
            doc_id = rec["doc_id"]
            if doc_id in seen:
                raise CorpusError(f"{docs_path}:{lineno}: duplicate doc_id {doc_id!r}")
            seen.add(doc_id)
            sentences = rec["sentences"]
            if not isinstance(sentences, list) or not sentences:
                raise CorpusError(f"{docs_path}:{lineno}: document must have >= 1 sentence")
            if len(sentences) > max_sentences:
                raise CorpusError(
                    f"{docs_path}:{lineno}: document {doc_id!r} has {len(sentences)} "
                    f"sentences, limit is {max_sentences}")
            entry = entries.get(doc_id)
            if entry is None:
                raise CorpusError(f"{index_path}: no entry for doc_id {doc_id!r}")
            offset, length, has_target = entry["offset"], entry["length"], entry["has_target"]
            if length != len(sentences):
                raise CorpusError(
                    f"{index_path}: doc {doc_id!r} length {length} does not match "
                    f"{len(sentences)} sentences in {docs_path}:{lineno}")
            target_text = rec.get("target")
            if has_target != (target_text is not None):
                raise CorpusError(f"{index_path}: doc {doc_id!r} has_target mismatch")
            if expect_targets and target_text is None:
                raise CorpusError(f"{docs_path}:{lineno}: doc {doc_id!r} has no target")
            end = offset + length + (1 if has_target else 0)
            if offset < 0 or end > total:
                raise CorpusError(f"{index_path}: doc {doc_id!r} vectors out of range")

            records = []
            for i, text in enumerate(sentences):
                if not isinstance(text, str) or not text.strip():
                    raise CorpusError(f"{docs_path}:{lineno}: sentence {i} is empty")
                vec = _check_vector(vectors[offset + i].copy(),
                                    d, f"{docs_path}:{lineno} sentence {i}")
                records.append(SentenceRecord(text=text, embedding=vec))
            target = None
            if has_target:
                vec = _check_vector(vectors[offset + length].copy(),
                                    d, f"{docs_path}:{lineno} target")
                target = TargetSummary(text=target_text, embedding=vec)
            documents.append(Document(doc_id=doc_id, sentences=records, target=target))

    return Corpus(embedding_dim=d, documents=documents, split=split)


def write_corpus(corpus: Corpus, path) -> None:
    """Write the three corpus files; rejects invalid corpora before touching disk."""
    d = corpus.embedding_dim
    seen: set[str] = set()
    for doc in corpus.documents:
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        if not doc.sentences:
            raise CorpusError(f"doc {doc.doc_id!r} has no sentences")
        for i, s in enumerate(doc.sentences):
            if not s.text.strip():
                raise CorpusError(f"doc {doc.doc_id!r} sentence {i} is empty")
            _check_vector(np.asarray(s.embedding, dtype=np.float32), d,
                          f"doc {doc.doc_id!r} sentence {i}")
        if doc.target is not None:
            _check_vector(np.asarray(doc.target.embedding, dtype=np.float32), d,
                          f"doc {doc.doc_id!r} target")

    docs_path, vec_path, index_path = corpus_paths(path)
    docs_path.parent.mkdir(parents=True, exist_ok=True)

    chunks: list[np.ndarray] = []
    entries: dict[str, dict] = {}
    offset = 0
    doc_lines = []
    for doc in corpus.documents:
        mats = [np.asarray(s.embedding, dtype="<f4") for s in doc.sentences]
        has_target = doc.target is not None
        if has_target:
            mats.append(np.asarray(doc.target.embedding, dtype="<f4"))
        chunks.extend(mats)
        entries[doc.doc_id] = {"offset": offset, "length": len(doc.sentences),
                               "has_target": has_target}
        offset += len(mats)
        doc_lines.append(json.dumps(
            {"doc_id": doc.doc_id,
             "sentences": [s.text for s in doc.sentences],
             "target": doc.target.text if has_target else None},
            ensure_ascii=False))

    with open(vec_path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, d, offset))
        fh.write(np.concatenate(chunks).astype("<f4").tobytes())
    docs_path.write_text("\n".join(doc_lines) + "\n", encoding="utf-8")
    index_path.write_text(json.dumps(
        {"version": FORMAT_VERSION, "dim": d, "model_version": None,
         "documents": entries}, indent=1), encoding="utf-8")


@dataclass
class SyntheticConfig:
    n_docs: int = 200
    sentences_per_doc: int = 20
    dim: int = 32
    planted_count: int = 3
    noise_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_docs < 1 or self.sentences_per_doc < 1:
            raise CorpusError("n_docs and sentences_per_doc must be >= 1")
        if self.dim < 2:
            raise CorpusError("dim must be >= 2")
        if not (1 <= self.planted_count <= self.sentences_per_doc):
            raise CorpusError("planted_count must be in [1, sentences_per_doc]")
        if self.noise_scale < 0:
            raise CorpusError("noise_scale must be >= 0")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def gen_synthetic(config: SyntheticConfig) -> tuple[Corpus, dict[str, list[int]]]:
    """Generate a corpus where each document hides `planted_count` sentences
    clustered around a per-document latent direction; the target is the
    normalized mean of the planted sentences, the rest are uniform unit noise.

    Deterministic given config.seed. Returns the corpus and the planted
    sentence indices per doc_id.
    """
    rng = np.random.default_rng(config.seed)
    d = config.dim
    documents = []
    planted_map: dict[str, list[int]] = {}
    for j in range(config.n_docs):
        doc_id = f"synth-{j:05d}"
        latent = _unit(rng.standard_normal(d))
        positions = rng.permutation(config.sentences_per_doc)[: config.planted_count]
        positions = sorted(int(p) for p in positions)
        planted_map[doc_id] = positions
        planted_set = set(positions)

        embeddings = np.empty((config.sentences_per_doc, d))
        for i in range(config.sentences_per_doc):
            if i in planted_set:
                if config.noise_scale == 0.0:
                    embeddings[i] = latent
                else:
                    embeddings[i] = _unit(latent + config.noise_scale * rng.standard_normal(d))
            else:
                embeddings[i] = _unit(rng.standard_normal(d))
        if config.noise_scale == 0.0:
            target_vec = latent
        else:
            target_vec = _unit(embeddings[positions].mean(axis=0))

        sentences = [
            SentenceRecord(
                text=(f"{doc_id} planted sentence {i}" if i in planted_set
                      else f"{doc_id} filler sentence {i}"),
                embedding=embeddings[i].astype(np.float32))
            for i in range(config.sentences_per_doc)
        ]
        target = TargetSummary(text=f"{doc_id} target summary",
                               embedding=target_vec.astype(np.float32))
        documents.append(Document(doc_id=doc_id, sentences=sentences, target=target))

    return Corpus(embedding_dim=d, documents=documents), planted_map


def write_synthetic(corpus: Corpus, planted: dict[str, list[int]], path) -> None:
    """Write the corpus files plus a <base>.planted.json of planted indices."""
    write_corpus(corpus, path)
    docs_path, _, _ = corpus_paths(path)
    Path(str(docs_path.with_suffix("")) + ".planted.json").write_text(
        json.dumps(planted, indent=1), encoding="utf-8")
