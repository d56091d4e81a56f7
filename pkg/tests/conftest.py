import numpy as np
import pytest

from embsum.corpus import Corpus, Document, SentenceRecord, TargetSummary


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def random_units(rng, n, d):
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def make_doc(doc_id, embeddings, target_embedding=None):
    sentences = [SentenceRecord(text=f"{doc_id} sentence {i}",
                                embedding=np.asarray(e, dtype=np.float32))
                 for i, e in enumerate(embeddings)]
    target = None
    if target_embedding is not None:
        target = TargetSummary(text=f"{doc_id} target",
                               embedding=np.asarray(target_embedding, dtype=np.float32))
    return Document(doc_id=doc_id, sentences=sentences, target=target)


def make_corpus(rng, n_docs=3, n_sentences=4, d=4, with_targets=True):
    docs = []
    for j in range(n_docs):
        X = random_units(rng, n_sentences, d)
        t = unit(rng.standard_normal(d)) if with_targets else None
        docs.append(make_doc(f"doc-{j}", X, t))
    return Corpus(embedding_dim=d, documents=docs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
