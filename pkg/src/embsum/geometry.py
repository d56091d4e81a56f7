"""Angle and cosine primitives over sentence-embedding vectors.

All similarity decisions in the engine go through these functions: smaller
angle means more similar, and every "most similar" selection is an argmin of
angle (equivalently argmax of cosine).
"""

from __future__ import annotations

import numpy as np

__all__ = ["cosine", "angle", "omega", "gain", "angles_to", "top_k_by_angle"]


def _as_matrix(doc) -> np.ndarray:
    """Accept a Document or a plain (L, d) array of embeddings."""
    if hasattr(doc, "embedding_matrix"):
        return doc.embedding_matrix
    return np.asarray(doc, dtype=np.float64)


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1].

    Clamping guards arccos against float rounding for near-parallel inputs.
    Raises ValueError on a zero-norm input.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine is undefined for a zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def angle(u, v) -> float:
    """Angle between two vectors in radians, in [0, pi]."""
    return float(np.arccos(cosine(u, v)))


def omega(doc) -> np.ndarray:
    """Unnormalized sum of all sentence embeddings of a document.

    Kept unnormalized on purpose; every consumer compares against it with
    cosine, which is scale-invariant.
    """
    mat = _as_matrix(doc)
    if mat.shape[0] == 0:
        raise ValueError("omega of an empty document")
    return mat.sum(axis=0)


def gain(y, y_hat_prev, y_hat_cur) -> float:
    """Angular improvement toward y going from the previous to the current
    prediction; positive when the new prediction is closer to y."""
    return angle(y, y_hat_prev) - angle(y, y_hat_cur)


def angles_to(query, doc) -> np.ndarray:
    """Angle between the query and every sentence embedding, as an (L,) array."""
    q = np.asarray(query, dtype=np.float64)
    mat = _as_matrix(doc).astype(np.float64, copy=False)
    nq = np.linalg.norm(q)
    if nq == 0.0:
        raise ValueError("zero-norm query")
    row_norms = np.linalg.norm(mat, axis=1)
    if np.any(row_norms == 0.0):
        raise ValueError("zero-norm sentence embedding")
    cos = np.clip((mat @ q) / (row_norms * nq), -1.0, 1.0)
    return np.arccos(cos)


def top_k_by_angle(query, doc, k: int) -> list[int]:
    """Indices of the min(k, L) sentences closest in angle to the query,
    ascending by angle; ties broken by ascending sentence index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ang = angles_to(query, doc)
    order = np.argsort(ang, kind="stable")
    return [int(i) for i in order[: min(k, len(ang))]]
