import math

import numpy as np
import pytest

from embsum.corpus import SentenceRecord
from embsum.model import init_params
from embsum.selection import (post_select_candidate, select_baseline,
                              select_top_k)

from conftest import make_doc, random_units, unit


def brute_force_baseline(X):
    """Independent argmax of cos(x_i, sum_j x_j) using scalar math."""
    agg = [sum(X[j][k] for j in range(len(X))) for k in range(len(X[0]))]
    best, best_cos = 0, -2.0
    for i, x in enumerate(X):
        dot = sum(x[k] * agg[k] for k in range(len(agg)))
        cos = dot / (math.sqrt(sum(v * v for v in x)) *
                     math.sqrt(sum(v * v for v in agg)))
        if cos > best_cos + 1e-18:
            best, best_cos = i, cos
    return best


class TestSelectTopK:
    def test_prefix_property(self, rng):
        p = init_params(6, 3, seed=0)
        doc = make_doc("a", random_units(rng, 10, 6))
        r3 = select_top_k(p, doc, k=3)
        r5 = select_top_k(p, doc, k=5)
        assert [i for i, _ in r3.ranked] == [i for i, _ in r5.ranked][:3]

    def test_angles_nondecreasing_and_unique(self, rng):
        p = init_params(6, 3, seed=1)
        doc = make_doc("a", random_units(rng, 12, 6))
        res = select_top_k(p, doc, k=12)
        angles = [a for _, a in res.ranked]
        idxs = [i for i, _ in res.ranked]
        assert angles == sorted(angles)
        assert len(set(idxs)) == len(idxs)

    def test_k_larger_than_doc(self, rng):
        p = init_params(6, 3, seed=0)
        doc = make_doc("a", random_units(rng, 2, 6))
        assert len(select_top_k(p, doc, k=5).ranked) == 2

    def test_scale_invariance(self, rng):
        p = init_params(6, 3, seed=2)
        X = random_units(rng, 8, 6)
        r1 = select_top_k(p, make_doc("a", X), k=3)
        # scaling every embedding by the same positive constant does not move
        # the selected set (cosine ranking is scale-invariant); note the
        # decoder itself sees different x_i magnitudes, so scale only the query
        # comparison here via the baseline selector
        b1 = select_baseline(make_doc("a", X), k=3)
        b2 = select_baseline(make_doc("a", X * 7.5), k=3)
        assert [i for i, _ in b1.ranked] == [i for i, _ in b2.ranked]
        assert len(r1.ranked) == 3


class TestSelectBaseline:
    def test_single_sentence(self, rng):
        doc = make_doc("a", random_units(rng, 1, 4))
        assert select_baseline(doc).ranked[0][0] == 0

    def test_identical_sentences_tie_break(self, rng):
        v = unit(rng.standard_normal(4))
        doc = make_doc("a", np.tile(v, (5, 1)))
        assert select_baseline(doc).ranked[0][0] == 0

    def test_matches_brute_force_100_docs(self, rng):
        for t in range(100):
            L = int(rng.integers(1, 40))
            X = random_units(rng, L, 5)
            doc = make_doc(f"d{t}", X)
            assert select_baseline(doc).ranked[0][0] == brute_force_baseline(X)

    def test_zero_omega_rejected(self):
        doc = make_doc("a", [[1.0, 0.0], [-1.0, 0.0]])
        with pytest.raises(ValueError, match="zero"):
            select_baseline(doc)


def _records(X):
    return [SentenceRecord(text=f"s{i}", embedding=np.asarray(x, dtype=np.float32))
            for i, x in enumerate(X)]


class TestPostSelect:
    def test_single_candidate(self, rng):
        cands = _records(random_units(rng, 1, 4))
        ctx = _records(random_units(rng, 3, 4))
        assert post_select_candidate(cands, ctx) == 0

    def test_identical_beats_orthogonal(self):
        ctx = _records([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        cands = _records([[0.0, 1.0], [1.0, 0.0]])
        assert post_select_candidate(cands, ctx) == 1

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            cands = _records(random_units(rng, 10, 5))
            ctx = _records(random_units(rng, 3, 5))
            agg = sum(c.embedding.astype(float) for c in ctx)
            brute = max(range(10), key=lambda i: float(
                np.dot(cands[i].embedding, agg) /
                (np.linalg.norm(cands[i].embedding) * np.linalg.norm(agg))))
            assert post_select_candidate(cands, ctx) == brute

    def test_sum_and_mean_agree(self, rng):
        cands = _records(random_units(rng, 6, 4))
        ctx = _records(random_units(rng, 3, 4))
        assert (post_select_candidate(cands, ctx, combine="sum") ==
                post_select_candidate(cands, ctx, combine="mean"))

    def test_empty_inputs_rejected(self, rng):
        with pytest.raises(ValueError):
            post_select_candidate([], _records(random_units(rng, 1, 4)))
        with pytest.raises(ValueError):
            post_select_candidate(_records(random_units(rng, 1, 4)), [])
