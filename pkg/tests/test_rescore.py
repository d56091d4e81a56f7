import pytest

from embsum.rescore import (Hypothesis, RescoreConfig, Token,
                            heuristic_entity_tags, mark_source_presence,
                            read_hypotheses, rescore_hypotheses,
                            rescore_token, write_hypotheses)


def tok(surface, lp, ne=False, src=False):
    return Token(surface=surface, logprob=lp, is_named_entity=ne,
                 present_in_source=src)


class TestRescoreToken:
    def test_non_entity_unchanged(self):
        assert rescore_token(tok("hotel", -2.0), RescoreConfig()) == -2.0

    def test_absent_entity_penalized_50x(self):
        assert rescore_token(tok("Madrid", -2.0, ne=True, src=False),
                             RescoreConfig()) == -100.0

    def test_present_entity_promoted(self):
        assert rescore_token(tok("Valencia", -2.0, ne=True, src=True),
                             RescoreConfig()) == pytest.approx(-0.8)

    def test_positive_logprob_rejected(self):
        with pytest.raises(ValueError):
            Token(surface="x", logprob=0.5)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RescoreConfig(absent_factor=0.5)
        with pytest.raises(ValueError):
            RescoreConfig(present_factor=0.0)
        RescoreConfig(absent_factor=1.0, present_factor=1.0)  # identity allowed


class TestRescoreHypotheses:
    def _hyp(self, *tokens):
        return Hypothesis.from_tokens(list(tokens))

    def test_no_entities_order_unchanged(self):
        hyps = [self._hyp(tok("a", -1.0), tok("b", -2.0)),
                self._hyp(tok("c", -1.5)),
                self._hyp(tok("d", -4.0))]
        out = rescore_hypotheses(hyps, RescoreConfig())
        assert [h.text for h in out] == ["c", "a b", "d"]

    def test_wrong_city_demoted(self):
        source = "Lovely stay in Valencia near the beach"
        base = [("Great", -0.5), ("hotel", -0.5), ("in", -0.2)]
        h_good = self._hyp(*[tok(s, lp) for s, lp in base],
                           tok("Valencia", -1.0, ne=True,
                               src="valencia" in source.lower().split()))
        h_bad = self._hyp(*[tok(s, lp) for s, lp in base],
                          tok("Madrid", -1.0, ne=True, src=False))
        out = rescore_hypotheses([h_bad, h_good], RescoreConfig())
        assert out[0].text.endswith("Valencia")
        assert out[1].text.endswith("Madrid")

    def test_identity_config_noop(self):
        hyps = [self._hyp(tok("A", -1.0, ne=True), tok("b", -0.5)),
                self._hyp(tok("c", -2.0, ne=True, src=True))]
        out = rescore_hypotheses(hyps, RescoreConfig(absent_factor=1.0,
                                                     present_factor=1.0))
        assert [h.score for h in out] == [-1.5, -2.0]

    def test_monotone_penalty(self):
        # growing absent_factor never improves the absent-entity hypothesis's rank
        h_abs = self._hyp(tok("Paris", -1.0, ne=True, src=False), tok("x", -0.1))
        h_other = self._hyp(tok("plain", -3.0))
        ranks = []
        for factor in (1.0, 2.0, 10.0, 50.0, 200.0):
            out = rescore_hypotheses([h_abs, h_other],
                                     RescoreConfig(absent_factor=factor))
            ranks.append([h.text for h in out].index("Paris x"))
        assert ranks == sorted(ranks)

    def test_matches_brute_force(self):
        import random
        rnd = random.Random(0)
        cfg = RescoreConfig()
        hyps = []
        for _ in range(10):
            toks = [tok(f"w{i}", -rnd.uniform(0.1, 3.0),
                        ne=rnd.random() < 0.3, src=rnd.random() < 0.5)
                    for i in range(rnd.randint(1, 8))]
            hyps.append(self._hyp(*toks))
        out = rescore_hypotheses(hyps, cfg)
        brute = []
        for h in hyps:
            s = 0.0
            for t in h.tokens:
                if t.is_named_entity and t.present_in_source:
                    s += t.logprob * 0.4
                elif t.is_named_entity:
                    s += t.logprob * 50.0
                else:
                    s += t.logprob
            brute.append(s)
        assert [h.score for h in out] == sorted(brute, reverse=True)

    def test_score_decomposition(self):
        cfg = RescoreConfig()
        h = self._hyp(tok("A", -1.0, ne=True), tok("b", -0.5),
                      tok("C", -2.0, ne=True, src=True))
        out = rescore_hypotheses([h], cfg)[0]
        assert out.score == sum(rescore_token(t, cfg) for t in h.tokens)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rescore_hypotheses([], RescoreConfig())


class TestHeuristics:
    def test_sentence_initial_not_entity(self):
        tags = heuristic_entity_tags(["Great", "stay", "in", "Valencia", ".",
                                      "Would", "return"])
        assert tags == [False, False, False, True, False, False, False]

    def test_source_presence_case_insensitive(self):
        flags = mark_source_presence(["VALENCIA", "madrid"],
                                     "lovely Valencia beach")
        assert flags == [True, False]


class TestHypothesisIO:
    def test_round_trip(self, tmp_path):
        records = [("doc-1", [Hypothesis.from_tokens(
            [tok("Nice", -0.5), tok("Valencia", -1.0, ne=True, src=True)])])]
        write_hypotheses(tmp_path / "h.jsonl", records)
        loaded = read_hypotheses(tmp_path / "h.jsonl")
        assert loaded[0][0] == "doc-1"
        h = loaded[0][1][0]
        assert h.text == "Nice Valencia"
        assert h.tokens[1].is_named_entity and h.tokens[1].present_in_source

    def test_malformed_reports_line(self, tmp_path):
        (tmp_path / "bad.jsonl").write_text('{"doc_id": "a"}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_hypotheses(tmp_path / "bad.jsonl")

    def test_inconsistent_score_rejected(self, tmp_path):
        (tmp_path / "bad.jsonl").write_text(
            '{"doc_id": "a", "hyps": [{"tokens": [{"t": "x", "lp": -1.0}], '
            '"score": -5.0}]}\n')
        with pytest.raises(ValueError, match="sum of token logprobs"):
            read_hypotheses(tmp_path / "bad.jsonl")
