import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interview_metrics.corpus import Role, Source, Transcript
from interview_metrics.lexical import (LexicalError, Scope, TokenizerConfigError, TokenizerSpec,
                                       TokenSequence, corpus_min_length, entropy_from_counts,
                                       entropy_report, sample_stats, sentence_length_stats,
                                       shannon_entropy, tokenize, tokenize_many,
                                       transcript_token_sequences, truncate)
from interview_metrics import synthetic

from conftest import FIXTURES, make_transcript
from entropy_oracle import brute_entropy
from wordpiece_oracle import WordPieceOracle


def seqs(*lengths, scope=Scope.OVERALL):
    return [TokenSequence(tuple(range(n)), scope, f"t{i}") for i, n in enumerate(lengths)]


class TestTokenize:
    def test_empty(self, tokenizer_spec):
        assert tokenize("", tokenizer_spec).tokens == ()

    def test_deterministic(self, tokenizer_spec):
        text = "Tell me more about your team."
        assert tokenize(text, tokenizer_spec) == tokenize(text, tokenizer_spec)

    def test_golden_ids(self, tokenizer_spec):
        golden = json.loads((FIXTURES / "golden_token_ids.json").read_text(encoding="utf-8"))
        got = tokenize_many(golden["sentences"], tokenizer_spec)
        assert got == golden["ids"]
        assert [list(tokenize(s, tokenizer_spec).tokens) for s in golden["sentences"]] == golden["ids"]

    def test_golden_ids_match_reference_algorithm(self, tokenizer_spec):
        golden = json.loads((FIXTURES / "golden_token_ids.json").read_text(encoding="utf-8"))
        oracle = WordPieceOracle(tokenizer_spec.vocab_source)
        assert [oracle.encode(s) for s in golden["sentences"]] == golden["ids"]

    @settings(max_examples=60)
    @given(st.lists(st.sampled_from(["the", "helpful", "interviewing", "x", "played", "?", ",",
                                     "unhelpfulness", "Readers", "job!", "zzz"]), max_size=15))
    def test_library_matches_reference_algorithm(self, tokenizer_spec, words):
        text = " ".join(words)
        oracle = WordPieceOracle(tokenizer_spec.vocab_source)
        assert list(tokenize(text, tokenizer_spec).tokens) == oracle.encode(text)

    def test_special_tokens_off_by_default(self, tokenizer_spec):
        with_special = TokenizerSpec(tokenizer_spec.vocab_source, add_special_tokens=True)
        plain = tokenize("hi", tokenizer_spec).tokens
        assert tokenize("hi", with_special).tokens == (2, *plain, 3)

    def test_missing_tokenizer(self, tmp_path):
        with pytest.raises(TokenizerConfigError):
            tokenize("hi", TokenizerSpec(str(tmp_path / "nope.json")))
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        with pytest.raises(TokenizerConfigError):
            tokenize("hi", TokenizerSpec(str(bad)))

    def test_scopes_concatenate_turns(self, tokenizer_spec):
        t = Transcript.build("s", "AI", [(Role.INTERVIEWER, "how"), (Role.INTERVIEWEE, "good"),
                                         (Role.INTERVIEWER, "me")])
        s = transcript_token_sequences(t, tokenizer_spec)
        ids = [tokenize(x, tokenizer_spec).tokens[0] for x in ("how", "good", "me")]
        assert s[Scope.OVERALL].tokens == tuple(ids)
        assert s[Scope.INTERVIEWER].tokens == (ids[0], ids[2])
        assert s[Scope.INTERVIEWEE].tokens == (ids[1],)


class TestMinLengthAndTruncate:
    def test_minimum(self):
        assert corpus_min_length(seqs(5, 9, 7)) == 5

    def test_singleton(self):
        assert corpus_min_length(seqs(12)) == 12

    def test_pooled_sources(self):
        assert corpus_min_length(seqs(100, 80) + seqs(90)) == 80

    def test_empty_errors(self):
        with pytest.raises(LexicalError):
            corpus_min_length([])
        with pytest.raises(LexicalError):
            corpus_min_length(seqs(3, 0))

    def test_scope_mismatch(self):
        with pytest.raises(LexicalError):
            corpus_min_length(seqs(3, scope=Scope.INTERVIEWER), Scope.OVERALL)

    def test_prefix(self):
        assert truncate(TokenSequence(tuple("abcd")), 2).tokens == ("a", "b")
        assert truncate(TokenSequence(tuple("abac")), 3).tokens == ("a", "b", "a")

    def test_identity(self):
        s = TokenSequence(tuple("abc"))
        assert truncate(s, 3) == s

    def test_no_padding(self):
        with pytest.raises(LexicalError):
            truncate(TokenSequence(tuple("ab")), 3)
        with pytest.raises(LexicalError):
            truncate(TokenSequence(tuple("ab")), 0)


class TestEntropy:
    def test_repeated(self):
        assert shannon_entropy(list("aaaa")) == 0.0

    def test_two_symbols(self):
        assert shannon_entropy(["a", "b"]) == pytest.approx(1.0, abs=1e-15)

    def test_counts(self):
        assert entropy_from_counts([2, 1, 1]) == pytest.approx(1.5, abs=1e-15)
        assert shannon_entropy(list("aabc")) == pytest.approx(1.5, abs=1e-15)

    def test_empty(self):
        with pytest.raises(LexicalError):
            shannon_entropy([])

    @given(st.lists(st.integers(0, 30), min_size=1, max_size=300), st.randoms())
    def test_permutation_invariant(self, tokens, rnd):
        shuffled = list(tokens)
        rnd.shuffle(shuffled)
        assert shannon_entropy(shuffled) == pytest.approx(shannon_entropy(tokens), abs=1e-12)

    @given(st.lists(st.integers(0, 30), min_size=1, max_size=200), st.integers(2, 6))
    def test_replication_invariant(self, tokens, k):
        assert shannon_entropy(tokens * k) == pytest.approx(shannon_entropy(tokens), abs=1e-12)

    @given(st.lists(st.integers(0, 50), min_size=1, max_size=400))
    def test_bounds_and_oracle(self, tokens):
        h = shannon_entropy(tokens)
        assert 0.0 <= h <= math.log2(len(tokens)) + 1e-12
        assert h == pytest.approx(brute_entropy(tokens), abs=1e-9)
        if len(set(tokens)) == len(tokens):
            assert h == pytest.approx(math.log2(len(tokens)), abs=1e-12)
        else:
            assert h < math.log2(len(tokens)) - 1e-12


def _corpus_from_sequences(seq_lists):
    transcripts, sequences = [], []
    for i, (ier, iee) in enumerate(seq_lists):
        src = Source.AI if i % 2 == 0 else Source.HUMAN
        t = Transcript.build(f"t{i}", src, [(Role.INTERVIEWER, "q"), (Role.INTERVIEWEE, "a")])
        transcripts.append(t)
        sequences.append({
            Scope.INTERVIEWER: TokenSequence(tuple(ier), Scope.INTERVIEWER, t.id),
            Scope.INTERVIEWEE: TokenSequence(tuple(iee), Scope.INTERVIEWEE, t.id),
            Scope.OVERALL: TokenSequence(tuple(ier) + tuple(iee), Scope.OVERALL, t.id),
        })
    return transcripts, sequences


class TestEntropyReport:
    def test_singleton_corpus(self, tokenizer_spec):
        t = make_transcript()
        rep = entropy_report([t], tokenizer_spec)
        for scope in Scope:
            row = rep.get(t.id, scope)
            assert row.truncated_length == row.pre_truncation_length
            raw = transcript_token_sequences(t, tokenizer_spec)[scope]
            assert row.entropy_bits == pytest.approx(shannon_entropy(raw), abs=1e-15)

    def test_identical_transcripts(self, tokenizer_spec):
        a, b = make_transcript("a"), make_transcript("b", Source.HUMAN)
        rep = entropy_report([a, b], tokenizer_spec)
        for scope in Scope:
            assert rep.get("a", scope).entropy_bits == rep.get("b", scope).entropy_bits

    def test_empty_scope_excluded(self):
        ts, sq = _corpus_from_sequences([([1, 2], [3, 4, 5]), ([], [1, 1])])
        rep = entropy_report(ts, sequences=sq)
        assert rep.get("t1", Scope.INTERVIEWER) is None
        assert rep.l_min[Scope.INTERVIEWER] == 2
        assert any("t1" in w for w in rep.warnings)

    def test_global_minimum_option(self):
        ts, sq = _corpus_from_sequences([([1, 2, 3], [3, 4, 5, 6]), ([1, 2, 3, 4], [1, 1, 2, 2, 2])])
        rep = entropy_report(ts, sequences=sq, pooled_per_scope=False)
        assert set(rep.l_min.values()) == {3}

    def test_planted_groups(self, synthetic_tokenizer):
        corpus = synthetic.synthetic_corpus(5, 12, 12, n_tokens=600)
        rep = entropy_report(corpus, synthetic_tokenizer)
        by = {"AI": [], "Human": []}
        for r in rep.rows:
            if r.scope is Scope.OVERALL:
                by[r.source].append(r.entropy_bits)
        assert min(by["AI"]) > max(by["Human"])

    def test_workers_identical(self, synthetic_tokenizer):
        corpus = synthetic.synthetic_corpus(2, 6, 6, n_tokens=300)
        assert entropy_report(corpus, synthetic_tokenizer, workers=4).to_dict() == \
            entropy_report(corpus, synthetic_tokenizer).to_dict()

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.tuples(st.lists(st.integers(0, 20), min_size=1, max_size=60),
                              st.lists(st.integers(0, 20), min_size=1, max_size=60)),
                    min_size=1, max_size=15))
    def test_truncation_contract(self, seq_lists):
        ts, sq = _corpus_from_sequences(seq_lists)
        rep = entropy_report(ts, sequences=sq)
        for scope in Scope:
            rows = [r for r in rep.rows if r.scope is scope]
            expected = min(len(s[scope]) for s in sq)
            assert {r.truncated_length for r in rows} == {expected} == {rep.l_min[scope]}
            for r, s in zip(rows, sq):
                assert r.entropy_bits == pytest.approx(brute_entropy(s[scope].tokens[:expected]), abs=1e-9)


class TestSentenceLength:
    def test_hand_computation(self):
        st_ = sample_stats([3, 5])
        assert st_["mean"] == 4.0
        assert st_["sd"] == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_degenerate(self):
        assert sample_stats([7])["sd"] is None
        assert sample_stats([])["mean"] is None

    def test_per_role(self, tokenizer_spec):
        t = Transcript.build("s", "AI", [(Role.INTERVIEWER, "How do you feel?"),
                                         (Role.INTERVIEWEE, "I agree. Good job")])
        ls = sentence_length_stats([t], tokenizer_spec)
        assert ls.samples[("s", "interviewer")] == [4]
        assert ls.samples[("s", "interviewee")] == [2, 2]
        assert ls.samples[("s", "overall")] == [4, 2, 2]
        assert ls.stats("s", "interviewee")["sd"] == 0.0
