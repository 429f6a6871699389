import itertools
import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from interview_metrics.corpus import Role, Sentence
from interview_metrics.semantic import (CROSS_MODEL, EmbeddingCache, EmbeddingError,
                                        EmbeddingProviderSpec, SentenceEmbedding, cosine,
                                        cross_model_average, cross_similarity, embed_sentences,
                                        internal_similarity, similarity_report,
                                        transcript_similarity)

SENTS = [Sentence("t1", Role.INTERVIEWER, 0, "How are you"),
         Sentence("t1", Role.INTERVIEWEE, 0, "Fine"),
         Sentence("t1", Role.INTERVIEWEE, 1, "Thanks")]


class StubProvider:
    """Emits a known vector per text and counts calls."""

    def __init__(self, dim=4):
        self.dim = dim
        self.calls = 0

    def vector(self, text):
        return [float(len(text)), 1.0] + [float(i) for i in range(self.dim - 2)]

    def __call__(self, texts):
        self.calls += 1
        return [self.vector(t) for t in texts]


def _stub_spec(dim=4, batch_size=1):
    return EmbeddingProviderSpec("remote", "stub", dimension=dim, endpoint="http://unused",
                                 batch_size=batch_size, max_retries=0)


class TestEmbedding:
    def test_cold_then_warm(self, tmp_path):
        cache = tmp_path / "stub.emb"
        stub = StubProvider()
        cold = embed_sentences(SENTS, _stub_spec(), cache, stub)
        assert stub.calls == 3
        loaded = EmbeddingCache.load(cache)
        assert len(loaded) == 3
        for s in SENTS:
            np.testing.assert_array_equal(loaded.lookup(s), np.float32(stub.vector(s.text)))
        warm = embed_sentences(SENTS, _stub_spec(), cache, stub)
        assert stub.calls == 3
        for a, b in zip(cold, warm):
            assert a.vector.dtype == np.float32
            np.testing.assert_array_equal(a.vector, b.vector)

    def test_batching(self, tmp_path):
        stub = StubProvider()
        embed_sentences(SENTS, _stub_spec(batch_size=2), tmp_path / "c.emb", stub)
        assert stub.calls == 2

    def test_changed_text_is_a_miss(self, tmp_path):
        cache = tmp_path / "stub.emb"
        stub = StubProvider()
        embed_sentences(SENTS, _stub_spec(), cache, stub)
        edited = [SENTS[0], SENTS[1], Sentence("t1", Role.INTERVIEWEE, 1, "Thank you")]
        out = embed_sentences(edited, _stub_spec(), cache, stub)
        assert stub.calls == 4
        assert out[2].vector[0] == len("Thank you")

    def test_dimension_mismatch(self, tmp_path):
        stub = StubProvider(dim=512)
        with pytest.raises(EmbeddingError, match="dimension mismatch"):
            embed_sentences(SENTS, _stub_spec(dim=768), tmp_path / "c.emb", stub)

    def test_zero_vector_rejected(self, tmp_path):
        with pytest.raises(EmbeddingError, match="zero"):
            embed_sentences(SENTS, _stub_spec(dim=2), None, lambda texts: [[0.0, 0.0]] * len(texts))

    def test_precomputed_missing_keys(self, tmp_path):
        c = EmbeddingCache("m", 2)
        c.put(SENTS[0], [1.0, 0.0])
        c.save(tmp_path / "m.emb")
        spec = EmbeddingProviderSpec("precomputed", "m", dimension=2, path=str(tmp_path / "m.emb"))
        with pytest.raises(EmbeddingError, match=r"2 sentences missing.*'interviewee', 0"):
            embed_sentences(SENTS, spec)

    def test_cache_model_mismatch(self, tmp_path):
        EmbeddingCache("a", 2).save(tmp_path / "a.emb")
        with pytest.raises(EmbeddingError):
            EmbeddingCache.open(tmp_path / "a.emb", "b", 2)

    def test_cache_bad_magic(self, tmp_path):
        (tmp_path / "x.emb").write_bytes(b"NOTACACHE" * 4)
        with pytest.raises(EmbeddingError):
            EmbeddingCache.load(tmp_path / "x.emb")

    def test_remote_wire_format(self, tmp_path):
        seen = []

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                seen.append(body)
                payload = json.dumps({"vectors": [[1.0, float(len(t))] for t in body["texts"]]})
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(payload.encode())

            def log_message(self, *args):
                pass

        server = HTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            spec = EmbeddingProviderSpec("remote", "bert-base", dimension=2, batch_size=8,
                                         endpoint=f"http://127.0.0.1:{server.server_port}/embed")
            out = embed_sentences(SENTS, spec, tmp_path / "r.emb")
        finally:
            server.shutdown()
        assert seen == [{"model": "bert-base", "texts": [s.text for s in SENTS]}]
        assert [e.vector[1] for e in out] == [len(s.text) for s in SENTS]

    def test_remote_failure_reported(self):
        spec = EmbeddingProviderSpec("remote", "m", dimension=2, endpoint="http://127.0.0.1:9/x",
                                     max_retries=0, timeout=1.0)
        with pytest.raises(EmbeddingError, match="failed after 1 attempts"):
            embed_sentences(SENTS[:1], spec)


def brute_internal(vectors):
    pairs = [math.fsum(a * b for a, b in zip(u, v)) /
             (math.sqrt(math.fsum(x * x for x in u)) * math.sqrt(math.fsum(x * x for x in v)))
             for u, v in itertools.combinations(vectors, 2)]
    return math.fsum(pairs) / len(pairs)


def brute_cross(xs, ys):
    pairs = [math.fsum(a * b for a, b in zip(u, v)) /
             (math.sqrt(math.fsum(x * x for x in u)) * math.sqrt(math.fsum(x * x for x in v)))
             for u in xs for v in ys]
    return math.fsum(pairs) / len(pairs)


class TestCosine:
    def test_identity(self):
        assert cosine([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine([1, 0], [0, 1]) == 0.0

    def test_hand_value(self):
        assert cosine([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            cosine([0, 0], [1, 1])
        with pytest.raises(ValueError):
            cosine([1, 0], [1, 0, 0])


class TestAggregates:
    def test_internal_identical(self):
        assert internal_similarity([[1.0, 2.0]] * 2) == pytest.approx(1.0, abs=1e-15)

    def test_internal_hand_average(self):
        # cosines: (e1,e1)=1, (e1,e2)=0, (e1,e2)=0
        assert internal_similarity([[1, 0], [1, 0], [0, 1]]) == pytest.approx(1 / 3, abs=1e-15)

    def test_internal_too_few(self):
        assert internal_similarity([[1.0, 0.0]]) is None

    def test_cross_identical(self):
        assert cross_similarity([[1.0, 1.0]], [[2.0, 2.0]]) == pytest.approx(1.0, abs=1e-15)

    def test_cross_hand_average(self):
        a = [1.0, 0.0]
        b1 = [0.2, math.sqrt(1 - 0.04)]
        b2 = [0.6, 0.8]
        assert cross_similarity([a], [b1, b2]) == pytest.approx(0.4, abs=1e-12)
        assert cross_similarity([b1, b2], [a]) == pytest.approx(0.4, abs=1e-12)

    def test_cross_empty(self):
        assert cross_similarity([], [[1.0]]) is None

    def test_cross_model_mean(self):
        emb = lambda v: [SentenceEmbedding("t", Role.INTERVIEWER, 0, np.array([1.0, 0.0])),
                         SentenceEmbedding("t", Role.INTERVIEWEE, 0, np.array(v))]
        a = transcript_similarity("t", "A", emb([0.6, 0.8]))
        b = transcript_similarity("t", "B", emb([0.4, math.sqrt(1 - 0.16)]))
        cross = cross_model_average([a, b])
        assert cross.model == CROSS_MODEL
        assert cross.sim_cross == pytest.approx(0.5, abs=1e-12)
        single = cross_model_average([a])
        assert single.sim_cross == a.sim_cross

    def test_report_layout(self):
        rng = np.random.default_rng(0)
        embs = {m: [SentenceEmbedding("t", role, i, rng.normal(size=3))
                    for role in Role for i in range(3)] for m in ("bert-base", "deberta-v3")}
        rows = similarity_report(["t"], embs)
        assert [r.model for r in rows] == ["bert-base", "deberta-v3", CROSS_MODEL]
        for r in rows:
            assert set(r.to_dict()) >= {"sim_interviewer_internal", "sim_interviewee_internal",
                                        "sim_cross"}


vec_lists = st.integers(1, 6).flatmap(
    lambda n: st.lists(arrays(np.float64, 5, elements=st.floats(-10, 10)), min_size=n, max_size=n)
).map(lambda vs: [v for v in vs if np.linalg.norm(v) > 1e-3])


@settings(max_examples=150)
@given(vec_lists, vec_lists, st.randoms())
def test_aggregates_match_pair_loops(xs, ys, rnd):
    if len(xs) >= 2:
        got = internal_similarity(xs)
        assert got == pytest.approx(brute_internal(xs), abs=1e-12)
        assert -1.0 <= got <= 1.0
        shuffled = list(xs)
        rnd.shuffle(shuffled)
        assert internal_similarity(shuffled) == pytest.approx(got, abs=1e-12)
    if xs and ys:
        got = cross_similarity(xs, ys)
        assert got == pytest.approx(brute_cross(xs, ys), abs=1e-12)
        assert cross_similarity(ys, xs) == pytest.approx(got, abs=1e-12)


@given(vec_lists, vec_lists, st.lists(st.floats(1e-3, 1e3), min_size=12, max_size=12))
def test_scale_invariance(xs, ys, scales):
    sx = [v * scales[i] for i, v in enumerate(xs)]
    sy = [v * scales[6 + i] for i, v in enumerate(ys)]
    if len(xs) >= 2:
        assert internal_similarity(sx) == pytest.approx(internal_similarity(xs), abs=1e-12)
    if xs and ys:
        assert cross_similarity(sx, sy) == pytest.approx(cross_similarity(xs, ys), abs=1e-12)


@given(st.integers(2, 8), arrays(np.float64, 4, elements=st.floats(0.1, 5)))
def test_identical_vectors(n, v):
    assert internal_similarity([v] * n) == pytest.approx(1.0, abs=1e-12)
