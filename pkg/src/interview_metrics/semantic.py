"""Sentence embeddings behind a provider contract, plus cosine-similarity aggregates.

Embeddings are produced elsewhere (a remote service or a precomputed file) and
cached locally so that reruns never touch the provider.

Cache file layout (all integers little-endian)::

    b"IVEMBED1"                      magic
    uint64  header length, header    JSON {"model_name", "dimension", "count"}
    uint64  index length, index      JSON [[transcript_id, role, seq, text_sha1], ...]
    count * dimension float32        one record per index entry, in index order
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Role, Sentence

logger = logging.getLogger(__name__)

MAGIC = b"IVEMBED1"
CROSS_MODEL = "Cross"


class EmbeddingError(RuntimeError):
    pass


class ProviderKind(str, enum.Enum):
    REMOTE = "remote"
    PRECOMPUTED = "precomputed"


@dataclass(frozen=True)
class EmbeddingProviderSpec:
    kind: ProviderKind
    model_name: str
    dimension: int = 768
    endpoint: str | None = None
    path: str | None = None
    batch_size: int = 32
    max_retries: int = 3
    timeout: float = 60.0
    max_in_flight: int = 4

    def __post_init__(self):
        object.__setattr__(self, "kind", ProviderKind(self.kind))
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.kind is ProviderKind.REMOTE and not self.endpoint:
            raise ValueError("remote provider needs an endpoint")
        if self.kind is ProviderKind.PRECOMPUTED and not self.path:
            raise ValueError("precomputed provider needs a path")


@dataclass(frozen=True)
class SentenceEmbedding:
    transcript_id: str
    role: Role
    seq: int
    vector: np.ndarray


def sentence_key(s: Sentence) -> tuple[str, str, int]:
    return (s.transcript_id, s.role.value, s.seq)


def _text_hash(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """In-memory view of one cache file; ``save`` rewrites it atomically."""

    def __init__(self, model_name: str, dimension: int):
        self.model_name = model_name
        self.dimension = dimension
        self._keys: list[tuple[str, str, int, str]] = []
        self._rows: list[np.ndarray] = []
        self._pos: dict[tuple[str, str, int], int] = {}

    def __len__(self) -> int:
        return len(self._keys)

    def lookup(self, s: Sentence) -> np.ndarray | None:
        i = self._pos.get(sentence_key(s))
        if i is None or self._keys[i][3] != _text_hash(s.text):
            return None
        return self._rows[i]

    def put(self, s: Sentence, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype="<f4").reshape(-1)
        key = sentence_key(s)
        entry = (*key, _text_hash(s.text))
        if key in self._pos:
            i = self._pos[key]
            self._keys[i], self._rows[i] = entry, vec
        else:
            self._pos[key] = len(self._keys)
            self._keys.append(entry)
            self._rows.append(vec)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = json.dumps({"model_name": self.model_name, "dimension": self.dimension,
                             "count": len(self._keys)}, sort_keys=True).encode()
        index = json.dumps([list(k) for k in self._keys], ensure_ascii=False).encode()
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            fh.write(struct.pack("<Q", len(index)))
            fh.write(index)
            if self._rows:
                fh.write(np.ascontiguousarray(np.stack(self._rows), dtype="<f4").tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "EmbeddingCache":
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise EmbeddingError(f"{path}: not an embedding cache file")
            (n,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(n))
            (n,) = struct.unpack("<Q", fh.read(8))
            index = json.loads(fh.read(n))
            dim, count = int(header["dimension"]), int(header["count"])
            if len(index) != count:
                raise EmbeddingError(f"{path}: index has {len(index)} entries, header says {count}")
            data = np.frombuffer(fh.read(), dtype="<f4")
        if data.size != count * dim:
            raise EmbeddingError(f"{path}: truncated payload")
        cache = cls(header["model_name"], dim)
        mat = data.reshape(count, dim)
        for i, (tid, role, seq, h) in enumerate(index):
            key = (tid, role, int(seq))
            cache._pos[key] = i
            cache._keys.append((tid, role, int(seq), h))
            cache._rows.append(mat[i])
        return cache

    @classmethod
    def open(cls, path, model_name: str, dimension: int) -> "EmbeddingCache":
        if path is None or not Path(path).is_file():
            return cls(model_name, dimension)
        cache = cls.load(path)
        if cache.dimension != dimension or cache.model_name != model_name:
            raise EmbeddingError(
                f"{path}: cache holds {cache.model_name!r}/{cache.dimension}-d, "
                f"expected {model_name!r}/{dimension}-d")
        return cache


def remote_embedder(spec: EmbeddingProviderSpec, client=None) -> Callable[[list[str]], list]:
    """Return a callable POSTing ``{"model", "texts"}`` and reading ``{"vectors"}``."""
    import httpx

    def call(texts: list[str]) -> list:
        last: Exception | None = None
        for attempt in range(spec.max_retries + 1):
            try:
                if client is not None:
                    resp = client.post(spec.endpoint, json={"model": spec.model_name, "texts": texts})
                else:
                    resp = httpx.post(spec.endpoint, json={"model": spec.model_name, "texts": texts},
                                      timeout=spec.timeout)
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
                if len(vectors) != len(texts):
                    raise EmbeddingError(f"provider returned {len(vectors)} vectors for {len(texts)} texts")
                return vectors
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last = exc
                if attempt < spec.max_retries:
                    time.sleep(min(0.1 * 2 ** attempt, 2.0))
        raise EmbeddingError(f"provider {spec.endpoint} failed after "
                             f"{spec.max_retries + 1} attempts: {last}")

    return call


def _validated(s: Sentence, vector, dimension: int) -> np.ndarray:
    vec = np.asarray(vector, dtype="<f4").reshape(-1)
    if vec.size != dimension:
        raise EmbeddingError(f"dimension mismatch for sentence {sentence_key(s)}: "
                             f"got {vec.size}, expected {dimension}")
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError(f"non-finite embedding for sentence {sentence_key(s)}")
    if not np.any(vec):
        raise EmbeddingError(f"zero embedding for sentence {sentence_key(s)}")
    return vec


def embed_sentences(sentences: Sequence[Sentence], provider: EmbeddingProviderSpec,
                    cache_path=None, embedder: Callable[[list[str]], list] | None = None
                    ) -> list[SentenceEmbedding]:
    """One float32 vector per sentence, in input order.

    Cached vectors are reused; misses go to ``embedder`` (by default the
    remote service of ``provider``) in batches of ``provider.batch_size`` with
    at most ``provider.max_in_flight`` concurrent requests. The cache is
    rewritten once, from this thread, after all batches return.
    """
    if provider.kind is ProviderKind.PRECOMPUTED:
        cache = EmbeddingCache.open(provider.path, provider.model_name, provider.dimension)
        vectors = [cache.lookup(s) for s in sentences]
        missing = [s for s, v in zip(sentences, vectors) if v is None]
        if missing:
            keys = ", ".join(str(sentence_key(s)) for s in missing[:20])
            more = f" (+{len(missing) - 20} more)" if len(missing) > 20 else ""
            raise EmbeddingError(f"{len(missing)} sentences missing from {provider.path}: {keys}{more}")
        if vectors:
            m = np.stack(vectors)  # the cache already guarantees the dimension
            bad = ~np.isfinite(m).all(axis=1) | ~m.any(axis=1)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                _validated(sentences[i], vectors[i], provider.dimension)
        return [SentenceEmbedding(s.transcript_id, s.role, s.seq, v)
                for s, v in zip(sentences, vectors)]

    cache = EmbeddingCache.open(cache_path, provider.model_name, provider.dimension)
    todo, seen = [], set()
    for s in sentences:
        if cache.lookup(s) is None and sentence_key(s) not in seen:
            seen.add(sentence_key(s))
            todo.append(s)
    if todo:
        call = embedder or remote_embedder(provider)
        batches = [todo[i:i + provider.batch_size] for i in range(0, len(todo), provider.batch_size)]
        with ThreadPoolExecutor(max(1, provider.max_in_flight)) as pool:
            results = list(pool.map(lambda b: call([s.text for s in b]), batches))
        for batch, vectors in zip(batches, results):
            if len(vectors) != len(batch):
                raise EmbeddingError(f"provider returned {len(vectors)} vectors for {len(batch)} texts")
            for s, v in zip(batch, vectors):
                cache.put(s, _validated(s, v, provider.dimension))
        if cache_path is not None:
            cache.save(cache_path)
    return [SentenceEmbedding(s.transcript_id, s.role, s.seq, cache.lookup(s)) for s in sentences]


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine of a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _unit_rows(vectors) -> np.ndarray:
    m = np.asarray(vectors, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0):
        raise ValueError("cosine of a zero-norm vector")
    return m / norms[:, None]


def internal_similarity(vectors) -> float | None:
    """Mean cosine over unordered pairs i < j; ``None`` with fewer than two vectors."""
    if len(vectors) < 2:
        return None
    u = _unit_rows(vectors)
    n = u.shape[0]
    g = np.clip(u @ u.T, -1.0, 1.0)
    iu = np.triu_indices(n, k=1)
    return float(g[iu].mean())


def cross_similarity(a_vectors, b_vectors) -> float | None:
    """Mean cosine over every (a, b) pair; ``None`` when either side is empty."""
    if len(a_vectors) == 0 or len(b_vectors) == 0:
        return None
    g = np.clip(_unit_rows(a_vectors) @ _unit_rows(b_vectors).T, -1.0, 1.0)
    return float(g.mean())


SIMILARITY_FIELDS = ("sim_interviewer_internal", "sim_interviewee_internal", "sim_cross")


@dataclass
class SimilarityReport:
    transcript_id: str
    model: str
    sim_interviewer_internal: float | None
    sim_interviewee_internal: float | None
    sim_cross: float | None
    n_int: int
    n_intv: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def average(self) -> float | None:
        """Mean of the available aggregates."""
        vals = [getattr(self, f) for f in SIMILARITY_FIELDS if getattr(self, f) is not None]
        return float(np.mean(vals)) if vals else None


def transcript_similarity(transcript_id: str, model: str,
                          embeddings: Iterable[SentenceEmbedding]) -> SimilarityReport:
    embeddings = list(embeddings)
    ints = [e.vector for e in embeddings if e.role == Role.INTERVIEWER]
    intvs = [e.vector for e in embeddings if e.role == Role.INTERVIEWEE]
    return SimilarityReport(transcript_id, model, internal_similarity(ints),
                            internal_similarity(intvs), cross_similarity(ints, intvs),
                            len(ints), len(intvs))


def _mean_or_none(values: list) -> float | None:
    if not values or any(v is None for v in values):
        return None
    return float(math.fsum(values) / len(values))


def cross_model_average(reports: Sequence[SimilarityReport]) -> SimilarityReport:
    """Unweighted mean of per-model aggregates for one transcript."""
    first = reports[0]
    return SimilarityReport(
        first.transcript_id, CROSS_MODEL,
        *(_mean_or_none([getattr(r, f) for r in reports]) for f in SIMILARITY_FIELDS),
        first.n_int, first.n_intv)


def similarity_report(transcript_ids: Sequence[str],
                      embeddings: dict[str, Sequence[SentenceEmbedding]],
                      include_cross: bool = True) -> list[SimilarityReport]:
    """Per transcript and model aggregates, plus the ``Cross`` pseudo-model.

    ``embeddings`` maps model name to that model's embeddings for the whole
    corpus. Models are reported in the mapping's order.
    """
    grouped: dict[str, dict[str, list[SentenceEmbedding]]] = {}
    for model, embs in embeddings.items():
        per = {tid: [] for tid in transcript_ids}
        for e in embs:
            if e.transcript_id in per:
                per[e.transcript_id].append(e)
        grouped[model] = per
    out = []
    for tid in transcript_ids:
        per_model = [transcript_similarity(tid, m, grouped[m][tid]) for m in embeddings]
        out.extend(per_model)
        if include_cross and per_model:
            out.append(cross_model_average(per_model))
    return out


def mean_embedding(embeddings: Iterable[SentenceEmbedding]) -> np.ndarray | None:
    vecs = [np.asarray(e.vector, dtype=np.float64) for e in embeddings]
    if not vecs:
        return None
    return np.mean(vecs, axis=0)
