"""Synthetic corpora, tokenizers and causal designs with known ground truth.

Used by the acceptance suite and the benchmark script; nothing here is needed
to analyse real data.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .corpus import Role, Sentence, Source, Transcript
from .semantic import EmbeddingCache

PUNCT = (".", "!", "?", ",")


def word_vocabulary(size: int, prefix: str = "w") -> list[str]:
    return [f"{prefix}{i}" for i in range(size)]


def write_wordpiece_tokenizer(path, words: Sequence[str], subwords: Sequence[str] = ()) -> Path:
    """Write a BERT-style WordPiece ``tokenizer.json`` over ``words``.

    ``subwords`` are continuation pieces given without the ``##`` prefix.
    """
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors

    vocab = {"[PAD]": 0, "[UNK]": 1, "[CLS]": 2, "[SEP]": 3}
    for tok in [*PUNCT, *words, *(f"##{s}" for s in subwords)]:
        vocab.setdefault(tok, len(vocab))
    tok = Tokenizer(models.WordPiece(vocab=vocab, unk_token="[UNK]", max_input_chars_per_word=100))
    tok.normalizer = normalizers.BertNormalizer(lowercase=True)
    tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tok.post_processor = processors.BertProcessing(("[SEP]", 3), ("[CLS]", 2))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tok.save(str(path))
    return path


def _sentence(rng: np.random.Generator, vocab: Sequence[str], mean_len: float, end: str) -> str:
    n = max(1, int(rng.poisson(mean_len)))
    words = rng.choice(len(vocab), size=n)
    return " ".join(vocab[i] for i in words) + end


def synthetic_transcript(tid: str, source: Source, rng: np.random.Generator,
                         vocab: Sequence[str], n_tokens: int = 3000,
                         question_len: float = 14.0, answer_len: float = 20.0) -> Transcript:
    """Alternating question/answer turns until roughly ``n_tokens`` words."""
    turns, total = [], 0
    while total < n_tokens:
        q = " ".join(_sentence(rng, vocab, question_len, "?") for _ in range(1 + rng.integers(2)))
        a = " ".join(_sentence(rng, vocab, answer_len, ".") for _ in range(1 + rng.integers(4)))
        turns.append((Role.INTERVIEWER, q))
        turns.append((Role.INTERVIEWEE, a))
        total += len(q.split()) + len(a.split()) + q.count("?") + a.count(".")
    return Transcript.build(tid, source, turns)


def synthetic_corpus(seed: int, n_ai: int, n_human: int, *, vocab_ai: int = 264,
                     vocab_human: int = 200, n_tokens: int = 3000,
                     vocab: Sequence[str] | None = None) -> list[Transcript]:
    """AI transcripts draw words uniformly from a larger vocabulary.

    With the defaults the population entropy gap is log2(264/200) ≈ 0.40 bits.
    """
    vocab = list(vocab) if vocab is not None else word_vocabulary(max(vocab_ai, vocab_human))
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_ai):
        out.append(synthetic_transcript(f"ai-{i:05d}", Source.AI, rng, vocab[:vocab_ai], n_tokens))
    for i in range(n_human):
        out.append(synthetic_transcript(f"hu-{i:05d}", Source.HUMAN, rng, vocab[:vocab_human], n_tokens))
    return out


def _key_seed(*parts) -> int:
    h = hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()
    return int.from_bytes(h[:8], "little")


def synthetic_embeddings(sentences: Sequence[Sentence], model_name: str, dimension: int,
                         seed: int = 0, topic_scale: float = 1.0,
                         noise_scale: float = 1.0) -> EmbeddingCache:
    """Deterministic vectors: a per-transcript topic direction plus per-sentence noise."""
    cache = EmbeddingCache(model_name, dimension)
    topics: dict[str, np.ndarray] = {}
    for s in sentences:
        if s.transcript_id not in topics:
            rng = np.random.default_rng(_key_seed(seed, model_name, s.transcript_id))
            topics[s.transcript_id] = topic_scale * rng.normal(size=dimension) + 2.0
        rng = np.random.default_rng(_key_seed(seed, model_name, s.transcript_id, s.role.value, s.seq))
        cache.put(s, topics[s.transcript_id] + noise_scale * rng.normal(size=dimension))
    return cache


def confounded_design(seed: int, n: int = 1392, *, share: float = 0.10, rho: float = 0.8,
                      strength: float = 0.95, tau: float = 0.5, null_outcome: bool = False):
    """Two correlated length-like confounders driving both treatment and outcome.

    Returns ``(x, t, y)``. The treatment intercept is solved so the expected
    treated share equals ``share``; with the defaults the pre-matching SMDs
    are about 1.2 and 1.1.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 2))
    x1 = z[:, 0]
    x2 = rho * z[:, 0] + np.sqrt(1 - rho ** 2) * z[:, 1]
    index = strength * (x1 + 0.6 * x2)
    a = optimize.brentq(lambda a: special.expit(a + index).mean() - share, -30, 10)
    t = (rng.random(n) < special.expit(a + index)).astype(np.int64)
    noise = rng.normal(size=n)
    if null_outcome:
        y = noise
    else:
        y = 1.0 + tau * t + 0.8 * x1 - 0.5 * x2 + noise
    return np.column_stack([x1, x2]), t, y


def logistic_design(seed: int, coef: Sequence[float], n: int = 2000):
    """Rows drawn from the logistic model with intercept ``coef[0]``."""
    rng = np.random.default_rng(seed)
    coef = np.asarray(coef, dtype=float)
    x = rng.normal(size=(n, coef.size - 1))
    p = special.expit(coef[0] + x @ coef[1:])
    y = (rng.random(n) < p).astype(np.int64)
    return x, y
