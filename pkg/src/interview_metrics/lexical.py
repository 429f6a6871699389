"""Subword tokenization, length truncation and Shannon entropy."""

from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from .corpus import Role, Sentence, Transcript, segment_sentences

logger = logging.getLogger(__name__)


class Scope(str, enum.Enum):
    OVERALL = "overall"
    INTERVIEWER = "interviewer"
    INTERVIEWEE = "interviewee"


SCOPE_ROLE = {Scope.INTERVIEWER: Role.INTERVIEWER, Scope.INTERVIEWEE: Role.INTERVIEWEE}


class TokenizerConfigError(RuntimeError):
    pass


class LexicalError(ValueError):
    pass


@dataclass(frozen=True)
class TokenizerSpec:
    """A pretrained tokenizer definition in the ``tokenizer.json`` format.

    ``add_special_tokens`` is off by default so sequence boundary markers do
    not enter the entropy counts.
    """

    vocab_source: str
    name: str = ""
    add_special_tokens: bool = False


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple
    scope: Scope = Scope.OVERALL
    transcript_id: str = ""

    def __len__(self) -> int:
        return len(self.tokens)


@lru_cache(maxsize=8)
def _load_tokenizer(path: str, mtime: float):
    from tokenizers import Tokenizer

    try:
        return Tokenizer.from_file(path)
    except Exception as exc:  # the Rust side raises bare Exception
        raise TokenizerConfigError(f"cannot load tokenizer {path!r}: {exc}") from None


def load_tokenizer(spec: TokenizerSpec):
    path = Path(spec.vocab_source)
    if not path.is_file():
        raise TokenizerConfigError(f"tokenizer file not found: {path}")
    return _load_tokenizer(str(path.resolve()), path.stat().st_mtime)


def tokenize(text: str, spec: TokenizerSpec, scope: Scope = Scope.OVERALL,
             transcript_id: str = "") -> TokenSequence:
    tok = load_tokenizer(spec)
    if not text:
        return TokenSequence((), scope, transcript_id)
    ids = tok.encode(text, add_special_tokens=spec.add_special_tokens).ids
    return TokenSequence(tuple(ids), scope, transcript_id)


def tokenize_many(texts: Sequence[str], spec: TokenizerSpec) -> list[list[int]]:
    """Token ids for each text, in input order."""
    tok = load_tokenizer(spec)
    if not texts:
        return []
    encs = tok.encode_batch(list(texts), add_special_tokens=spec.add_special_tokens)
    return [e.ids for e in encs]


def corpus_min_length(sequences: Sequence[TokenSequence], scope: Scope | None = None) -> int:
    if not sequences:
        raise LexicalError("corpus_min_length of an empty list")
    for s in sequences:
        if scope is not None and s.scope != scope:
            raise LexicalError(f"sequence {s.transcript_id!r} has scope {s.scope.value}, "
                               f"expected {Scope(scope).value}")
        if len(s) == 0:
            raise LexicalError(f"empty token sequence for transcript {s.transcript_id!r}")
    return min(len(s) for s in sequences)


def truncate(seq: TokenSequence, l_min: int) -> TokenSequence:
    if l_min < 1:
        raise LexicalError("L_min must be >= 1")
    if l_min > len(seq):
        raise LexicalError(f"cannot truncate {seq.transcript_id!r} of length {len(seq)} "
                           f"to {l_min} (padding is not supported)")
    return TokenSequence(seq.tokens[:l_min], seq.scope, seq.transcript_id)


def entropy_from_counts(counts) -> float:
    """Entropy in bits of an empirical distribution given by positive counts."""
    c = np.asarray(counts, dtype=np.float64)
    c = c[c > 0]
    total = c.sum()
    if total <= 0:
        raise LexicalError("entropy of an empty distribution")
    # H = log2(N) - sum(c log2 c) / N
    h = math.log2(total) - float(np.dot(c, np.log2(c))) / total
    return max(h, 0.0)


def shannon_entropy(seq: TokenSequence | Sequence[Hashable]) -> float:
    tokens = seq.tokens if isinstance(seq, TokenSequence) else seq
    if len(tokens) == 0:
        raise LexicalError("entropy of an empty sequence")
    return entropy_from_counts(list(Counter(tokens).values()))


@dataclass
class EntropyRow:
    transcript_id: str
    source: str
    scope: Scope
    entropy_bits: float
    pre_truncation_length: int
    truncated_length: int

    def to_dict(self) -> dict:
        return {
            "transcript_id": self.transcript_id,
            "source": self.source,
            "scope": self.scope.value,
            "entropy_bits": self.entropy_bits,
            "pre_truncation_length": self.pre_truncation_length,
            "truncated_length": self.truncated_length,
        }


@dataclass
class EntropyReport:
    rows: list[EntropyRow]
    l_min: dict[Scope, int]
    warnings: list[str] = field(default_factory=list)

    def get(self, transcript_id: str, scope: Scope) -> EntropyRow | None:
        for r in self.rows:
            if r.transcript_id == transcript_id and r.scope == scope:
                return r
        return None

    def to_dict(self) -> dict:
        return {
            "l_min": {s.value: v for s, v in self.l_min.items()},
            "rows": [r.to_dict() for r in self.rows],
            "warnings": list(self.warnings),
        }


def transcript_token_sequences(t: Transcript, spec: TokenizerSpec) -> dict[Scope, TokenSequence]:
    """Tokenize a transcript turn by turn.

    The overall sequence is the concatenation of the turn token lists in
    conversation order, so its length is the sum of the two role lengths.
    """
    ids = tokenize_many([turn.text for turn in t.turns], spec)
    seqs: dict[Scope, list] = {s: [] for s in Scope}
    for turn, toks in zip(t.turns, ids):
        seqs[Scope.OVERALL].extend(toks)
        seqs[Scope.INTERVIEWER if turn.role == Role.INTERVIEWER else Scope.INTERVIEWEE].extend(toks)
    return {s: TokenSequence(tuple(v), s, t.id) for s, v in seqs.items()}


def entropy_report(transcripts: Sequence[Transcript], spec: TokenizerSpec | None = None, *,
                   sequences: Sequence[dict[Scope, TokenSequence]] | None = None,
                   pooled_per_scope: bool = True, workers: int = 1) -> EntropyReport:
    """Length-normalized entropy for every transcript and scope.

    Two phases: tokenize everything, then take the minimum length per scope
    across the pooled corpus (both sources) and truncate every sequence to it.
    With ``pooled_per_scope=False`` a single global minimum over all scopes is
    used instead. Precomputed ``sequences`` (aligned with ``transcripts``)
    skip tokenization.
    """
    if sequences is None:
        if spec is None:
            raise LexicalError("either a tokenizer spec or precomputed sequences is required")
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                sequences = list(pool.map(lambda t: transcript_token_sequences(t, spec), transcripts))
        else:
            sequences = [transcript_token_sequences(t, spec) for t in transcripts]
    if len(sequences) != len(transcripts):
        raise LexicalError("sequences are not aligned with transcripts")

    warnings = []
    included: dict[Scope, list[tuple[Transcript, TokenSequence]]] = {s: [] for s in Scope}
    for t, seqs in zip(transcripts, sequences):
        for scope in Scope:
            seq = seqs[scope]
            if len(seq) == 0:
                warnings.append(f"{t.id}: no tokens in scope {scope.value}; excluded")
                continue
            included[scope].append((t, seq))

    l_min = {s: corpus_min_length([q for _, q in included[s]], s) for s in Scope if included[s]}
    if not pooled_per_scope and l_min:
        g = min(l_min.values())
        l_min = {s: g for s in l_min}

    rows = []
    for scope in Scope:
        for t, seq in included[scope]:
            cut = truncate(seq, l_min[scope])
            rows.append(EntropyRow(t.id, t.source.value, scope, shannon_entropy(cut),
                                   len(seq), len(cut)))
    for w in warnings:
        logger.warning(w)
    return EntropyReport(rows, l_min, warnings)


def sample_stats(values: Sequence[float]) -> dict:
    """mean/sd/min/max with n-1 sd; absent (None) entries for degenerate samples."""
    n = len(values)
    if n == 0:
        return {"n": 0, "mean": None, "sd": None, "min": None, "max": None}
    arr = np.asarray(values, dtype=np.float64)
    return {
        "n": n,
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)) if n > 1 else None,
        "min": float(arr.min()),
        "max": float(arr.max()),
    }


@dataclass
class LengthStats:
    """Tokens-per-sentence samples keyed by (transcript_id, role).

    ``role`` is ``"interviewer"``, ``"interviewee"`` or ``"overall"``.
    """

    samples: dict[tuple[str, str], list[int]]

    def stats(self, transcript_id: str, role: str) -> dict:
        return sample_stats(self.samples.get((transcript_id, role), []))

    def pooled(self, transcript_ids: Iterable[str], role: str) -> dict:
        vals: list[int] = []
        for tid in transcript_ids:
            vals.extend(self.samples.get((tid, role), []))
        return sample_stats(vals)

    def to_dict(self) -> dict:
        return {f"{tid}|{role}": {"samples": v, **sample_stats(v)}
                for (tid, role), v in sorted(self.samples.items())}


def sentence_length_stats(transcripts: Sequence[Transcript], spec: TokenizerSpec,
                          sentences: dict[str, list[Sentence]] | None = None) -> LengthStats:
    samples: dict[tuple[str, str], list[int]] = {}
    for t in transcripts:
        sents = sentences[t.id] if sentences is not None else segment_sentences(t)
        lengths = [len(ids) for ids in tokenize_many([s.text for s in sents], spec)]
        by_role = {r.value: [] for r in Role}
        for s, n in zip(sents, lengths):
            by_role[s.role.value].append(n)
        for role, v in by_role.items():
            samples[(t.id, role)] = v
        samples[(t.id, "overall")] = lengths
    return LengthStats(samples)
