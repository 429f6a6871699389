"""Transcript ingest, validation, filtering and sentence segmentation.

Two on-disk inputs are understood:

* the canonical JSON-lines format, one object per line::

      {"id": "...", "source": "AI", "language": "en",
       "turns": [{"role": "interviewer", "text": "..."}, ...]}

* MediaSum-style records (``{"id", "utt": [...], "speaker": [...]}``), either a
  JSON array or JSON lines. Speaker tags are mapped to the two interview roles
  through a :class:`RoleMap`.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import yaml

SENTENCE_DELIMITERS = ".!?"


class Role(str, enum.Enum):
    INTERVIEWER = "interviewer"
    INTERVIEWEE = "interviewee"


class Source(str, enum.Enum):
    AI = "AI"
    HUMAN = "Human"


class InputFormat(str, enum.Enum):
    CANONICAL = "canonical"
    MEDIASUM = "mediasum"


class CorpusError(ValueError):
    """Raised for invalid transcripts or unreadable corpus files."""


class CorpusParseError(CorpusError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


def parse_role(value) -> Role:
    if isinstance(value, Role):
        return value
    try:
        return Role(str(value).strip().lower())
    except ValueError:
        raise CorpusError(f"unknown role {value!r}") from None


def parse_source(value) -> Source:
    if isinstance(value, Source):
        return value
    for s in Source:
        if str(value).strip().lower() == s.value.lower():
            return s
    raise CorpusError(f"unknown source {value!r}")


@dataclass(frozen=True)
class Turn:
    role: Role
    text: str
    index: int

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise CorpusError(f"turn {self.index} has empty text")


@dataclass(frozen=True)
class Transcript:
    id: str
    source: Source
    language: str
    turns: tuple[Turn, ...]

    def __post_init__(self):
        if not self.id:
            raise CorpusError("transcript id must be non-empty")
        indices = [t.index for t in self.turns]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise CorpusError(f"{self.id}: turn indices must be strictly increasing")
        roles = {t.role for t in self.turns}
        missing = [r.value for r in Role if r not in roles]
        if missing:
            raise CorpusError(f"{self.id}: missing role {', '.join(missing)}")

    @classmethod
    def build(cls, id: str, source, turns: Iterable[tuple], language: str = "en") -> "Transcript":
        """Construct from ``(role, text)`` pairs, numbering turns from 0."""
        built = tuple(Turn(parse_role(role), text.strip() if isinstance(text, str) else text, i)
                      for i, (role, text) in enumerate(turns))
        return cls(str(id), parse_source(source), language, built)

    @property
    def char_count(self) -> int:
        # code points of turn texts only; no labels or inter-turn whitespace
        return sum(len(t.text) for t in self.turns)

    def role_turns(self, role: Role) -> list[Turn]:
        return [t for t in self.turns if t.role == role]

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "source": self.source.value,
            "language": self.language,
            "turns": [{"role": t.role.value, "text": t.text} for t in self.turns],
        }


@dataclass(frozen=True)
class Sentence:
    transcript_id: str
    role: Role
    seq: int
    text: str


@dataclass(frozen=True)
class CorpusFilter:
    """Retention rule applied by :func:`filter_corpus`.

    ``min_chars`` is applied only to transcripts whose source is listed in
    ``min_chars_sources``; a transcript is kept when its character count is
    strictly greater than ``min_chars``.
    """

    min_chars: int = 3000
    language: str = "*"
    required_roles: frozenset = frozenset(Role)
    min_chars_sources: frozenset = frozenset(Source)

    def __post_init__(self):
        if self.min_chars < 0:
            raise ValueError("min_chars must be >= 0")


@dataclass
class Diagnostic:
    level: str  # "warning" | "error"
    message: str
    path: str | None = None
    line: int | None = None
    record_id: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class IngestReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    def add(self, level: str, message: str, **where) -> None:
        self.diagnostics.append(Diagnostic(level, message, **where))

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.level == "error"]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.level == "warning"]

    def merge(self, other: "IngestReport") -> None:
        self.diagnostics.extend(other.diagnostics)
        for k, v in other.counts.items():
            self.counts[k] = self.counts.get(k, 0) + v

    def to_dict(self) -> dict:
        return {
            "counts": dict(sorted(self.counts.items())),
            "n_errors": len(self.errors),
            "n_warnings": len(self.warnings),
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


@dataclass(frozen=True)
class RoleMap:
    """Speaker tags (exact, case-insensitive) or regexes that identify hosts.

    For each MediaSum transcript the first distinct speaker matching the map is
    the interviewer; every other speaker collapses into the interviewee role.
    """

    hosts: tuple[str, ...] = ()
    host_patterns: tuple[str, ...] = ()

    def is_host(self, speaker: str) -> bool:
        s = speaker.strip().casefold()
        if any(s == h.strip().casefold() for h in self.hosts):
            return True
        return any(re.search(p, speaker) for p in self.host_patterns)

    @classmethod
    def load(cls, path) -> "RoleMap":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise CorpusError(f"{path}: role map must be a mapping")
        return cls(tuple(data.get("hosts", ())), tuple(data.get("host_patterns", ())))


# MediaSum marks hosts as e.g. "STEVE INSKEEP, HOST"
DEFAULT_ROLE_MAP = RoleMap(host_patterns=(r"(?i),\s*(co-?)?host\b", r"(?i)\banchor\b"))


def _canonical_record(obj, path: str, line: int) -> Transcript:
    if not isinstance(obj, dict):
        raise CorpusParseError("record is not a JSON object", path, line)
    for key in ("id", "source", "turns"):
        if key not in obj:
            raise CorpusParseError(f"missing field {key!r}", path, line)
    turns = obj["turns"]
    if not isinstance(turns, list):
        raise CorpusParseError("'turns' must be a list", path, line)
    pairs = []
    for i, t in enumerate(turns):
        if not isinstance(t, dict) or "role" not in t or "text" not in t:
            raise CorpusParseError(f"turn {i} must have 'role' and 'text'", path, line)
        pairs.append((t["role"], t["text"]))
    try:
        return Transcript.build(obj["id"], obj["source"], pairs, obj.get("language", "en"))
    except CorpusError as exc:
        raise CorpusParseError(str(exc), path, line) from None


def _mediasum_record(obj, path: str, line: int, role_map: RoleMap, source: Source,
                     language: str) -> Transcript:
    if not isinstance(obj, dict):
        raise CorpusParseError("record is not a JSON object", path, line)
    for key in ("id", "utt", "speaker"):
        if key not in obj:
            raise CorpusParseError(f"missing field {key!r}", path, line)
    utts, speakers = obj["utt"], obj["speaker"]
    if not isinstance(utts, list) or not isinstance(speakers, list) or len(utts) != len(speakers):
        raise CorpusParseError("'utt' and 'speaker' must be lists of equal length", path, line)
    host = next((s for s in speakers if role_map.is_host(s)), None)
    if host is None:
        raise _Unmappable(f"no speaker of record {obj['id']!r} matches the role map")
    pairs = []
    for utt, spk in zip(utts, speakers):
        if not isinstance(utt, str) or not utt.strip():
            continue
        role = Role.INTERVIEWER if spk == host else Role.INTERVIEWEE
        pairs.append((role, utt))
    try:
        return Transcript.build(obj["id"], source, pairs, language)
    except CorpusError as exc:
        raise CorpusParseError(str(exc), path, line) from None


class _Unmappable(Exception):
    pass


def _iter_json_records(path: Path) -> Iterator[tuple[int, object]]:
    """Yield ``(line_number, parsed_or_exception)`` for JSON-lines or a JSON array."""
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            yield exc.lineno, exc
            return
        for i, rec in enumerate(records):
            yield i + 1, rec  # array position stands in for a line number
        return
    # "\n" only: str.splitlines also breaks on U+0085/U+2028, legal inside JSON strings
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        try:
            yield lineno, json.loads(raw)
        except json.JSONDecodeError as exc:
            yield lineno, exc


def parse_transcripts(path, fmt=InputFormat.CANONICAL, *, report: IngestReport | None = None,
                      role_map: RoleMap | None = None, source=Source.HUMAN,
                      language: str = "en") -> list[Transcript]:
    """Read transcripts from ``path``.

    Without a ``report`` the first malformed record raises
    :class:`CorpusParseError`. With one, malformed records are recorded as
    errors (with their line number), unmappable MediaSum speakers as
    warnings, and parsing continues.

    ``source`` and ``language`` apply to MediaSum records only; canonical
    records carry their own.
    """
    path = Path(path)
    fmt = InputFormat(fmt)
    source = parse_source(source)
    role_map = role_map or DEFAULT_ROLE_MAP
    if not path.is_file():
        raise CorpusError(f"{path}: no such file")
    out: list[Transcript] = []
    seen: set[str] = set()
    for lineno, obj in _iter_json_records(path):
        try:
            if isinstance(obj, json.JSONDecodeError):
                raise CorpusParseError(f"malformed JSON: {obj.msg}", str(path), lineno)
            if fmt is InputFormat.CANONICAL:
                t = _canonical_record(obj, str(path), lineno)
            else:
                t = _mediasum_record(obj, str(path), lineno, role_map, source, language)
            if t.id in seen:
                raise CorpusParseError(f"duplicate transcript id {t.id!r}", str(path), lineno)
        except _Unmappable as exc:
            if report is None:
                raise CorpusParseError(str(exc), str(path), lineno) from None
            report.add("warning", str(exc), path=str(path), line=lineno,
                       record_id=str(obj.get("id")))
            report.counts["unmappable"] = report.counts.get("unmappable", 0) + 1
            continue
        except CorpusParseError as exc:
            if report is None:
                raise
            report.add("error", str(exc), path=str(path), line=lineno)
            report.counts["rejected"] = report.counts.get("rejected", 0) + 1
            continue
        seen.add(t.id)
        out.append(t)
    if report is not None:
        for t in out:
            key = f"parsed_{t.source.value}"
            report.counts[key] = report.counts.get(key, 0) + 1
    return out


def dumps_transcripts(transcripts: Iterable[Transcript]) -> str:
    return "".join(json.dumps(t.to_record(), ensure_ascii=False, sort_keys=True) + "\n"
                   for t in transcripts)


def write_transcripts(path, transcripts: Iterable[Transcript]) -> None:
    Path(path).write_text(dumps_transcripts(transcripts), encoding="utf-8")


def _language_matches(tag: str, wanted: str) -> bool:
    if wanted in ("*", ""):
        return True
    tag, wanted = tag.lower(), wanted.lower()
    return tag == wanted or tag.startswith(wanted + "-")


def filter_corpus(transcripts: Iterable[Transcript], flt: CorpusFilter) -> list[Transcript]:
    out = []
    for t in transcripts:
        if t.source in flt.min_chars_sources and not t.char_count > flt.min_chars:
            continue
        if not _language_matches(t.language, flt.language):
            continue
        roles = {turn.role for turn in t.turns}
        if not set(flt.required_roles) <= roles:
            continue
        out.append(t)
    return out


def _splitter(extra_delimiters: str) -> re.Pattern:
    chars = SENTENCE_DELIMITERS + "".join(c for c in extra_delimiters if c not in SENTENCE_DELIMITERS)
    return re.compile("[" + re.escape(chars) + "]+")


def segment_sentences(t: Transcript, extra_delimiters: str = "") -> list[Sentence]:
    """Split every turn at maximal runs of ``.``, ``!`` and ``?``.

    Turn boundaries always end a sentence. Extra delimiter characters (for
    instance ``"…。"``) can be supplied for non-English corpora.
    """
    pattern = _splitter(extra_delimiters)
    counters = {r: 0 for r in Role}
    out = []
    for turn in t.turns:
        for piece in pattern.split(turn.text):
            piece = piece.strip()
            if not piece:
                continue
            out.append(Sentence(t.id, turn.role, counters[turn.role], piece))
            counters[turn.role] += 1
    return out


def segmentation_report(transcripts: Iterable[Transcript], extra_delimiters: str = "") -> dict:
    """Sentence counts per transcript and role; roles with no sentences are flagged."""
    rows, flagged = [], []
    for t in transcripts:
        sents = segment_sentences(t, extra_delimiters)
        counts = {r.value: 0 for r in Role}
        for s in sents:
            counts[s.role.value] += 1
        rows.append({"transcript_id": t.id, **counts})
        for role, n in counts.items():
            if n == 0:
                flagged.append({"transcript_id": t.id, "role": role})
    return {"transcripts": rows, "empty_roles": flagged}
