from pathlib import Path

import pytest

from interview_metrics import synthetic
from interview_metrics.corpus import Role, Source, Transcript
from interview_metrics.lexical import TokenizerSpec

FIXTURES = Path(__file__).parent / "fixtures"

# small English vocabulary for the WordPiece fixture; continuation pieces are
# chosen so that greedy longest-match splits are exercised
WORDS = ("the", "a", "i", "you", "we", "how", "what", "do", "did", "was", "is", "are", "and",
         "to", "of", "in", "it", "that", "work", "play", "interview", "question", "answer",
         "feel", "think", "about", "your", "my", "job", "team", "tell", "me", "more", "good",
         "agree", "hi", "really", "wow", "yes", "no", "un", "help", "ful", "read")
SUBWORDS = ("ing", "ed", "s", "er", "ly", "ful", "ness", "help", "e")


@pytest.fixture(scope="session")
def tokenizer_spec(tmp_path_factory) -> TokenizerSpec:
    path = tmp_path_factory.mktemp("tok") / "tokenizer.json"
    synthetic.write_wordpiece_tokenizer(path, WORDS, SUBWORDS)
    return TokenizerSpec(str(path), "fixture-wordpiece")


@pytest.fixture(scope="session")
def synthetic_tokenizer(tmp_path_factory) -> TokenizerSpec:
    path = tmp_path_factory.mktemp("tok") / "synthetic.json"
    synthetic.write_wordpiece_tokenizer(path, synthetic.word_vocabulary(264))
    return TokenizerSpec(str(path), "synthetic-wordpiece")


def make_transcript(tid="t1", source=Source.AI, turns=None, language="en") -> Transcript:
    if turns is None:
        turns = [(Role.INTERVIEWER, "How do you feel about your job?"),
                 (Role.INTERVIEWEE, "I think it is good. Really good!")]
    return Transcript.build(tid, source, turns, language)


def build_workspace(root: Path, *, n_ai: int = 30, n_human: int = 70, n_tokens: int = 500,
                    models=(("bert-base", 32), ("deberta-v3", 24)), seed: int = 1,
                    min_chars: int = 1000, replicates: int = 1000, **corpus_kw) -> Path:
    """Synthetic corpus, tokenizer, precomputed embeddings and a run config under ``root``."""
    import yaml

    from interview_metrics import corpus as corpus_mod

    root.mkdir(parents=True, exist_ok=True)
    ts = synthetic.synthetic_corpus(seed, n_ai, n_human, n_tokens=n_tokens, **corpus_kw)
    corpus_mod.write_transcripts(root / "ai.jsonl", [t for t in ts if t.source is Source.AI])
    corpus_mod.write_transcripts(root / "human.jsonl", [t for t in ts if t.source is Source.HUMAN])
    synthetic.write_wordpiece_tokenizer(root / "tokenizer.json", synthetic.word_vocabulary(264))
    sents = [s for t in ts for s in corpus_mod.segment_sentences(t)]
    providers = []
    for name, dim in models:
        synthetic.synthetic_embeddings(sents, name, dim, seed=seed).save(root / f"{name}.emb")
        providers.append({"kind": "precomputed", "model_name": name, "path": f"{name}.emb",
                          "dimension": dim})
    cfg = {
        "output_dir": "out",
        "seed": 7,
        "corpus": {"inputs": [{"path": "ai.jsonl", "source": "AI"},
                              {"path": "human.jsonl", "source": "Human"}],
                   "filter": {"min_chars": min_chars}},
        "tokenizer": {"path": "tokenizer.json", "name": "synthetic-wordpiece"},
        "embeddings": {"providers": providers},
        "stats": {"bootstrap_replicates": replicates},
    }
    path = root / "run.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
