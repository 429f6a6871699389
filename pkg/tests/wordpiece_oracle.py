"""Reference BERT WordPiece tokenizer, written from the published algorithm.

Basic tokenization (lowercase, accent stripping, whitespace and punctuation
splitting) followed by greedy longest-match-first subword lookup. Only the
vocabulary is read from ``tokenizer.json``; no tokenizer library is used.
"""

import json
import unicodedata


def _is_punct(ch: str) -> bool:
    cp = ord(ch)
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def _basic(text: str) -> list[str]:
    text = unicodedata.normalize("NFD", text.lower())
    text = "".join(c for c in text if unicodedata.category(c) != "Mn")
    words = []
    for chunk in text.split():
        cur = ""
        for ch in chunk:
            if _is_punct(ch):
                if cur:
                    words.append(cur)
                    cur = ""
                words.append(ch)
            else:
                cur += ch
        if cur:
            words.append(cur)
    return words


class WordPieceOracle:
    def __init__(self, tokenizer_json):
        with open(tokenizer_json, encoding="utf-8") as fh:
            model = json.load(fh)["model"]
        self.vocab = model["vocab"]
        self.unk = model["unk_token"]
        self.prefix = model["continuing_subword_prefix"]
        self.max_chars = model["max_input_chars_per_word"]

    def _word(self, word: str) -> list[int]:
        if len(word) > self.max_chars:
            return [self.vocab[self.unk]]
        out, start = [], 0
        while start < len(word):
            end = len(word)
            piece = None
            while start < end:
                cand = word[start:end] if start == 0 else self.prefix + word[start:end]
                if cand in self.vocab:
                    piece = cand
                    break
                end -= 1
            if piece is None:
                return [self.vocab[self.unk]]
            out.append(self.vocab[piece])
            start = end
        return out

    def encode(self, text: str) -> list[int]:
        ids = []
        for w in _basic(text):
            ids.extend(self._word(w))
        return ids
