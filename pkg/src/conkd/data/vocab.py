"""Unified token space: word vocabulary, item catalog, and special tokens.

All model distributions live in this single index space, laid out as
``[specials][words][items]`` so the item ids form one contiguous range
(summing item probability mass is a single slice).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

PAD, BOS, EOS, UNK, REC, GEN = range(6)
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>", "[REC]", "[GEN]")

_TOKEN_RE = re.compile(r"@\d+|\[rec\]|\[gen\]|[a-z0-9']+|[?!.,:;]")


def tokenize(text: str) -> list[str]:
    """Lowercased word-level split; "@<id>" item mentions stay atomic."""
    out = []
    for m in _TOKEN_RE.finditer(text.lower()):
        tok = m.group(0)
        if tok == "[rec]":
            tok = SPECIAL_TOKENS[REC]
        elif tok == "[gen]":
            tok = SPECIAL_TOKENS[GEN]
        out.append(tok)
    return out


def is_item_token(token: str) -> bool:
    return token.startswith("@") and token[1:].isdigit()


@dataclass
class Vocabulary:
    words: list[str]
    item_ids: list[int]  # catalog ids in token order (sorted ascending)
    _word_index: dict[str, int] = field(default_factory=dict, repr=False)
    _item_index: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._word_index = {w: i for i, w in enumerate(self.words)}
        self._item_index = {cid: i for i, cid in enumerate(self.item_ids)}
        if len(self._word_index) != len(self.words):
            raise ValueError("duplicate word in vocabulary")
        if len(self._item_index) != len(self.item_ids):
            raise ValueError("duplicate item id in vocabulary")

    # layout
    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def word_start(self) -> int:
        return len(SPECIAL_TOKENS)

    @property
    def item_start(self) -> int:
        return len(SPECIAL_TOKENS) + len(self.words)

    @property
    def item_range(self) -> tuple[int, int]:
        return self.item_start, self.item_start + self.n_items

    def __len__(self) -> int:
        return len(SPECIAL_TOKENS) + len(self.words) + len(self.item_ids)

    # lookups
    def encode_token(self, token: str) -> int:
        if token in SPECIAL_TOKENS:
            return SPECIAL_TOKENS.index(token)
        if is_item_token(token):
            idx = self._item_index.get(int(token[1:]))
            return UNK if idx is None else self.item_start + idx
        idx = self._word_index.get(token)
        return UNK if idx is None else self.word_start + idx

    def encode(self, text: str) -> list[int]:
        return [self.encode_token(t) for t in tokenize(text)]

    def token(self, token_id: int) -> str:
        if token_id < self.word_start:
            return SPECIAL_TOKENS[token_id]
        if token_id < self.item_start:
            return self.words[token_id - self.word_start]
        return f"@{self.item_ids[token_id - self.item_start]}"

    def decode(self, ids) -> list[str]:
        return [self.token(int(i)) for i in ids]

    def is_item_id(self, token_id: int) -> bool:
        lo, hi = self.item_range
        return lo <= token_id < hi

    def item_token_id(self, catalog_id: int) -> int:
        return self.item_start + self._item_index[catalog_id]

    def catalog_id(self, token_id: int) -> int:
        return self.item_ids[token_id - self.item_start]

    # serialization
    def to_dict(self) -> dict:
        return {"specials": list(SPECIAL_TOKENS), "words": self.words,
                "items": self.item_ids}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        if tuple(d.get("specials", ())) != SPECIAL_TOKENS:
            raise ValueError("unsupported special-token layout")
        return cls(words=list(d["words"]), item_ids=[int(i) for i in d["items"]])

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def build_vocabulary(texts, item_catalog: dict[int, str]) -> Vocabulary:
    """Words ordered by first occurrence across ``texts``; items sorted by
    catalog id. Raises on an empty corpus."""
    words: dict[str, None] = {}
    saw_text = False
    for text in texts:
        saw_text = True
        for tok in tokenize(text):
            if tok in SPECIAL_TOKENS or is_item_token(tok):
                continue
            if tok not in words:
                words[tok] = None
    if not saw_text:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(words=list(words), item_ids=sorted(int(k) for k in item_catalog))
