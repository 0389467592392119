"""Dialogue corpus model, JSON-lines I/O, and special-token injection.

File format: one dialogue object per line,
``{"id": ..., "turns": [{"speaker": "user"|"agent", "text": ...}]}``
with item mentions written inline as ``@<itemId>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .vocab import GEN, REC, SPECIAL_TOKENS, Vocabulary, is_item_token, tokenize


@dataclass
class Turn:
    speaker: str  # "user" | "agent"
    text: str
    token_ids: list[int] = field(default_factory=list)

    def item_mentions(self, vocab: Vocabulary) -> list[int]:
        """Catalog ids of item tokens, in order of appearance."""
        return [vocab.catalog_id(t) for t in self.token_ids if vocab.is_item_id(t)]


@dataclass
class Dialogue:
    id: str
    turns: list[Turn]


class DialogueCorpus:
    def __init__(self, dialogues: list[Dialogue], vocab: Vocabulary):
        self.dialogues = dialogues
        self.vocab = vocab

    def __len__(self):
        return len(self.dialogues)

    @classmethod
    def from_raw(cls, raw_dialogues: list[dict], vocab: Vocabulary) -> "DialogueCorpus":
        dialogues = []
        for rd in raw_dialogues:
            turns = [Turn(speaker=t["speaker"], text=t["text"],
                          token_ids=vocab.encode(t["text"]))
                     for t in rd["turns"]]
            dialogues.append(Dialogue(id=str(rd["id"]), turns=turns))
        return cls(dialogues, vocab)

    def to_raw(self) -> list[dict]:
        return [{"id": d.id,
                 "turns": [{"speaker": t.speaker, "text": t.text} for t in d.turns]}
                for d in self.dialogues]


def load_dialogues_jsonl(path) -> list[dict]:
    """Read raw dialogues; malformed lines raise with their line number."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if "id" not in obj or "turns" not in obj:
                    raise KeyError("missing 'id' or 'turns'")
                for t in obj["turns"]:
                    if t.get("speaker") not in ("user", "agent"):
                        raise KeyError(f"bad speaker {t.get('speaker')!r}")
                    if "text" not in t:
                        raise KeyError("turn missing 'text'")
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"{path}: line {lineno}: {e}") from e
            out.append(obj)
    return out


def save_dialogues_jsonl(raw_dialogues: list[dict], path):
    with open(path, "w", encoding="utf-8") as f:
        for rd in raw_dialogues:
            f.write(json.dumps(rd, ensure_ascii=False) + "\n")


def turn_has_item(text: str) -> bool:
    return any(is_item_token(t) for t in tokenize(text))


def inject_special_tokens(raw_dialogue: dict) -> dict:
    """Prefix each agent turn with [REC] or [GEN] by whether it mentions an item.

    Idempotent: already-prefixed turns are left alone.
    """
    turns = []
    for t in raw_dialogue["turns"]:
        text = t["text"]
        if t["speaker"] == "agent":
            toks = tokenize(text)
            if not toks or toks[0] not in (SPECIAL_TOKENS[REC], SPECIAL_TOKENS[GEN]):
                prefix = SPECIAL_TOKENS[REC] if turn_has_item(text) else SPECIAL_TOKENS[GEN]
                text = f"{prefix} {text}"
        turns.append({"speaker": t["speaker"], "text": text})
    return {"id": raw_dialogue["id"], "turns": turns}


def inject_special_tokens_corpus(raw_dialogues: list[dict]) -> list[dict]:
    return [inject_special_tokens(rd) for rd in raw_dialogues]


def mentioned_entities(history: list[Turn], vocab: Vocabulary,
                       item_kg, word_kg) -> tuple[list[int], list[int]]:
    """Ordered, deduplicated (item-KG node ids, word-KG node ids) appearing
    in the history turns."""
    items: dict[int, None] = {}
    words: dict[int, None] = {}
    for turn in history:
        for tid in turn.token_ids:
            if vocab.is_item_id(tid):
                node = item_kg.node_id(f"@{vocab.catalog_id(tid)}")
                if node is not None and node not in items:
                    items[node] = None
            else:
                node = word_kg.node_id(vocab.token(tid))
                if node is not None and node not in words:
                    words[node] = None
    return list(items), list(words)
