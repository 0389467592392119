"""Synthetic conversational-recommendation corpus generator.

A small templated world: every item carries a pair of attributes
(genres), users state a two-genre preference (sometimes plus a liked
item), and recommended gold items always share at least one stated
attribute — so the gold item is reachable within one hop of the stated
preference words in the item graph, which keeps the task learnable and
exhaustively checkable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GENRE_WORDS = [
    "action", "comedy", "drama", "horror", "romance", "scifi", "thriller",
    "fantasy", "mystery", "animation", "documentary", "western", "crime",
    "family", "musical", "war", "sport", "noir", "adventure", "biopic",
    "superhero", "disaster", "heist", "spy", "courtroom", "zombie", "alien",
    "pirate", "samurai", "gangster", "survival", "roadtrip", "teen",
    "political", "historical", "psychological", "satire", "slasher",
    "monster", "space",
]

_TITLE_NOUNS = ["Story", "Affair", "Mission", "Night", "Code", "Journey",
                "Legacy", "Gambit"]

_GREETINGS = ["hi", "hello", "hi there", "hey"]
_QUERIES = ["what kind of movies do you like ?",
            "what genre are you in the mood for ?",
            "tell me what you like to watch"]
_PREFS = ["i like {a} and {b} movies",
          "i am into {a} and {b} films",
          "i love {a} and {b} movies",
          "looking for something {a} and {b}"]
_PREF_SINGLE = ["i like {a} movies", "i am into {a} films", "i love {a} movies"]
_MENTIONS = [" . i really liked {item}", " . i enjoyed {item} a lot",
             " . {item} was great"]
_ASKS = [" . any suggestions ?", " . what would you recommend ?",
         " . got a recommendation ?"]
_MORE_ASKS = ["what else do you have ?", "any other ideas ?",
              "can you suggest another one ?"]
_RECS = ["have you seen {item} ?", "you should watch {item}",
         "i recommend {item}", "i think you would enjoy {item}"]
_SECOND_RECS = ["then you might also like {item}", "you could also try {item}",
                "another good one is {item}"]
_CHITCHAT = ["tell me more about what you enjoy", "that is a great combination",
             "i can help you find something good"]
_ACKS = ["i have seen that one already", "sounds good thanks",
         "nice , i will check it out", "great suggestion"]
_FILLERS_USER = ["i watch something most evenings", "i usually watch with my friends",
                 "we stream a lot at home", "i go to the cinema now and then"]
_FILLERS_AGENT = ["that sounds like fun", "good to know , thanks for sharing",
                  "nice , movie nights are the best"]


@dataclass
class SyntheticConfig:
    n_dialogues: int = 2000
    n_items: int = 200
    n_attributes: int = 20
    n_concepts: int = 10
    turns_range: tuple[int, int] = (4, 6)
    rec_turn_prob: float = 0.85
    item_mention_prob: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for f in ("n_dialogues", "n_items", "n_attributes", "n_concepts"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1, got {getattr(self, f)}")
        for f in ("rec_turn_prob", "item_mention_prob"):
            v = getattr(self, f)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{f} must be in [0, 1], got {v}")
        lo, hi = self.turns_range
        if lo < 4 or hi < lo:
            raise ValueError(f"turns_range must satisfy 4 <= lo <= hi, got {self.turns_range}")
        if self.n_attributes > len(GENRE_WORDS):
            raise ValueError(f"n_attributes is capped at {len(GENRE_WORDS)}")


@dataclass
class SyntheticData:
    raw_dialogues: list[dict]
    item_triples: list[dict]
    word_triples: list[dict]
    catalog: dict[int, str]
    item_attrs: dict[int, tuple[int, ...]]  # item id -> attribute indices


def _attr_pairs(n_attr: int) -> list[tuple[int, int]]:
    if n_attr == 1:
        return [(0, 0)]
    return [(a, b) for a in range(n_attr) for b in range(a + 1, n_attr)]


def _pop_weight(item_id: int) -> float:
    return 0.65 ** (item_id % 4)


def _weighted_choice(rng: np.random.Generator, candidates: list[int]) -> int:
    w = np.array([_pop_weight(c) for c in candidates])
    return int(rng.choice(candidates, p=w / w.sum()))


def generate_synthetic_corpus(config: SyntheticConfig) -> SyntheticData:
    rng = np.random.default_rng(config.seed)
    n_attr = config.n_attributes
    words = GENRE_WORDS[:n_attr]
    pairs = _attr_pairs(n_attr)

    item_attrs: dict[int, tuple[int, ...]] = {}
    for i in range(config.n_items):
        a, b = pairs[i % len(pairs)]
        item_attrs[i] = (a,) if a == b else (a, b)

    catalog = {}
    for i, attrs in item_attrs.items():
        noun = _TITLE_NOUNS[i % len(_TITLE_NOUNS)]
        catalog[i] = f"The {words[attrs[0]].title()} {noun} {i}"

    item_triples = []
    for i, attrs in item_attrs.items():
        for a in attrs:
            item_triples.append({"head": f"@{i}", "relation": "has_attribute",
                                 "tail": f"attr:{words[a]}"})
            item_triples.append({"head": f"attr:{words[a]}", "relation": "attribute_of",
                                 "tail": f"@{i}"})

    word_triples = []
    for a, w in enumerate(words):
        c = a % config.n_concepts
        word_triples.append({"head": w, "relation": "related_to",
                             "tail": f"concept:{c}"})
        word_triples.append({"head": f"concept:{c}", "relation": "related_to",
                             "tail": w})

    pair_items: dict[tuple[int, int], list[int]] = {}
    for i, attrs in item_attrs.items():
        key = (attrs[0], attrs[-1])
        pair_items.setdefault(key, []).append(i)
    usable_pairs = sorted(pair_items)

    attr_items: dict[int, list[int]] = {a: [] for a in range(n_attr)}
    for i, attrs in item_attrs.items():
        for a in attrs:
            attr_items[a].append(i)

    def pick(options: list[str]) -> str:
        return options[int(rng.integers(len(options)))]

    raw_dialogues = []
    for d in range(config.n_dialogues):
        pair = usable_pairs[int(rng.integers(len(usable_pairs)))]
        a, b = pair
        mentioned: list[int] = []
        turns = [{"speaker": "user", "text": pick(_GREETINGS)},
                 {"speaker": "agent", "text": pick(_QUERIES)}]

        if a == b:
            pref = pick(_PREF_SINGLE).format(a=words[a])
        else:
            pref = pick(_PREFS).format(a=words[a], b=words[b])
        if rng.random() < config.item_mention_prob:
            liked = _weighted_choice(rng, attr_items[a])
            pref += pick(_MENTIONS).format(item=f"@{liked}")
            mentioned.append(liked)
        turns.append({"speaker": "user", "text": pref})

        def recommend(templates) -> bool:
            candidates = [i for i in pair_items[pair] if i not in mentioned]
            if not candidates:
                candidates = [i for i in attr_items[a] + attr_items[b]
                              if i not in mentioned]
            if not candidates:
                return False
            gold = _weighted_choice(rng, sorted(set(candidates)))
            mentioned.append(gold)
            turns.append({"speaker": "agent",
                          "text": pick(templates).format(item=f"@{gold}")})
            return True

        # filler exchanges sit between the stated preference and the
        # recommendation section, so long dialogues carry their preference
        # evidence far back in the history
        target_turns = int(rng.integers(config.turns_range[0],
                                        config.turns_range[1] + 1))
        n_pairs = max(0, (target_turns - 4) // 2)
        followup = n_pairs > 0 and rng.random() < 0.5
        for _ in range(n_pairs - int(followup)):
            turns.append({"speaker": "agent", "text": pick(_FILLERS_AGENT)})
            turns.append({"speaker": "user", "text": pick(_FILLERS_USER)})

        # recommendation turns follow an explicit request on the latest user
        # turn, so whether the agent recommends is predictable from history
        first_is_rec = rng.random() < config.rec_turn_prob
        if first_is_rec:
            turns[-1]["text"] += pick(_ASKS)
        if not (first_is_rec and recommend(_RECS)):
            turns.append({"speaker": "agent", "text": pick(_CHITCHAT)})

        if followup:
            second_is_rec = rng.random() < config.rec_turn_prob
            ack = pick(_ACKS)
            if second_is_rec:
                ack = f"{ack} . {pick(_MORE_ASKS)}"
            turns.append({"speaker": "user", "text": ack})
            if not (second_is_rec and recommend(_SECOND_RECS)):
                turns.append({"speaker": "agent", "text": pick(_CHITCHAT)})

        raw_dialogues.append({"id": f"syn-{d:05d}", "turns": turns})

    return SyntheticData(raw_dialogues=raw_dialogues, item_triples=item_triples,
                         word_triples=word_triples, catalog=catalog,
                         item_attrs=item_attrs)


def stated_attributes(data: SyntheticData, raw_dialogue: dict) -> set[int]:
    """Attribute indices named by preference words in user turns."""
    from .vocab import tokenize

    idx = {w: i for i, w in enumerate(GENRE_WORDS)}
    attrs: set[int] = set()
    for t in raw_dialogue["turns"]:
        if t["speaker"] != "user":
            continue
        for tok in tokenize(t["text"]):
            if tok in idx:
                attrs.add(idx[tok])
    return attrs


def learnability_violations(data: SyntheticData) -> list[str]:
    """Dialogues where a gold item shares no attribute with the stated
    preference words or previously mentioned items (should be empty)."""
    from .vocab import tokenize

    violations = []
    for rd in data.raw_dialogues:
        stated = stated_attributes(data, rd)
        seen_attrs = set(stated)
        for t in rd["turns"]:
            mentions = [int(tok[1:]) for tok in tokenize(t["text"])
                        if tok.startswith("@") and tok[1:].isdigit()]
            if t["speaker"] == "agent":
                for gold in mentions:
                    if not seen_attrs.intersection(data.item_attrs[gold]):
                        violations.append(f"{rd['id']}: item {gold}")
            for m in mentions:
                seen_attrs.update(data.item_attrs[m])
    return violations
