from .vocab import (
    BOS,
    EOS,
    GEN,
    PAD,
    REC,
    SPECIAL_TOKENS,
    UNK,
    Vocabulary,
    build_vocabulary,
    is_item_token,
    tokenize,
)
from .corpus import (
    Dialogue,
    DialogueCorpus,
    Turn,
    inject_special_tokens,
    inject_special_tokens_corpus,
    load_dialogues_jsonl,
    mentioned_entities,
    save_dialogues_jsonl,
    turn_has_item,
)
from .kg import (
    KnowledgeGraph,
    build_item_kg,
    kg_from_triples,
    load_catalog,
    load_kg_jsonl,
    save_catalog,
    save_kg_jsonl,
)
from .synthetic import (
    GENRE_WORDS,
    SyntheticConfig,
    SyntheticData,
    generate_synthetic_corpus,
    learnability_violations,
)

__all__ = [
    "BOS", "EOS", "GEN", "PAD", "REC", "SPECIAL_TOKENS", "UNK",
    "Dialogue", "DialogueCorpus", "GENRE_WORDS", "KnowledgeGraph",
    "SyntheticConfig", "SyntheticData", "Turn", "Vocabulary",
    "build_item_kg", "build_vocabulary", "generate_synthetic_corpus",
    "inject_special_tokens", "inject_special_tokens_corpus", "is_item_token",
    "kg_from_triples", "learnability_violations", "load_catalog",
    "load_dialogues_jsonl", "load_kg_jsonl", "mentioned_entities",
    "save_catalog", "save_dialogues_jsonl", "save_kg_jsonl", "tokenize",
    "turn_has_item",
]
