"""Experiment configuration: a YAML or JSON file with full defaulting.

Schema (all keys optional; defaults shown):

  seed: 0                  # mandatory for every run, defaulted here
  out_dir: runs/default
  paths:
    corpus: <out_dir>/corpus.jsonl
    item_kg: <out_dir>/item_kg.jsonl
    word_kg: <out_dir>/word_kg.jsonl
    catalog: <out_dir>/catalog.json
  synthetic: {n_dialogues: 2000, n_items: 200, n_attributes: 20,
              n_concepts: 10, rec_turn_prob: 0.85, item_mention_prob: 0.3}
  lm: {n_layers: 1, hidden: 64, n_heads: 2, ffn: 128, max_len: 64, dropout: 0.1}
  classifier: {n_layers: 1, hidden: 32, n_heads: 2, ffn: 64, max_len: 64, dropout: 0.1}
  recommender: {hidden: 64, n_layers: 1}
  train: {batch_size: 32, lr: 0.001, clip_norm: 1.0, teacher_epochs: 30,
          rec_epochs: 30, student_epochs: 15, classifier_epochs: 10}
  distill: {gate: hard, eta: 0.3, gamma: 0.6, tau: 1.0, fixed_value: 0.5,
            use_dialogue_teacher: true, use_rec_teacher: true,
            use_special_tokens: true}
  decode: {strategy: greedy, k: 1, max_new_tokens: 24, seed: 0}
  split: {train_frac: 0.9, val_frac: 0.05}
  eval: {ks: [1, 10, 50]}
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data.synthetic import SyntheticConfig
from .dialogue import DecodeConfig, LMTrainConfig
from .distill import DistillConfig
from .nn import TransformerConfig
from .recommender import RecommenderConfig, RecTrainConfig


@dataclass
class TrainSection:
    batch_size: int = 32
    lr: float = 1e-3
    clip_norm: float = 1.0
    teacher_epochs: int = 30
    rec_epochs: int = 30
    student_epochs: int = 15
    classifier_epochs: int = 10


@dataclass
class SplitSection:
    train_frac: float = 0.9
    val_frac: float = 0.05

    def __post_init__(self):
        if not 0 < self.train_frac < 1 or self.val_frac < 0 or \
                self.train_frac + self.val_frac >= 1:
            raise ValueError(f"bad split {self.train_frac}/{self.val_frac}")


@dataclass
class EvalSection:
    ks: tuple[int, ...] = (1, 10, 50)


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    corpus_path: str | None = None
    item_kg_path: str | None = None
    word_kg_path: str | None = None
    catalog_path: str | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    lm: TransformerConfig = field(default_factory=TransformerConfig)
    classifier: TransformerConfig = field(default_factory=lambda: TransformerConfig(
        n_layers=1, hidden=32, n_heads=2, ffn=64))
    recommender: RecommenderConfig = field(default_factory=RecommenderConfig)
    train: TrainSection = field(default_factory=TrainSection)
    distill: DistillConfig = field(default_factory=DistillConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    split: SplitSection = field(default_factory=SplitSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def resolve_paths(self):
        out = Path(self.out_dir)
        if self.corpus_path is None:
            self.corpus_path = str(out / "corpus.jsonl")
        if self.item_kg_path is None:
            self.item_kg_path = str(out / "item_kg.jsonl")
        if self.word_kg_path is None:
            self.word_kg_path = str(out / "word_kg.jsonl")
        if self.catalog_path is None:
            self.catalog_path = str(out / "catalog.json")
        return self

    def checkpoint_path(self, name: str) -> str:
        return str(Path(self.out_dir) / f"{name}.ckpt")

    # derived training configs ------------------------------------------------
    def lm_train(self, epochs: int | None = None, seed: int | None = None,
                 ) -> LMTrainConfig:
        return LMTrainConfig(epochs=self.train.teacher_epochs if epochs is None else epochs,
                             batch_size=self.train.batch_size, lr=self.train.lr,
                             clip_norm=self.train.clip_norm,
                             seed=self.seed if seed is None else seed)

    def rec_train(self, seed: int | None = None) -> RecTrainConfig:
        return RecTrainConfig(epochs=self.train.rec_epochs,
                              batch_size=self.train.batch_size, lr=self.train.lr,
                              clip_norm=self.train.clip_norm,
                              seed=self.seed if seed is None else seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synthetic"]["turns_range"] = list(d["synthetic"]["turns_range"])
        d["eval"]["ks"] = list(d["eval"]["ks"])
        return d


_SECTIONS = {
    "synthetic": SyntheticConfig,
    "lm": TransformerConfig,
    "classifier": TransformerConfig,
    "recommender": RecommenderConfig,
    "train": TrainSection,
    "distill": DistillConfig,
    "decode": DecodeConfig,
    "split": SplitSection,
    "eval": EvalSection,
}

_PATH_KEYS = {"corpus": "corpus_path", "item_kg": "item_kg_path",
              "word_kg": "word_kg_path", "catalog": "catalog_path"}


def config_from_dict(raw: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    raw = dict(raw or {})
    paths = raw.pop("paths", {}) or {}
    for key, attr in _PATH_KEYS.items():
        if key in paths:
            setattr(cfg, attr, str(paths[key]))
    for key in ("seed", "out_dir"):
        if key in raw:
            setattr(cfg, key, raw.pop(key))
    for name, cls in _SECTIONS.items():
        if name not in raw:
            continue
        section = raw.pop(name) or {}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(section) - known
        if unknown:
            raise ValueError(f"unknown keys in '{name}': {sorted(unknown)}")
        if "turns_range" in section:
            section["turns_range"] = tuple(section["turns_range"])
        if "ks" in section:
            section["ks"] = tuple(section["ks"])
        merged = {**dataclasses.asdict(getattr(cfg, name)), **section}
        if name == "synthetic":
            merged["turns_range"] = tuple(merged["turns_range"])
        if name == "eval":
            merged["ks"] = tuple(merged["ks"])
        setattr(cfg, name, cls(**merged))
    if raw:
        raise ValueError(f"unknown top-level config keys: {sorted(raw)}")
    return cfg


def load_config(path: str | None, seed: int | None = None,
                out_dir: str | None = None) -> ExperimentConfig:
    """Read YAML/JSON config; CLI-level seed/out overrides win."""
    raw = {}
    if path:
        text = Path(path).read_text(encoding="utf-8")
        raw = (json.loads(text) if str(path).endswith(".json")
               else yaml.safe_load(text)) or {}
    cfg = config_from_dict(raw)
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = out_dir
    return cfg.resolve_paths()
