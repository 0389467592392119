"""Portable model checkpoints.

Single-file layout: 4-byte magic, little-endian u32 manifest length, a
canonical-JSON manifest (format version, model kind, config echo, named
tensor shapes, training seed, vocabulary fingerprint, payload checksum),
then the concatenated row-major little-endian float32 tensor payloads in
manifest order. Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .nn import Tensor, TransformerConfig
from .data.vocab import Vocabulary
from .dialogue import Seq2SeqLM
from .distill import DistillConfig, TurnClassifier
from .recommender import RecommenderConfig, RecommenderModel

MAGIC = b"CKD1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    manifest: dict
    tensors: dict[str, np.ndarray]

    @property
    def kind(self) -> str:
        return self.manifest["model_kind"]

    @property
    def config(self) -> dict:
        return self.manifest["config"]


def _canonical_manifest_bytes(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(path, kind: str, params: dict[str, Tensor], config: dict,
                    seed: int, vocab_fingerprint: str):
    names = list(params)
    payload = b"".join(
        np.ascontiguousarray(params[n].data, dtype="<f4").tobytes() for n in names)
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_kind": kind,
        "config": config,
        "seed": seed,
        "vocab_fingerprint": vocab_fingerprint,
        "tensors": [{"name": n, "shape": list(params[n].data.shape),
                     "dtype": "float32"} for n in names],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = _canonical_manifest_bytes(manifest)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(payload)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (mlen,) = struct.unpack("<I", f.read(4))
        manifest = json.loads(f.read(mlen).decode())
        payload = f.read()
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version "
                         f"{manifest.get('format_version')}")
    expected = sum(4 * int(np.prod(t["shape"])) for t in manifest["tensors"])
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, "
                         f"manifest expects {expected}")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest["payload_sha256"]:
        raise ValueError(f"{path}: payload checksum mismatch")
    tensors = {}
    offset = 0
    for t in manifest["tensors"]:
        count = int(np.prod(t["shape"]))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors[t["name"]] = arr.reshape(t["shape"]).astype(np.float32)
        offset += 4 * count
    return Checkpoint(manifest=manifest, tensors=tensors)


def _restore_params(params: dict[str, Tensor], tensors: dict[str, np.ndarray], path):
    missing = set(params) - set(tensors)
    extra = set(tensors) - set(params)
    if missing or extra:
        raise ValueError(f"{path}: tensor names do not match the rebuilt model "
                         f"(missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]})")
    for name, p in params.items():
        if tuple(tensors[name].shape) != p.data.shape:
            raise ValueError(f"{path}: shape mismatch for {name}")
        p.data = tensors[name].astype(p.data.dtype)


# ---------------------------------------------------------------------------
# model-level helpers
# ---------------------------------------------------------------------------

def save_lm(path, model: Seq2SeqLM, kind: str = "dialogue",
            distill_config: DistillConfig | None = None):
    config = {"model": asdict(model.config)}
    if distill_config is not None:
        config["distill"] = asdict(distill_config)
    save_checkpoint(path, kind, model.parameters(), config, model.seed,
                    model.vocab.fingerprint())


def load_lm(path, vocab: Vocabulary, expected_kinds=("dialogue", "student"),
            ) -> tuple[Seq2SeqLM, Checkpoint]:
    ckpt = load_checkpoint(path)
    if ckpt.kind not in expected_kinds:
        raise ValueError(f"{path}: expected one of {expected_kinds}, got {ckpt.kind}")
    _check_vocab(ckpt, vocab, path)
    model = Seq2SeqLM(vocab, TransformerConfig(**ckpt.config["model"]),
                      seed=ckpt.manifest["seed"])
    _restore_params(model.parameters(), ckpt.tensors, path)
    return model, ckpt


def save_recommender(path, model: RecommenderModel):
    save_checkpoint(path, "recommender", model.parameters(),
                    {"model": asdict(model.config)}, model.seed,
                    model.vocab.fingerprint())


def load_recommender(path, vocab: Vocabulary, item_kg, word_kg,
                     ) -> RecommenderModel:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "recommender":
        raise ValueError(f"{path}: expected a recommender checkpoint, got {ckpt.kind}")
    _check_vocab(ckpt, vocab, path)
    model = RecommenderModel(vocab, item_kg, word_kg,
                             RecommenderConfig(**ckpt.config["model"]),
                             seed=ckpt.manifest["seed"])
    _restore_params(model.parameters(), ckpt.tensors, path)
    return model


def save_classifier(path, clf: TurnClassifier):
    save_checkpoint(path, "classifier", clf.parameters(),
                    {"model": asdict(clf.config)}, clf.seed,
                    clf.vocab.fingerprint())


def load_classifier(path, vocab: Vocabulary) -> TurnClassifier:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "classifier":
        raise ValueError(f"{path}: expected a classifier checkpoint, got {ckpt.kind}")
    _check_vocab(ckpt, vocab, path)
    clf = TurnClassifier(vocab, TransformerConfig(**ckpt.config["model"]),
                         seed=ckpt.manifest["seed"])
    _restore_params(clf.parameters(), ckpt.tensors, path)
    return clf


def _check_vocab(ckpt: Checkpoint, vocab: Vocabulary, path):
    if ckpt.manifest["vocab_fingerprint"] != vocab.fingerprint():
        raise ValueError(
            f"{path}: checkpoint was trained with a different vocabulary "
            f"(fingerprint {ckpt.manifest['vocab_fingerprint'][:12]}... vs "
            f"{vocab.fingerprint()[:12]}...)")
