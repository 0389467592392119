"""Encoder-decoder conditional language model over the unified vocabulary.

Serves as the dialogue teacher and, with identical architecture, as the
distilled student: one output head over words, items, and specials, so a
single decode step can emit either chit-chat or a recommendation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import ParamStore, Tape, Tensor, TransformerConfig
from .nn import tensor as T
from .nn.layers import decoder_forward, encoder_forward, init_decoder, init_encoder
from .data.corpus import DialogueCorpus, Turn
from .data.vocab import BOS, EOS, PAD, Vocabulary


@dataclass
class DecodeConfig:
    strategy: str = "greedy"  # "greedy" | "topk"
    k: int = 1
    max_new_tokens: int = 24
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("greedy", "topk"):
            raise ValueError(f"unknown decode strategy {self.strategy!r}")
        if self.k < 1 or self.max_new_tokens < 1:
            raise ValueError("k and max_new_tokens must be >= 1")


@dataclass
class LMTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    clip_norm: float = 1.0
    seed: int = 0


class Seq2SeqLM:
    """Transformer encoder-decoder with a shared token embedding and an
    output head spanning the whole unified vocabulary."""

    def __init__(self, vocab: Vocabulary, config: TransformerConfig, seed: int = 0):
        self.vocab = vocab
        self.config = config
        self.seed = seed
        store = ParamStore(np.random.default_rng(seed))
        store.embedding("tok", len(vocab), config.hidden)
        init_encoder(store, config)
        init_decoder(store, config)
        store.linear("head", config.hidden, len(vocab))
        self.store = store

    def parameters(self) -> dict[str, Tensor]:
        return self.store.parameters()

    def logits(self, enc_ids: np.ndarray, dec_in: np.ndarray,
               train: bool = False, rng=None) -> Tensor:
        """(B, Td, |Y|) next-token logits, teacher-forced."""
        enc, mask = encoder_forward(self.store, self.config, enc_ids, PAD,
                                    train=train, rng=rng)
        h = decoder_forward(self.store, self.config, dec_in, enc, mask,
                            train=train, rng=rng)
        return T.add(T.matmul(h, self.store["head.w"]), self.store["head.b"])

    def next_distribution(self, history_ids: list[int],
                          prefix_ids: list[int]) -> np.ndarray:
        """P(y_t | y_1..t-1, x) over the full vocabulary (eval mode)."""
        enc_ids = np.asarray([history_ids], dtype=np.intp)
        dec_in = np.asarray([[BOS] + list(prefix_ids)], dtype=np.intp)
        with nn.no_grad():
            logits = self.logits(enc_ids, dec_in)
            return T.softmax(logits[:, -1, :], axis=-1).data[0]

    def generate(self, history_ids: list[int], decode: DecodeConfig,
                 forced_prefix_token: int | None = None) -> list[int]:
        """Decode a response; greedy is RNG-free, top-k is seeded. Stops at
        EOS (not included) or after max_new_tokens."""
        rng = np.random.default_rng(decode.seed)
        out: list[int] = []
        if forced_prefix_token is not None:
            out.append(int(forced_prefix_token))
        enc_ids = np.asarray([history_ids], dtype=np.intp)
        with nn.no_grad():
            enc, mask = encoder_forward(self.store, self.config, enc_ids, PAD)
            while len(out) < decode.max_new_tokens + (forced_prefix_token is not None):
                dec_in = np.asarray([[BOS] + out], dtype=np.intp)
                if dec_in.shape[1] > self.config.max_len:
                    break
                h = decoder_forward(self.store, self.config, dec_in, enc, mask)
                logits = T.add(T.matmul(h[:, -1, :], self.store["head.w"]),
                               self.store["head.b"]).data[0]
                if decode.strategy == "greedy":
                    nxt = int(logits.argmax())
                else:
                    top = np.argpartition(-logits, min(decode.k, len(logits)) - 1)
                    top = top[:decode.k]
                    lt = logits[top] - logits[top].max()
                    p = np.exp(lt)
                    p /= p.sum()
                    nxt = int(rng.choice(top, p=p))
                if nxt == EOS:
                    break
                out.append(nxt)
        return out


# ---------------------------------------------------------------------------
# sample construction / batching
# ---------------------------------------------------------------------------

@dataclass
class LMSample:
    dialogue_id: str
    turn_index: int
    enc: list[int]
    target: list[int]  # response tokens plus EOS
    history: list[Turn]


def history_ids(turns: list[Turn], max_len: int) -> list[int]:
    """Flatten history with EOS separators, truncate from the left."""
    seq = [BOS]
    for t in turns:
        seq.extend(t.token_ids)
        seq.append(EOS)
    if len(seq) > max_len:
        seq = seq[-max_len:]
    return seq


def build_lm_samples(corpus: DialogueCorpus, max_len: int) -> list[LMSample]:
    samples = []
    for dlg in corpus.dialogues:
        for ti, turn in enumerate(dlg.turns):
            if turn.speaker != "agent" or not turn.token_ids:
                continue
            target = turn.token_ids[:max_len - 1] + [EOS]
            samples.append(LMSample(dialogue_id=dlg.id, turn_index=ti,
                                    enc=history_ids(dlg.turns[:ti], max_len),
                                    target=target, history=dlg.turns[:ti]))
    return samples


def collate(samples: list[LMSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                              np.ndarray, np.ndarray]:
    """Pad a batch: (enc_ids, dec_in, target, mask, lengths)."""
    b = len(samples)
    te = max(len(s.enc) for s in samples)
    td = max(len(s.target) for s in samples)
    enc = np.full((b, te), PAD, dtype=np.intp)
    dec_in = np.full((b, td), PAD, dtype=np.intp)
    target = np.full((b, td), PAD, dtype=np.intp)
    for i, s in enumerate(samples):
        enc[i, :len(s.enc)] = s.enc
        shifted = [BOS] + s.target[:-1]
        dec_in[i, :len(shifted)] = shifted
        target[i, :len(s.target)] = s.target
    mask = (target != PAD).astype(np.float64)
    lengths = mask.sum(axis=1)
    return enc, dec_in, target, mask, lengths


def sequence_nll(lp: Tensor, target: np.ndarray, mask: np.ndarray,
                 lengths: np.ndarray) -> Tensor:
    """Mean over responses of (1/T) sum_t -log p(gold_t); pads excluded."""
    nll = T.neg(T.take_along_last(lp, target))
    per_resp = T.sum_(T.mul(nll, Tensor(mask)), axis=1)
    return T.mean_(T.mul(per_resp, Tensor(1.0 / lengths)))


def iter_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_dialogue_model(corpus: DialogueCorpus, model_cfg: TransformerConfig,
                         train_cfg: LMTrainConfig) -> Seq2SeqLM:
    """Maximum-likelihood training of the conditional LM (per-response mean
    token cross-entropy)."""
    samples = build_lm_samples(corpus, model_cfg.max_len)
    if not samples:
        raise ValueError("corpus contains no agent turns to train on")
    model = Seq2SeqLM(corpus.vocab, model_cfg, seed=train_cfg.seed)
    params = model.parameters()
    opt = nn.Adam(params, lr=train_cfg.lr)
    rng = np.random.default_rng(train_cfg.seed)
    drop_rng = np.random.default_rng(train_cfg.seed + 1)
    for _ in range(train_cfg.epochs):
        for idx in iter_batches(len(samples), train_cfg.batch_size, rng):
            batch = [samples[i] for i in idx]
            enc, dec_in, target, mask, lengths = collate(batch)
            tape = Tape()
            with nn.record(tape):
                logits = model.logits(enc, dec_in, train=True, rng=drop_rng)
                lp = T.log_softmax(logits, axis=-1)
                loss = sequence_nll(lp, target, mask, lengths)
            opt.zero_grad()
            nn.backward(tape, loss, params=params.values())
            nn.clip_gradients(params, train_cfg.clip_norm)
            opt.step()
    return model


def perplexity(model: Seq2SeqLM, corpus: DialogueCorpus,
               batch_size: int = 64) -> float:
    """exp of the corpus-level mean per-token NLL over gold agent responses,
    teacher-forced, pad positions excluded."""
    samples = build_lm_samples(corpus, model.config.max_len)
    if not samples:
        raise ValueError("corpus contains no agent responses")
    total_nll = 0.0
    total_tokens = 0.0
    with nn.no_grad():
        for start in range(0, len(samples), batch_size):
            batch = samples[start:start + batch_size]
            enc, dec_in, target, mask, lengths = collate(batch)
            logits = model.logits(enc, dec_in)
            lp = T.log_softmax(logits, axis=-1)
            nll = -np.take_along_axis(lp.data, target[..., None], axis=-1)[..., 0]
            total_nll += float((nll * mask).sum())
            total_tokens += float(mask.sum())
    return float(np.exp(total_nll / total_tokens))
