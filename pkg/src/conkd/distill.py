"""Gated two-teacher distillation into a single student model.

The gate signal is the dialogue teacher's probability mass on item
tokens at each target position, computed on the fly during the forward
pass: the hard gate thresholds it, the soft gate uses it directly as a
mixing weight between the dialogue-teacher and recommendation-teacher
distillation losses. A small turn classifier predicts the [REC]/[GEN]
response prefix at inference time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import Tape, Tensor, TransformerConfig
from .nn import tensor as T
from .nn.layers import encoder_forward, init_encoder
from .data.corpus import DialogueCorpus
from .data.vocab import GEN, PAD, REC, Vocabulary
from .dialogue import (
    LMTrainConfig,
    Seq2SeqLM,
    build_lm_samples,
    collate,
    history_ids,
    iter_batches,
    sequence_nll,
)
from .recommender import RecEvalSession


@dataclass
class DistillConfig:
    gate: str = "hard"  # "hard" | "soft" | "fixed"
    eta: float = 0.3
    gamma: float = 0.6
    tau: float = 1.0
    fixed_value: float = 0.5
    use_dialogue_teacher: bool = True
    use_rec_teacher: bool = True
    use_special_tokens: bool = True

    def __post_init__(self):
        if self.gate not in ("hard", "soft", "fixed"):
            raise ValueError(f"unknown gate mode {self.gate!r}")
        for name in ("eta", "gamma", "fixed_value"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------

def item_mass(dist: np.ndarray, item_range: tuple[int, int]) -> np.ndarray:
    """Probability mass on the contiguous item-token range; works on a
    single distribution or batched along leading axes."""
    lo, hi = item_range
    return np.asarray(dist)[..., lo:hi].sum(axis=-1)


def soft_gate(dist: np.ndarray, item_range: tuple[int, int]) -> np.ndarray:
    return item_mass(dist, item_range)


def hard_gate(dist: np.ndarray, item_range: tuple[int, int], eta: float) -> np.ndarray:
    """1 where the item mass reaches the threshold (the boundary fires)."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    return (item_mass(dist, item_range) >= eta).astype(np.float64)


def lift_rec_distribution(item_probs: np.ndarray, vocab_size: int,
                          item_range: tuple[int, int]) -> np.ndarray:
    """Place an item-space distribution at the item-token ids of the full
    vocabulary; zero elsewhere."""
    lo, hi = item_range
    p = np.asarray(item_probs)
    if p.shape[-1] != hi - lo:
        raise ValueError(f"got {p.shape[-1]} item probabilities for a range of {hi - lo}")
    out = np.zeros(p.shape[:-1] + (vocab_size,), dtype=p.dtype)
    out[..., lo:hi] = p
    return out


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _temperature_scale(dist: np.ndarray, tau: float) -> np.ndarray:
    if tau == 1.0:
        return dist
    logits = np.log(np.maximum(dist, 1e-30)) / tau
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _student_lp_at_tau(logits: Tensor, tau: float) -> Tensor:
    if tau == 1.0:
        return T.log_softmax(logits, axis=-1)
    return T.log_softmax(logits * (1.0 / tau), axis=-1)


def dial_kd_loss(student_log_probs: Tensor, teacher_dist: np.ndarray,
                 tau: float = 1.0) -> Tensor:
    """Per-response mean over time of CE(teacher, student), both at tau."""
    q = _temperature_scale(np.asarray(teacher_dist), tau)
    lp = student_log_probs if tau == 1.0 else \
        T.log_softmax(student_log_probs * (1.0 / tau), axis=-1)
    if q.shape != lp.data.shape:
        raise ValueError(f"teacher {q.shape} vs student {lp.data.shape}")
    per_t = T.neg(T.sum_(T.mul(Tensor(q), lp), axis=-1))
    return T.mean_(per_t) if per_t.data.ndim else per_t


def rec_kd_loss(student_log_probs: Tensor, lifted_dist: np.ndarray,
                tau: float = 1.0) -> Tensor:
    """Same as dial_kd_loss with the per-turn-constant lifted distribution
    used at every time step."""
    q = _temperature_scale(np.asarray(lifted_dist), tau)
    lp = student_log_probs if tau == 1.0 else \
        T.log_softmax(student_log_probs * (1.0 / tau), axis=-1)
    if q.ndim < lp.data.ndim:
        q = np.broadcast_to(q, lp.data.shape)
    elif q.shape != lp.data.shape:
        raise ValueError(f"teacher {q.shape} vs student {lp.data.shape}")
    per_t = T.neg(T.sum_(T.mul(Tensor(q.copy()), lp), axis=-1))
    return T.mean_(per_t) if per_t.data.ndim else per_t


def combined_step_loss(nll_t, dial_kd_t, rec_kd_t, lam: float, gamma: float):
    """(1-lam) * [(1-gamma) nll + gamma dial_kd] + lam * [(1-gamma) nll + gamma rec_kd]."""
    dial_branch = (1.0 - gamma) * nll_t + gamma * dial_kd_t
    rec_branch = (1.0 - gamma) * nll_t + gamma * rec_kd_t
    return (1.0 - lam) * dial_branch + lam * rec_branch


# ---------------------------------------------------------------------------
# gate trace
# ---------------------------------------------------------------------------

@dataclass
class GateTraceEntry:
    dialogue_id: str
    turn: int
    t: int
    item_mass: float
    lam: float
    gold_is_item: bool


@dataclass
class GateTrace:
    entries: list[GateTraceEntry] = field(default_factory=list)

    def summary(self) -> dict:
        rec = [e.lam for e in self.entries if e.gold_is_item]
        other = [e.lam for e in self.entries if not e.gold_is_item]
        return {
            "lambda_rec_steps": float(np.mean(rec)) if rec else None,
            "lambda_other_steps": float(np.mean(other)) if other else None,
            "n_rec_steps": len(rec),
            "n_other_steps": len(other),
        }

    def to_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for e in self.entries:
                f.write(json.dumps({"dialogue_id": e.dialogue_id, "turn": e.turn,
                                    "t": e.t, "item_mass": e.item_mass,
                                    "lambda": e.lam}) + "\n")


# ---------------------------------------------------------------------------
# student training
# ---------------------------------------------------------------------------

def _gate_values(cfg: DistillConfig, mass: np.ndarray) -> np.ndarray:
    if cfg.gate == "hard":
        return (mass >= cfg.eta).astype(np.float64)
    if cfg.gate == "soft":
        return mass
    return np.full_like(mass, cfg.fixed_value)


def conkd_batch_loss(student: Seq2SeqLM, enc: np.ndarray, dec_in: np.ndarray,
                     target: np.ndarray, mask: np.ndarray, lengths: np.ndarray,
                     gamma: float, tau: float, q_dial: np.ndarray | None = None,
                     q_rec: np.ndarray | None = None, lam: np.ndarray | None = None,
                     train: bool = False, rng=None) -> Tensor:
    """One batch of the gated distillation objective.

    Per position: (1-gamma) * nll + gamma * [(1-lam) * CE(dialogue teacher)
    + lam * CE(lifted rec teacher)], averaged 1/T within each response and
    over the batch. Teacher distributions arrive temperature-scaled;
    with a single teacher the gate is ignored; with gamma = 0 this is
    exactly the plain NLL objective.
    """
    logits = student.logits(enc, dec_in, train=train, rng=rng)
    lp1 = T.log_softmax(logits, axis=-1)
    if gamma == 0.0 or (q_dial is None and q_rec is None):
        return sequence_nll(lp1, target, mask, lengths)
    if q_dial is not None and q_rec is not None:
        q2 = (1.0 - lam)[..., None] * q_dial + lam[..., None] * q_rec
    elif q_dial is not None:
        q2 = q_dial
    else:
        q2 = np.broadcast_to(q_rec, lp1.data.shape).copy()
    lp_tau = lp1 if tau == 1.0 else _student_lp_at_tau(logits, tau)
    nll_t = T.neg(T.take_along_last(lp1, target))
    kd_t = T.neg(T.sum_(T.mul(Tensor(q2), lp_tau), axis=-1))
    step = T.add(nll_t * (1.0 - gamma), kd_t * gamma)
    per_resp = T.sum_(T.mul(step, Tensor(mask)), axis=1)
    return T.mean_(T.mul(per_resp, Tensor(1.0 / lengths)))


def train_student(corpus: DialogueCorpus, dialogue_teacher: Seq2SeqLM | None,
                  rec_teacher: RecEvalSession | None, model_cfg: TransformerConfig,
                  train_cfg: LMTrainConfig, distill_cfg: DistillConfig,
                  ) -> tuple[Seq2SeqLM, GateTrace]:
    """Distill the teachers into a fresh student.

    Per batch: the dialogue teacher is teacher-forced to produce its full
    next-token distribution at every target position (the gate signal and
    the dialogue KD target); the recommendation teacher scores the turn's
    history once and its item distribution, lifted to the unified
    vocabulary, is the recommendation KD target at every position. The
    per-position losses are mixed by the gate and the ground-truth balance.
    """
    use_dial = distill_cfg.use_dialogue_teacher and distill_cfg.gamma > 0
    use_rec = distill_cfg.use_rec_teacher and distill_cfg.gamma > 0
    if use_dial and dialogue_teacher is None:
        raise ValueError("dialogue teacher required but not provided")
    if use_rec and rec_teacher is None:
        raise ValueError("recommendation teacher required but not provided")
    gate_needed = use_dial and use_rec
    if gate_needed and distill_cfg.gate != "fixed" and dialogue_teacher is None:
        raise ValueError("gate computation requires the dialogue teacher")

    samples = build_lm_samples(corpus, model_cfg.max_len)
    if not samples:
        raise ValueError("corpus contains no agent turns to train on")
    vocab = corpus.vocab
    item_rng = vocab.item_range
    vsize = len(vocab)
    tau = distill_cfg.tau
    gamma = distill_cfg.gamma

    rec_lifted: dict[int, np.ndarray] = {}
    if use_rec:
        for si, s in enumerate(samples):
            probs = rec_teacher.item_probs(s.history)
            if tau != 1.0:
                probs = _temperature_scale(probs, tau)
            rec_lifted[si] = lift_rec_distribution(probs, vsize, item_rng)

    student = Seq2SeqLM(vocab, model_cfg, seed=train_cfg.seed)
    params = student.parameters()
    opt = nn.Adam(params, lr=train_cfg.lr)
    rng = np.random.default_rng(train_cfg.seed)
    drop_rng = np.random.default_rng(train_cfg.seed + 1)
    trace = GateTrace()

    for epoch in range(train_cfg.epochs):
        last_epoch = epoch == train_cfg.epochs - 1
        for idx in iter_batches(len(samples), train_cfg.batch_size, rng):
            batch = [samples[i] for i in idx]
            enc, dec_in, target, mask, lengths = collate(batch)

            p_phi = None
            lam = None
            if use_dial or (gate_needed and distill_cfg.gate != "fixed"):
                with nn.no_grad():
                    t_logits = dialogue_teacher.logits(enc, dec_in).data
                shift = t_logits - t_logits.max(axis=-1, keepdims=True)
                e = np.exp(shift)
                p_phi = e / e.sum(axis=-1, keepdims=True)
            if gate_needed:
                mass = item_mass(p_phi, item_rng) if distill_cfg.gate != "fixed" \
                    else np.zeros(target.shape)
                lam = _gate_values(distill_cfg, mass)

            q_dial = None
            q_rec = None
            if gamma > 0.0 and (use_dial or use_rec):
                q_dial = _temperature_scale(p_phi, tau) if use_dial else None
                if use_rec:
                    q_rec = np.stack([rec_lifted[i] for i in idx])[:, None, :]
            tape = Tape()
            with nn.record(tape):
                loss = conkd_batch_loss(student, enc, dec_in, target, mask,
                                        lengths, gamma, tau, q_dial=q_dial,
                                        q_rec=q_rec, lam=lam, train=True,
                                        rng=drop_rng)
            opt.zero_grad()
            nn.backward(tape, loss, params=params.values())
            nn.clip_gradients(params, train_cfg.clip_norm)
            opt.step()

            if last_epoch and gate_needed:
                mass_np = item_mass(p_phi, item_rng)
                for bi, si in enumerate(idx):
                    s = samples[si]
                    for t in range(len(s.target)):
                        trace.entries.append(GateTraceEntry(
                            dialogue_id=s.dialogue_id, turn=s.turn_index, t=t,
                            item_mass=float(mass_np[bi, t]), lam=float(lam[bi, t]),
                            gold_is_item=vocab.is_item_id(s.target[t])))
    return student, trace


# ---------------------------------------------------------------------------
# turn classifier
# ---------------------------------------------------------------------------

class TurnClassifier:
    """Transformer encoder with a binary head: does the next agent turn
    recommend an item ([REC]) or not ([GEN])?"""

    def __init__(self, vocab: Vocabulary, config: TransformerConfig, seed: int = 0):
        self.vocab = vocab
        self.config = config
        self.seed = seed
        store = nn.ParamStore(np.random.default_rng(seed))
        store.embedding("tok", len(vocab), config.hidden)
        init_encoder(store, config)
        store.linear("cls", config.hidden, 2)
        self.store = store

    def parameters(self):
        return self.store.parameters()

    def logits(self, enc_ids: np.ndarray, train: bool = False, rng=None) -> Tensor:
        states, _ = encoder_forward(self.store, self.config, enc_ids, PAD,
                                    train=train, rng=rng)
        keep = (enc_ids != PAD).astype(states.data.dtype)
        denom = np.maximum(keep.sum(axis=1, keepdims=True), 1.0)
        pooled = T.mul(T.sum_(T.mul(states, Tensor(keep[..., None])), axis=1),
                       Tensor(1.0 / denom))
        return T.add(T.matmul(pooled, self.store["cls.w"]), self.store["cls.b"])


def build_classifier_samples(corpus: DialogueCorpus, max_len: int,
                             ) -> list[tuple[list[int], int]]:
    """(history ids, label) per agent turn; label 1 when the turn carries
    an item mention."""
    out = []
    for dlg in corpus.dialogues:
        for ti, turn in enumerate(dlg.turns):
            if turn.speaker != "agent" or not turn.token_ids:
                continue
            label = 1 if (turn.token_ids[0] == REC or turn.item_mentions(corpus.vocab)) \
                else 0
            out.append((history_ids(dlg.turns[:ti], max_len), label))
    return out


def train_turn_classifier(corpus: DialogueCorpus, model_cfg: TransformerConfig,
                          train_cfg: LMTrainConfig) -> TurnClassifier:
    samples = build_classifier_samples(corpus, model_cfg.max_len)
    labels = {lab for _, lab in samples}
    if len(labels) < 2:
        raise ValueError("turn classifier needs both [REC] and [GEN] examples")
    clf = TurnClassifier(corpus.vocab, model_cfg, seed=train_cfg.seed)
    params = clf.parameters()
    opt = nn.Adam(params, lr=train_cfg.lr)
    rng = np.random.default_rng(train_cfg.seed)
    drop_rng = np.random.default_rng(train_cfg.seed + 1)
    for _ in range(train_cfg.epochs):
        for idx in iter_batches(len(samples), train_cfg.batch_size, rng):
            batch = [samples[i] for i in idx]
            te = max(len(h) for h, _ in batch)
            enc = np.full((len(batch), te), PAD, dtype=np.intp)
            for i, (h, _) in enumerate(batch):
                enc[i, :len(h)] = h
            gold = np.array([lab for _, lab in batch])
            tape = Tape()
            with nn.record(tape):
                lp = T.log_softmax(clf.logits(enc, train=True, rng=drop_rng), axis=-1)
                loss = T.neg(T.mean_(T.take_along_last(lp, gold)))
            opt.zero_grad()
            nn.backward(tape, loss, params=params.values())
            nn.clip_gradients(params, train_cfg.clip_norm)
            opt.step()
    return clf


def classify_turn(clf: TurnClassifier, history: list[int]) -> int:
    """Returns the REC or GEN token id for the upcoming agent turn."""
    enc = np.asarray([history], dtype=np.intp)
    with nn.no_grad():
        logits = clf.logits(enc).data[0]
    return REC if int(logits.argmax()) == 1 else GEN
