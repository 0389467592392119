"""Quantitative evaluation.

Module-level recall over recommender rankings, recall/precision/F1 over
items emitted inside generated responses, recommendation ratio, corpus
diversity (corrected rate-based DIST-n plus the legacy per-response
variant that can exceed 1), recommendation/dialogue mismatch reports,
gate diagnostics, 2-hop relaxed relevance, the two-step item-refilling
baseline, and per-token latency benchmarking.
"""

from __future__ import annotations

import json
import time
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import tensor as T
from .data.corpus import DialogueCorpus
from .data.kg import KnowledgeGraph
from .data.vocab import PAD, Vocabulary
from .dialogue import DecodeConfig, Seq2SeqLM, build_lm_samples, collate
from .distill import TurnClassifier, classify_turn, item_mass
from .nn.layers import decoder_forward, encoder_forward
from .data.vocab import BOS, EOS

STANDARD_KS = (1, 10, 50)


# ---------------------------------------------------------------------------
# generation records
# ---------------------------------------------------------------------------

@dataclass
class ItemSlot:
    position: int
    emitted: int  # catalog id
    candidates: list[tuple[int, float]]  # (catalog id, prob), desc prob / asc id


@dataclass
class GenerationRecord:
    dialogue_id: str
    turn_index: int
    generated_ids: list[int]
    slots: list[ItemSlot]
    gold_items: list[int]
    history_items: list[int] = field(default_factory=list)
    step_item_mass: list[float] = field(default_factory=list)  # per generated step

    def to_json(self) -> dict:
        return {"dialogue_id": self.dialogue_id, "turn": self.turn_index,
                "generated": self.generated_ids,
                "slots": [{"position": s.position, "emitted": s.emitted,
                           "candidates": [[c, float(p)] for c, p in s.candidates]}
                          for s in self.slots],
                "gold_items": self.gold_items,
                "history_items": self.history_items}


def _ranked_items(probs_y: np.ndarray, vocab: Vocabulary, k: int,
                  ) -> list[tuple[int, float]]:
    lo, hi = vocab.item_range
    item_p = probs_y[lo:hi]
    order = np.lexsort((np.arange(len(item_p)), -item_p))[:k]
    return [(vocab.item_ids[i], float(item_p[i])) for i in order]


def generate_record(model: Seq2SeqLM, vocab: Vocabulary, dialogue_id: str,
                    turn_index: int, hist_ids: list[int], gold_items: list[int],
                    decode: DecodeConfig, k_max: int = 50,
                    forced_prefix: int | None = None,
                    history_items: list[int] | None = None) -> GenerationRecord:
    """Decode one response, capturing ranked item candidates at every step
    where an item token was emitted."""
    rng = np.random.default_rng(decode.seed)
    out: list[int] = [] if forced_prefix is None else [int(forced_prefix)]
    slots: list[ItemSlot] = []
    masses: list[float] = [0.0] * len(out)
    lo, hi = vocab.item_range
    enc_ids = np.asarray([hist_ids], dtype=np.intp)
    budget = decode.max_new_tokens + (forced_prefix is not None)
    with nn.no_grad():
        enc, mask = encoder_forward(model.store, model.config, enc_ids, PAD)
        while len(out) < budget:
            dec_in = np.asarray([[BOS] + out], dtype=np.intp)
            if dec_in.shape[1] > model.config.max_len:
                break
            h = decoder_forward(model.store, model.config, dec_in, enc, mask)
            logits = T.add(T.matmul(h[:, -1, :], model.store["head.w"]),
                           model.store["head.b"]).data[0]
            if decode.strategy == "greedy":
                nxt = int(logits.argmax())
            else:
                top = np.argpartition(-logits, min(decode.k, len(logits)) - 1)[:decode.k]
                lt = logits[top] - logits[top].max()
                p = np.exp(lt)
                nxt = int(rng.choice(top, p=p / p.sum()))
            if nxt == EOS:
                break
            shifted = np.exp(logits - logits.max())
            probs = shifted / shifted.sum()
            masses.append(float(probs[lo:hi].sum()))
            if vocab.is_item_id(nxt):
                slots.append(ItemSlot(position=len(out),
                                      emitted=vocab.catalog_id(nxt),
                                      candidates=_ranked_items(probs, vocab, k_max)))
            out.append(nxt)
    return GenerationRecord(dialogue_id=dialogue_id, turn_index=turn_index,
                            generated_ids=out, slots=slots, gold_items=gold_items,
                            history_items=history_items or [],
                            step_item_mass=masses)


def generate_records(model: Seq2SeqLM, corpus: DialogueCorpus, decode: DecodeConfig,
                     classifier: TurnClassifier | None = None,
                     k_max: int = 50) -> list[GenerationRecord]:
    """One record per agent turn, conditioning on the gold history."""
    vocab = corpus.vocab
    records = []
    for s in build_lm_samples(corpus, model.config.max_len):
        forced = classify_turn(classifier, s.enc) if classifier is not None else None
        hist_items = []
        for turn in s.history:
            for cid in turn.item_mentions(vocab):
                if cid not in hist_items:
                    hist_items.append(cid)
        golds = [vocab.catalog_id(t) for t in s.target if vocab.is_item_id(t)]
        records.append(generate_record(model, vocab, s.dialogue_id, s.turn_index,
                                       s.enc, golds, decode, k_max=k_max,
                                       forced_prefix=forced,
                                       history_items=hist_items))
    return records


def save_records_jsonl(records: list[GenerationRecord], path):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r.to_json()) + "\n")


# ---------------------------------------------------------------------------
# recommendation metrics
# ---------------------------------------------------------------------------

def recall_at_k(rankings: list[tuple[list[int], list[int]]], k: int) -> float:
    """rankings: (ranked catalog ids, gold catalog ids) per recommendation
    turn; fraction of gold mentions found in that turn's top-k."""
    if k not in STANDARD_KS:
        warnings.warn(f"nonstandard cutoff k={k}", stacklevel=2)
    hits = total = 0
    for ranked, golds in rankings:
        top = set(ranked[:k])
        for g in golds:
            total += 1
            hits += int(g in top)
    return hits / total if total else 0.0


def response_metrics(records: list[GenerationRecord], k: int,
                     correct_fn=None) -> dict:
    """Order-aligned slot/gold pairing.

    The j-th generated item slot is paired with the j-th gold mention;
    a pair is correct when the gold item appears in the slot's top-k
    candidates. Surplus slots only hurt precision, surplus golds only
    hurt recall. Recall's denominator is gold mentions, precision's is
    generated slots (both conventions reported).
    """
    correct = 0
    total_gold = 0
    total_slots = 0
    turns_with_slot = 0
    total_turns = len(records)
    for r in records:
        total_gold += len(r.gold_items)
        total_slots += len(r.slots)
        if r.slots:
            turns_with_slot += 1
        for slot, gold in zip(r.slots, r.gold_items):
            cand = [c for c, _ in slot.candidates[:k]]
            if correct_fn is None:
                correct += int(gold in cand)
            else:
                correct += int(correct_fn(r, slot, gold, cand))
    rer = correct / total_gold if total_gold else 0.0
    prr = correct / total_slots if total_slots else 0.0
    f1 = 2 * rer * prr / (rer + prr) if (rer + prr) > 0 else 0.0
    ratio = turns_with_slot / total_turns if total_turns else 0.0
    return {"rer": rer, "prr": prr, "f1": f1, "rec_ratio": ratio}


def relevant_items_2hop(item_kg: KnowledgeGraph, mentioned_nodes: list[int],
                        n_items: int) -> set[int]:
    """Item nodes reachable from any mentioned item within 2 undirected
    edges (item -> attribute -> item), excluding the mentions themselves."""
    adj = item_kg.undirected_neighbors()
    mentioned = set(mentioned_nodes)
    dist = {m: 0 for m in mentioned}
    frontier = deque(mentioned)
    while frontier:
        node = frontier.popleft()
        if dist[node] == 2:
            continue
        for nb in adj.get(node, ()):
            if nb not in dist:
                dist[nb] = dist[node] + 1
                frontier.append(nb)
    return {n for n in dist if n < n_items and n not in mentioned}


def relaxed_response_metrics(records: list[GenerationRecord],
                             item_kg: KnowledgeGraph, vocab: Vocabulary,
                             k: int) -> dict:
    """Correctness relaxed to the 2-hop neighborhood of previously
    mentioned items, plus the gold item itself."""
    node_of = {cid: i for i, cid in enumerate(vocab.item_ids)}
    cache: dict[tuple, set[int]] = {}

    def correct_fn(record, slot, gold, cand):
        key = tuple(record.history_items)
        if key not in cache:
            nodes = [node_of[c] for c in record.history_items if c in node_of]
            reach = relevant_items_2hop(item_kg, nodes, vocab.n_items)
            cache[key] = {vocab.item_ids[n] for n in reach}
        ok = cache[key] | {gold}
        return any(c in ok for c in cand)

    return response_metrics(records, k, correct_fn=correct_fn)


def mismatch_report(r_at_k: dict[int, float], rer_at_k: dict[int, float]) -> dict:
    """Relative decrease of in-response recall vs module recall, per k."""
    out = {}
    for k in sorted(r_at_k):
        r = r_at_k[k]
        rer = rer_at_k.get(k, 0.0)
        pct = 100.0 * (r - rer) / r if r > 0 else None
        out[k] = {"r_at_k": r, "rer_at_k": rer, "relative_decrease_pct": pct}
    return out


# ---------------------------------------------------------------------------
# diversity
# ---------------------------------------------------------------------------

def _word_token_lists(records: list[GenerationRecord], vocab: Vocabulary,
                      include_items: bool) -> list[list[str]]:
    out = []
    for r in records:
        toks = []
        for tid in r.generated_ids:
            if tid < vocab.word_start:
                continue  # specials never count toward diversity
            if vocab.is_item_id(tid) and not include_items:
                continue
            toks.append(vocab.token(tid))
        out.append(toks)
    return out


def dist_n(records: list[GenerationRecord], vocab: Vocabulary, n: int,
           include_items: bool = False) -> float:
    """Distinct n-grams across all responses over the total n-gram count
    (corpus-level rate in [0, 1])."""
    if n < 1:
        raise ValueError("n must be >= 1")
    distinct = set()
    total = 0
    for toks in _word_token_lists(records, vocab, include_items):
        for i in range(len(toks) - n + 1):
            distinct.add(tuple(toks[i:i + n]))
            total += 1
    return len(distinct) / total if total else 0.0


def legacy_dist_n(records: list[GenerationRecord], vocab: Vocabulary, n: int,
                  include_items: bool = False) -> float:
    """Conventional formulation: corpus-level distinct n-gram count divided
    by the number of responses; can exceed 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    token_lists = _word_token_lists(records, vocab, include_items)
    distinct = set()
    for toks in token_lists:
        for i in range(len(toks) - n + 1):
            distinct.add(tuple(toks[i:i + n]))
    return len(distinct) / len(token_lists) if token_lists else 0.0


# ---------------------------------------------------------------------------
# gate diagnostics
# ---------------------------------------------------------------------------

def gate_diagnostics(teacher: Seq2SeqLM, corpus: DialogueCorpus,
                     batch_size: int = 64) -> tuple[float | None, float | None]:
    """Mean teacher item mass at recommendation steps (gold token is an
    item) vs all other steps, teacher-forced on the given corpus."""
    vocab = corpus.vocab
    samples = build_lm_samples(corpus, teacher.config.max_len)
    rec_masses = []
    other_masses = []
    with nn.no_grad():
        for start in range(0, len(samples), batch_size):
            batch = samples[start:start + batch_size]
            enc, dec_in, target, mask, _ = collate(batch)
            logits = teacher.logits(enc, dec_in).data
            shift = np.exp(logits - logits.max(axis=-1, keepdims=True))
            probs = shift / shift.sum(axis=-1, keepdims=True)
            masses = item_mass(probs, vocab.item_range)
            for b in range(len(batch)):
                for t in range(len(batch[b].target)):
                    if vocab.is_item_id(batch[b].target[t]):
                        rec_masses.append(masses[b, t])
                    else:
                        other_masses.append(masses[b, t])
    lam_r = float(np.mean(rec_masses)) if rec_masses else None
    lam_v = float(np.mean(other_masses)) if other_masses else None
    return lam_r, lam_v


# ---------------------------------------------------------------------------
# item refilling baseline
# ---------------------------------------------------------------------------

def refill_items(generated_ids: list[int], ranking: list[int],
                 vocab: Vocabulary) -> list[int]:
    """Replace generated item tokens, in order, with the recommendation
    module's successive top items; word tokens untouched."""
    out = []
    next_rank = 0
    for tid in generated_ids:
        if vocab.is_item_id(tid) and next_rank < len(ranking):
            out.append(vocab.item_token_id(ranking[next_rank]))
            next_rank += 1
        else:
            out.append(tid)
    return out


def refill_records(records: list[GenerationRecord],
                   rankings: list[list[int]], vocab: Vocabulary,
                   ) -> list[GenerationRecord]:
    """Two-step baseline: each record's j-th item slot is refilled with the
    per-turn module ranking starting at rank j (the module distribution is
    fixed for the turn, so successive slots consume successive ranks)."""
    out = []
    for rec, ranking in zip(records, rankings):
        ids = refill_items(rec.generated_ids, ranking, vocab)
        slots = []
        for j, slot in enumerate(rec.slots):
            cands = ranking[j:] if j < len(ranking) else []
            emitted = cands[0] if cands else slot.emitted
            slots.append(ItemSlot(position=slot.position, emitted=emitted,
                                  candidates=[(c, 0.0) for c in cands]))
        out.append(GenerationRecord(dialogue_id=rec.dialogue_id,
                                    turn_index=rec.turn_index, generated_ids=ids,
                                    slots=slots, gold_items=rec.gold_items,
                                    history_items=rec.history_items))
    return out


# ---------------------------------------------------------------------------
# latency
# ---------------------------------------------------------------------------

def latency_bench(model: Seq2SeqLM, histories: list[list[int]],
                  decode: DecodeConfig, min_tokens: int = 1000,
                  warmup: int = 3) -> dict:
    """Wall-clock milliseconds per generated token; warmup excluded."""
    for h in histories[:warmup]:
        model.generate(h, decode)
    tokens = 0
    elapsed = 0.0
    i = 0
    while tokens < min_tokens:
        h = histories[i % len(histories)]
        t0 = time.perf_counter()
        out = model.generate(h, decode)
        elapsed += time.perf_counter() - t0
        tokens += max(len(out), 1)
        i += 1
    ms = 1000.0 * elapsed / tokens
    return {"ms_per_token": ms, "tokens": tokens,
            "formatted": f"{ms:.3f} ms/token"}


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    r_at_k: dict[int, float] = field(default_factory=dict)
    rer_at_k: dict[int, float] = field(default_factory=dict)
    prr_at_k: dict[int, float] = field(default_factory=dict)
    f1_at_k: dict[int, float] = field(default_factory=dict)
    rec_ratio: float = 0.0
    ppl: float | None = None
    dist: dict[int, float] = field(default_factory=dict)
    legacy_dist: dict[int, float] = field(default_factory=dict)
    lambda_rec: float | None = None
    lambda_other: float | None = None
    relaxed_f1_at_k: dict[int, float] = field(default_factory=dict)
    refill_f1_at_k: dict[int, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "r_at_k": {str(k): v for k, v in self.r_at_k.items()},
            "rer_at_k": {str(k): v for k, v in self.rer_at_k.items()},
            "prr_at_k": {str(k): v for k, v in self.prr_at_k.items()},
            "f1_at_k": {str(k): v for k, v in self.f1_at_k.items()},
            "rec_ratio": self.rec_ratio,
            "ppl": self.ppl,
            "dist_n": {str(k): v for k, v in self.dist.items()},
            "legacy_dist_n": {str(k): v for k, v in self.legacy_dist.items()},
            "lambda_rec": self.lambda_rec,
            "lambda_other": self.lambda_other,
            "relaxed_f1_at_k": {str(k): v for k, v in self.relaxed_f1_at_k.items()},
            "refill_f1_at_k": {str(k): v for k, v in self.refill_f1_at_k.items()},
        }


def compute_metric_report(records: list[GenerationRecord], corpus_vocab: Vocabulary,
                          ks=STANDARD_KS, ppl: float | None = None,
                          r_at_k: dict[int, float] | None = None) -> MetricReport:
    report = MetricReport(ppl=ppl, r_at_k=r_at_k or {})
    for k in ks:
        m = response_metrics(records, k)
        report.rer_at_k[k] = m["rer"]
        report.prr_at_k[k] = m["prr"]
        report.f1_at_k[k] = m["f1"]
        report.rec_ratio = m["rec_ratio"]
    for n in (2, 3, 4):
        report.dist[n] = dist_n(records, corpus_vocab, n)
        report.legacy_dist[n] = legacy_dist_n(records, corpus_vocab, n)
    return report


def format_metric_table(report: MetricReport, label: str = "model") -> str:
    """Aligned text table; recommendation columns first (recall in response
    uses the gold-mention denominator, precision the generated-slot one),
    then fluency/diversity."""
    ks = sorted(report.rer_at_k)
    headers = ["model"]
    headers += [f"ReR@{k}" for k in ks]
    headers += [f"PrR@{k}" for k in ks]
    headers += [f"F1@{k}" for k in ks]
    headers.append("RecRatio")
    row = [label]
    row += [f"{report.rer_at_k[k]:.3f}" for k in ks]
    row += [f"{report.prr_at_k[k]:.3f}" for k in ks]
    row += [f"{report.f1_at_k[k]:.3f}" for k in ks]
    row.append(f"{report.rec_ratio:.3f}")
    if report.ppl is not None:
        headers.append("PPL")
        row.append(f"{report.ppl:.3f}")
    for n in sorted(report.dist):
        headers.append(f"DIST-{n}")
        row.append(f"{report.dist[n]:.3f}")
    widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
    line1 = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    line2 = "  ".join(v.rjust(w) for v, w in zip(row, widths))
    return line1 + "\n" + line2
