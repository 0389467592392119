"""Acceptance gate: one test per criterion, heavyweight fixtures shared.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
PASS/FAIL lines and timings.
"""

import dataclasses
import time

import numpy as np
import pytest

import conkd.nn.tensor as T
from conkd.config import config_from_dict
from conkd.data import build_vocabulary
from conkd.data.vocab import BOS, EOS
from conkd.dialogue import DecodeConfig, Seq2SeqLM, build_lm_samples
from conkd.distill import (
    combined_step_loss,
    conkd_batch_loss,
    hard_gate,
    item_mass,
    lift_rec_distribution,
    soft_gate,
)
from conkd.metrics import (
    dist_n,
    gate_diagnostics,
    latency_bench,
    legacy_dist_n,
    mismatch_report,
    recall_at_k,
    relevant_items_2hop,
    response_metrics,
    GenerationRecord,
    ItemSlot,
)
from conkd.nn import Tape, Tensor, TransformerConfig, backward, precision, record
from conkd.pipeline import (
    evaluate_student,
    rec_rankings,
    run_full_experiment,
    split_corpus,
    train_teachers,
    train_student_variant,
    world_from_synthetic,
)
from conkd.recommender import RecEvalSession, gcn_layer, rgcn_layer, train_recommender
from conkd.dialogue import train_dialogue_model


def _verdict(num: int, ok: bool, detail: str):
    print(f"[acceptance {num}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# shared experiment fixtures
# ---------------------------------------------------------------------------

SHORT_RAW = {
    "seed": 0,
    "synthetic": {"n_dialogues": 1000, "n_items": 60, "n_attributes": 6,
                  "turns_range": [4, 6]},
    "lm": {"n_layers": 1, "hidden": 48, "n_heads": 2, "ffn": 96, "max_len": 56,
           "dropout": 0.1},
    "classifier": {"n_layers": 1, "hidden": 24, "n_heads": 2, "ffn": 48,
                   "max_len": 56},
    "recommender": {"hidden": 48},
    "train": {"teacher_epochs": 25, "rec_epochs": 25, "student_epochs": 8,
              "classifier_epochs": 6},
    "split": {"train_frac": 0.8, "val_frac": 0.0},
    "decode": {"max_new_tokens": 16},
}

LONG_RAW = {**SHORT_RAW,
            "synthetic": {"n_dialogues": 1000, "n_items": 60, "n_attributes": 6,
                          "turns_range": [8, 12]},
            "lm": {"n_layers": 1, "hidden": 48, "n_heads": 2, "ffn": 96,
                   "max_len": 40, "dropout": 0.1},
            "classifier": {"n_layers": 1, "hidden": 24, "n_heads": 2, "ffn": 48,
                           "max_len": 40}}

GRID_SEEDS = (0, 1, 2)
GRID_VARIANTS = ("vanilla", "dial_only", "rec_only", "both", "both_st")


@pytest.fixture(scope="session")
def short_cfg():
    return config_from_dict(SHORT_RAW)


@pytest.fixture(scope="session")
def short_world(short_cfg):
    return world_from_synthetic(short_cfg)


@pytest.fixture(scope="session")
def short_teachers(short_world, short_cfg):
    return train_teachers(short_world, short_cfg, include_plain=True)


@pytest.fixture(scope="session")
def student_grid(short_world, short_cfg, short_teachers):
    """F1@1 / PPL / students for every (variant, seed)."""
    dial, plain_teacher, rec, clf = short_teachers
    grid = {}
    for variant in GRID_VARIANTS:
        per_seed = []
        for seed in GRID_SEEDS:
            student, _, uses_st = train_student_variant(
                short_world, short_cfg, variant, dial, plain_teacher, rec,
                seed=seed)
            rep, _ = evaluate_student(student, short_world, short_cfg,
                                      classifier=clf if uses_st else None,
                                      uses_special_tokens=uses_st)
            per_seed.append({"student": student, "f1": rep.f1_at_k[1],
                             "ppl": rep.ppl, "rer": rep.rer_at_k[1]})
        grid[variant] = per_seed
    return grid


# ---------------------------------------------------------------------------
# 1. gate identities
# ---------------------------------------------------------------------------

def test_criterion_1_gate_identities():
    t0 = time.monotonic()
    rng = np.random.default_rng(11)
    violations = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 40))
        dist = rng.dirichlet(np.ones(n) * float(rng.uniform(0.2, 3.0)))
        lo = int(rng.integers(0, n))
        hi = int(rng.integers(lo, n + 1))
        eta = float(rng.uniform(0, 1))
        s = soft_gate(dist, (lo, hi))
        h = hard_gate(dist, (lo, hi), eta)
        if not (0.0 <= s <= 1.0 + 1e-9):
            violations += 1
        if h != (1.0 if s >= eta else 0.0):
            violations += 1
        prev = 1.0
        for e in (0.0, 0.25, 0.5, 0.75, 1.0):
            he = hard_gate(dist, (lo, hi), e)
            if he > prev:
                violations += 1
            prev = he
    elapsed = time.monotonic() - t0
    _verdict(1, violations == 0 and elapsed < 5.0,
             f"10k fuzzed distributions, {violations} violations, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. loss algebra
# ---------------------------------------------------------------------------

def test_criterion_2_loss_algebra():
    t0 = time.monotonic()
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(1000):
        nll, dial, rec = rng.uniform(0, 8, size=3)
        gamma = float(rng.uniform(0, 1))
        lam = float(rng.uniform(0, 1))
        l_dial = (1 - gamma) * nll + gamma * dial
        l_rec = (1 - gamma) * nll + gamma * rec
        worst = max(
            worst,
            abs(combined_step_loss(nll, dial, rec, 0.0, gamma) - l_dial),
            abs(combined_step_loss(nll, dial, rec, 1.0, gamma) - l_rec),
            abs(combined_step_loss(nll, dial, rec, lam, 0.0) - nll),
            abs(combined_step_loss(nll, dial, rec, lam, gamma)
                - ((1 - gamma) * nll + gamma * ((1 - lam) * dial + lam * rec))),
        )
    elapsed = time.monotonic() - t0
    _verdict(2, worst < 1e-7 and elapsed < 5.0,
             f"1000 random inputs, worst deviation {worst:.2e}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 3. gradient check of the full distillation objective
# ---------------------------------------------------------------------------

def test_criterion_3_gradient_check():
    t0 = time.monotonic()
    with precision(np.float64):
        vocab = build_vocabulary(["w0 w1"], {0: "a", 1: "b"})
        cfg = TransformerConfig(n_layers=1, hidden=8, n_heads=2, ffn=8,
                                max_len=8, dropout=0.0)
        student = Seq2SeqLM(vocab, cfg, seed=2)
        rng = np.random.default_rng(5)
        w0 = vocab.encode_token("w0")
        w1 = vocab.encode_token("w1")
        it0 = vocab.item_token_id(0)
        enc = np.array([[BOS, w0, w1]])
        target = np.array([[w1, it0, w0, EOS]])
        dec_in = np.array([[BOS, w1, it0, w0]])
        mask = np.ones((1, 4))
        lengths = np.array([4.0])
        q_dial = rng.dirichlet(np.ones(len(vocab)), size=(1, 4))
        q_rec = lift_rec_distribution(rng.dirichlet(np.ones(2)), len(vocab),
                                      vocab.item_range)[None, None, :]
        lam = hard_gate(q_dial, vocab.item_range, 0.3)

        def loss_tensor():
            return conkd_batch_loss(student, enc, dec_in, target, mask, lengths,
                                    gamma=0.6, tau=1.0, q_dial=q_dial,
                                    q_rec=q_rec, lam=lam)

        params = student.parameters()
        for p in params.values():
            p.grad = None
        tape = Tape()
        with record(tape):
            loss = loss_tensor()
        backward(tape, loss, params=params.values())

        worst = 0.0
        worst_name = ""
        step = 1e-4
        for name, p in params.items():
            analytic = p.grad
            fd = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            fdf = fd.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = float(loss_tensor().data)
                flat[i] = orig - step
                dn = float(loss_tensor().data)
                flat[i] = orig
                fdf[i] = (up - dn) / (2 * step)
            # parameters with structurally zero gradients (e.g. attention key
            # biases, cancelled by softmax shift invariance) leave only FD
            # noise in the denominator; floor it
            denom = max(float(np.linalg.norm(fd.ravel())),
                        float(np.linalg.norm(analytic.ravel())), 1e-6)
            err = float(np.linalg.norm((analytic - fd).ravel())) / denom
            if err > worst:
                worst, worst_name = err, name
    elapsed = time.monotonic() - t0
    _verdict(3, worst < 1e-3 and elapsed < 60.0,
             f"worst rel err {worst:.2e} ({worst_name}), {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. message-passing oracles
# ---------------------------------------------------------------------------

def _dense_rgcn(h, edges, rel_w, self_w, n_rel):
    n = h.shape[0]
    out = h @ self_w
    for r in range(n_rel):
        adj = np.zeros((n, n))
        for s, rr, d in edges:
            if rr == r:
                adj[d, s] += 1.0
        out = out + adj @ (h @ rel_w[r])
    return np.maximum(out, 0.0)


def _dense_gcn(h, pairs, w):
    n = h.shape[0]
    a = np.eye(n)
    for s, d in pairs:
        a[s, d] = a[d, s] = 1.0
    dinv = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
    return np.maximum(dinv @ a @ dinv @ h @ w, 0.0)


def _norm_edges(pairs, n):
    a = np.eye(n)
    for s, d in pairs:
        a[s, d] = a[d, s] = 1.0
    deg = a.sum(axis=1)
    src, dst, w = [], [], []
    for i in range(n):
        for j in range(n):
            if a[i, j]:
                src.append(j)
                dst.append(i)
                w.append(1.0 / np.sqrt(deg[i] * deg[j]))
    return np.array(src), np.array(dst), np.array(w)


def test_criterion_4_message_passing_oracles():
    t0 = time.monotonic()
    worst = 0.0
    checked = 0
    with precision(np.float64):
        rng = np.random.default_rng(17)
        d = 4
        # exhaustive: every edge subset on 1 and 2 nodes, up to 2 relations
        for n_nodes in (1, 2):
            possible = [(s, r, t) for s in range(n_nodes) for t in range(n_nodes)
                        for r in range(2)]
            for bits in range(2 ** len(possible)):
                edges = [e for i, e in enumerate(possible) if bits >> i & 1]
                h = rng.normal(size=(n_nodes, d))
                rel_w = [rng.normal(size=(d, d)) for _ in range(2)]
                self_w = rng.normal(size=(d, d))
                ebr = {}
                for r in range(2):
                    ps = [(s, t) for s, rr, t in edges if rr == r]
                    if ps:
                        ebr[r] = (np.array([p[0] for p in ps]),
                                  np.array([p[1] for p in ps]))
                got = rgcn_layer(Tensor(h), ebr,
                                 {r: Tensor(w) for r, w in enumerate(rel_w)},
                                 Tensor(self_w)).data
                want = _dense_rgcn(h, edges, rel_w, self_w, 2)
                worst = max(worst, float(np.abs(got - want).max()))
                checked += 1
        # dense randomized sweep on 3..6 nodes
        for n_nodes in range(3, 7):
            for n_rel in (1, 2):
                for _ in range(40):
                    edges = [(int(rng.integers(n_nodes)), int(rng.integers(n_rel)),
                              int(rng.integers(n_nodes)))
                             for _ in range(int(rng.integers(0, 3 * n_nodes)))]
                    h = rng.normal(size=(n_nodes, d))
                    rel_w = [rng.normal(size=(d, d)) for _ in range(n_rel)]
                    self_w = rng.normal(size=(d, d))
                    ebr = {}
                    for r in range(n_rel):
                        ps = [(s, t) for s, rr, t in edges if rr == r]
                        if ps:
                            ebr[r] = (np.array([p[0] for p in ps]),
                                      np.array([p[1] for p in ps]))
                    got = rgcn_layer(Tensor(h), ebr,
                                     {r: Tensor(w) for r, w in enumerate(rel_w)},
                                     Tensor(self_w)).data
                    want = _dense_rgcn(h, edges, rel_w, self_w, n_rel)
                    worst = max(worst, float(np.abs(got - want).max()))
                    checked += 1
        # gcn against the dense normalized product on 1..6 nodes
        for n_nodes in range(1, 7):
            for _ in range(40):
                pairs = [(int(rng.integers(n_nodes)), int(rng.integers(n_nodes)))
                         for _ in range(int(rng.integers(0, n_nodes + 3)))]
                h = rng.normal(size=(n_nodes, d))
                w = rng.normal(size=(d, d))
                got = gcn_layer(Tensor(h), _norm_edges(pairs, n_nodes),
                                Tensor(w)).data
                want = _dense_gcn(h, pairs, w)
                worst = max(worst, float(np.abs(got - want).max()))
                checked += 1
    elapsed = time.monotonic() - t0
    _verdict(4, worst < 1e-6 and elapsed < 60.0,
             f"{checked} graphs, worst abs dev {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. published mismatch-table arithmetic
# ---------------------------------------------------------------------------

# (row, k, module recall, in-response recall, printed relative decrease %)
PUBLISHED_MISMATCH_CELLS = [
    ("KBRD", 1, 0.034, 0.008, 76.47),
    ("KBRD", 10, 0.168, 0.040, 76.19),
    ("KBRD", 50, 0.360, 0.096, 74.17),   # printed value disagrees with columns
    ("KGSF", 1, 0.038, 0.008, 78.95),
    ("KGSF", 10, 0.183, 0.043, 76.50),
    ("KGSF", 50, 0.382, 0.109, 73.33),   # printed value disagrees with columns
    ("RevCore", 1, 0.052, 0.006, 88.46),
    ("RevCore", 10, 0.195, 0.031, 84.10),
    ("RevCore", 50, 0.341, 0.077, 77.42),
]
# Two cells of the published table cannot be reproduced from their own
# R@k/ReR@k columns within rounding: the printed 74.17 (row KBRD, k=50)
# and 73.33 (row KGSF, k=50) correspond to column-derived values 73.33 and
# 71.47. The source appears to average per-run ratios rather than ratios
# of averages. The arithmetic itself is verified against all nine
# column-derived values, plus the seven self-consistent printed values.
COLUMN_INCONSISTENT = {("KBRD", 50), ("KGSF", 50)}


def test_criterion_5_mismatch_table_arithmetic():
    worst_col = 0.0
    worst_printed = 0.0
    for name, k, r, rer, printed in PUBLISHED_MISMATCH_CELLS:
        rep = mismatch_report({k: r}, {k: rer})
        got = rep[k]["relative_decrease_pct"]
        column_derived = 100.0 * (r - rer) / r
        worst_col = max(worst_col, abs(got - column_derived))
        if (name, k) in COLUMN_INCONSISTENT:
            assert abs(got - printed) > 0.05, \
                f"{name}@{k}: expected a documented source inconsistency"
        else:
            worst_printed = max(worst_printed, abs(got - printed))
    ok = worst_col < 1e-9 and worst_printed <= 0.05
    _verdict(5, ok,
             f"9/9 column-derived cells exact, 7/7 self-consistent printed "
             f"cells within ±0.05pp (worst {worst_printed:.3f}pp); 2 cells "
             f"are documented source-table inconsistencies")


# ---------------------------------------------------------------------------
# 6. mismatch phenomenon at desk scale
# ---------------------------------------------------------------------------

def test_criterion_6_desk_scale_mismatch():
    t0 = time.monotonic()
    cfg = config_from_dict(LONG_RAW)
    world = world_from_synthetic(cfg)
    train_plain, _, _ = split_corpus(world.plain, cfg.split.train_frac,
                                     cfg.split.val_frac)
    dialogue_module = train_dialogue_model(train_plain, cfg.lm, cfg.lm_train())
    rec_module = train_recommender(train_plain, world.item_kg, world.word_kg,
                                   cfg.recommender, cfg.rec_train())
    rep, _ = evaluate_student(dialogue_module, world, cfg, rec_model=rec_module,
                              uses_special_tokens=False)
    mm = mismatch_report(rep.r_at_k, rep.rer_at_k)
    decrease = mm[1]["relative_decrease_pct"]
    elapsed = time.monotonic() - t0
    ok = (rep.rer_at_k[1] < rep.r_at_k[1] and decrease is not None
          and decrease >= 30.0 and elapsed < 1200)
    _verdict(6, ok,
             f"R@1={rep.r_at_k[1]:.3f} ReR@1={rep.rer_at_k[1]:.3f} "
             f"decrease={decrease:.1f}% (needs >=30%), {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. distillation efficacy at desk scale
# ---------------------------------------------------------------------------

def test_criterion_7_distillation_gain(student_grid):
    t0 = time.monotonic()
    conkd = float(np.mean([r["f1"] for r in student_grid["both_st"]]))
    vanilla = float(np.mean([r["f1"] for r in student_grid["vanilla"]]))
    ratio = conkd / max(vanilla, 1e-9)
    elapsed = time.monotonic() - t0
    ok = conkd >= 1.2 * vanilla and conkd > 0
    _verdict(7, ok,
             f"F1@1 conkd={conkd:.4f} vanilla={vanilla:.4f} "
             f"ratio={ratio:.2f} (needs >=1.2, 3-seed means)")


# ---------------------------------------------------------------------------
# 8. ablation ordering
# ---------------------------------------------------------------------------

def test_criterion_8_ablation_ordering(student_grid):
    f1 = {v: float(np.mean([r["f1"] for r in student_grid[v]]))
          for v in GRID_VARIANTS}
    ppl = {v: float(np.mean([r["ppl"] for r in student_grid[v]]))
           for v in GRID_VARIANTS}
    ok = (f1["both_st"] > f1["vanilla"]
          and f1["both"] >= f1["rec_only"]
          and ppl["dial_only"] <= ppl["vanilla"])
    _verdict(8, ok,
             f"F1: st={f1['both_st']:.4f} > vanilla={f1['vanilla']:.4f}; "
             f"D&R={f1['both']:.4f} >= R={f1['rec_only']:.4f}; "
             f"PPL +D={ppl['dial_only']:.4f} <= vanilla={ppl['vanilla']:.4f}")


# ---------------------------------------------------------------------------
# 9. gate separation on held-out data
# ---------------------------------------------------------------------------

def test_criterion_9_gate_separation(short_world, short_cfg, short_teachers):
    dial, _, _, _ = short_teachers
    _, _, test = split_corpus(short_world.injected, short_cfg.split.train_frac,
                              short_cfg.split.val_frac)
    lam_r, lam_v = gate_diagnostics(dial, test)
    ok = lam_r is not None and lam_v is not None and lam_r > lam_v \
        and (lam_r - lam_v) >= 0.1
    _verdict(9, ok, f"lambda_r={lam_r:.3f} lambda_v={lam_v:.3f} "
                    f"gap={lam_r - lam_v:.3f} (needs >=0.1)")


# ---------------------------------------------------------------------------
# 10. metric oracles on randomized micro-fixtures
# ---------------------------------------------------------------------------

def test_criterion_10_metric_oracles():
    rng = np.random.default_rng(23)
    vocab = build_vocabulary(["a b c d e f g h"], {i: f"m{i}" for i in range(8)})

    def random_records(max_tokens=8):
        records = []
        for r in range(int(rng.integers(1, 5))):
            n_slots = int(rng.integers(0, 4))
            slots = []
            token_ids = [vocab.encode_token("abcdefgh"[int(x)])
                         for x in rng.integers(0, 8,
                                               size=int(rng.integers(0, max_tokens)))]
            for s in range(n_slots):
                cands = [int(c) for c in rng.choice(8, size=int(rng.integers(1, 6)),
                                                    replace=False)]
                slots.append(ItemSlot(position=s, emitted=cands[0],
                                      candidates=[(c, 1.0 / (i + 1))
                                                  for i, c in enumerate(cands)]))
                token_ids.append(vocab.item_token_id(cands[0]))
            golds = [int(g) for g in rng.integers(0, 8,
                                                  size=int(rng.integers(0, 4)))]
            records.append(GenerationRecord(dialogue_id=f"d{r}", turn_index=1,
                                            generated_ids=token_ids, slots=slots,
                                            gold_items=golds))
        return records

    for _ in range(100):
        records = random_records()
        k = int(rng.integers(1, 6))
        got = response_metrics(records, k)
        correct = gold_total = slot_total = turns = 0
        for rec in records:
            gold_total += len(rec.gold_items)
            slot_total += len(rec.slots)
            turns += int(bool(rec.slots))
            for j in range(min(len(rec.slots), len(rec.gold_items))):
                if rec.gold_items[j] in [c for c, _ in rec.slots[j].candidates[:k]]:
                    correct += 1
        assert got["rer"] == (correct / gold_total if gold_total else 0.0)
        assert got["prr"] == (correct / slot_total if slot_total else 0.0)
        assert got["rec_ratio"] == (turns / len(records))

        n = int(rng.integers(1, 4))
        grams = []
        resp_count = 0
        for rec in records:
            toks = [vocab.token(t) for t in rec.generated_ids
                    if t >= vocab.word_start and not vocab.is_item_id(t)]
            grams.extend(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))
            resp_count += 1
        want_dist = len(set(grams)) / len(grams) if grams else 0.0
        assert dist_n(records, vocab, n) == want_dist
        want_legacy = len(set(grams)) / resp_count if resp_count else 0.0
        assert legacy_dist_n(records, vocab, n) == want_legacy

    for _ in range(100):
        rankings = []
        for _ in range(int(rng.integers(1, 6))):
            ranked = [int(x) for x in rng.permutation(8)]
            golds = [int(g) for g in rng.integers(0, 8,
                                                  size=int(rng.integers(1, 3)))]
            rankings.append((ranked, golds))
        k = int(rng.integers(1, 8))
        import warnings as _w
        with _w.catch_warnings():
            _w.simplefilter("ignore")
            got_r = recall_at_k(rankings, k)
        hits = total = 0
        for ranked, golds in rankings:
            for g in golds:
                total += 1
                hits += int(g in ranked[:k])
        assert got_r == hits / total

    from conkd.data import build_item_kg
    for _ in range(100):
        n_items = int(rng.integers(1, 6))
        links = [(int(rng.integers(n_items)), f"a{int(rng.integers(3))}")
                 for _ in range(int(rng.integers(0, 8)))]
        triples = []
        for item, attr in links:
            triples.append({"head": f"@{item}", "relation": "has_attribute",
                            "tail": f"attr:{attr}"})
            triples.append({"head": f"attr:{attr}", "relation": "attribute_of",
                            "tail": f"@{item}"})
        kg = build_item_kg(triples, {i: f"m{i}" for i in range(n_items)})
        mentions = sorted({int(m) for m in
                           rng.integers(0, n_items, size=int(rng.integers(0, 3)))})
        got = relevant_items_2hop(kg, mentions, n_items)
        adj = {}
        for h, _, t in kg.edges:
            adj.setdefault(h, set()).add(t)
            adj.setdefault(t, set()).add(h)
        want = set()
        for m in mentions:
            level, seen = {m}, {m}
            for _ in range(2):
                nxt = set().union(*(adj.get(x, set()) for x in level)) - seen
                seen |= nxt
                level = nxt
            want |= {x for x in seen if x < n_items}
        want -= set(mentions)
        assert got == want
    _verdict(10, True, "response_metrics, dist_n, legacy_dist_n, recall_at_k, "
                       "relevant_items_2hop each match brute force on 100 "
                       "randomized fixtures exactly")


# ---------------------------------------------------------------------------
# 11. pipeline determinism
# ---------------------------------------------------------------------------

def test_criterion_11_determinism():
    raw = {
        "seed": 5,
        "synthetic": {"n_dialogues": 120, "n_items": 12, "n_attributes": 3,
                      "turns_range": [4, 6]},
        "lm": {"n_layers": 1, "hidden": 16, "n_heads": 2, "ffn": 32,
               "max_len": 48, "dropout": 0.1},
        "classifier": {"n_layers": 1, "hidden": 16, "n_heads": 2, "ffn": 32,
                       "max_len": 48},
        "recommender": {"hidden": 16},
        "train": {"teacher_epochs": 4, "rec_epochs": 4, "student_epochs": 3,
                  "classifier_epochs": 2},
        "split": {"train_frac": 0.8, "val_frac": 0.0},
        "decode": {"max_new_tokens": 10},
    }
    a = run_full_experiment(config_from_dict(raw))
    b = run_full_experiment(config_from_dict(raw))

    def rounded(obj):
        if isinstance(obj, dict):
            return {k: rounded(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [rounded(v) for v in obj]
        if isinstance(obj, float):
            return round(obj, 6)
        return obj

    ok = rounded(a) == rounded(b)
    _verdict(11, ok, "two identical-seed pipeline runs agree to 6 decimals")


# ---------------------------------------------------------------------------
# 12. latency parity
# ---------------------------------------------------------------------------

def test_criterion_12_latency_parity(short_world, short_cfg, student_grid):
    conkd = student_grid["both_st"][0]["student"]
    vanilla = student_grid["vanilla"][0]["student"]
    _, _, test = split_corpus(short_world.injected, short_cfg.split.train_frac,
                              short_cfg.split.val_frac)
    histories = [s.enc for s in build_lm_samples(test, short_cfg.lm.max_len)][:40]
    decode = DecodeConfig(strategy="greedy", max_new_tokens=16)
    runs = {"conkd": [], "vanilla": []}
    for _ in range(2):
        runs["conkd"].append(latency_bench(conkd, histories, decode,
                                           min_tokens=1000)["ms_per_token"])
        runs["vanilla"].append(latency_bench(vanilla, histories, decode,
                                             min_tokens=1000)["ms_per_token"])
    stability = all(abs(r[0] - r[1]) / min(r) < 0.2 for r in runs.values())
    ratio = np.mean(runs["conkd"]) / np.mean(runs["vanilla"])
    ok = stability and 0.8 <= ratio <= 1.2
    _verdict(12, ok,
             f"{np.mean(runs['conkd']):.3f} ms/token vs "
             f"{np.mean(runs['vanilla']):.3f} ms/token, ratio={ratio:.3f} "
             f"(needs . in [0.8, 1.2]), stable={stability}")
