"""End-to-end experiment orchestration shared by the CLI and the tests:
data generation, corpus/world loading, deterministic splits, teacher and
student training, evaluation, and the ablation grid."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig
from .data import (
    DialogueCorpus,
    KnowledgeGraph,
    build_item_kg,
    build_vocabulary,
    generate_synthetic_corpus,
    inject_special_tokens_corpus,
    kg_from_triples,
    load_catalog,
    load_dialogues_jsonl,
    load_kg_jsonl,
    save_catalog,
    save_dialogues_jsonl,
    save_kg_jsonl,
)
from .data.vocab import Vocabulary
from .dialogue import Seq2SeqLM, perplexity, train_dialogue_model
from .distill import (
    DistillConfig,
    GateTrace,
    TurnClassifier,
    train_student,
    train_turn_classifier,
)
from .metrics import (
    MetricReport,
    compute_metric_report,
    gate_diagnostics,
    generate_records,
    mismatch_report,
    recall_at_k,
    refill_records,
    relaxed_response_metrics,
    response_metrics,
)
from .recommender import (
    RecEvalSession,
    RecommenderModel,
    train_recommender,
)

ABLATION_VARIANTS = ("vanilla", "dial_only", "rec_only", "both", "both_st",
                     "fixed_gate")


def write_data_files(config: ExperimentConfig):
    """Generate the synthetic world and write corpus/KG/catalog files."""
    config.resolve_paths()
    Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    syn = dataclasses.replace(config.synthetic, seed=config.seed)
    data = generate_synthetic_corpus(syn)
    save_dialogues_jsonl(data.raw_dialogues, config.corpus_path)
    save_kg_jsonl(data.item_triples, config.item_kg_path)
    save_kg_jsonl(data.word_triples, config.word_kg_path)
    save_catalog(data.catalog, config.catalog_path)
    return data


@dataclass
class World:
    vocab: Vocabulary
    catalog: dict[int, str]
    item_kg: KnowledgeGraph
    word_kg: KnowledgeGraph
    plain: DialogueCorpus     # as loaded, no special prefixes
    injected: DialogueCorpus  # [REC]/[GEN] prefixes on agent turns


def load_world(config: ExperimentConfig) -> World:
    config.resolve_paths()
    raw = load_dialogues_jsonl(config.corpus_path)
    catalog = load_catalog(config.catalog_path)
    item_kg = build_item_kg(load_kg_jsonl(config.item_kg_path), catalog)
    word_kg = kg_from_triples(load_kg_jsonl(config.word_kg_path))
    texts = [t["text"] for rd in raw for t in rd["turns"]]
    vocab = build_vocabulary(texts, catalog)
    plain = DialogueCorpus.from_raw(raw, vocab)
    injected = DialogueCorpus.from_raw(inject_special_tokens_corpus(raw), vocab)
    return World(vocab=vocab, catalog=catalog, item_kg=item_kg, word_kg=word_kg,
                 plain=plain, injected=injected)


def world_from_synthetic(config: ExperimentConfig) -> World:
    """In-memory variant of gen-data + load (used by tests)."""
    syn = dataclasses.replace(config.synthetic, seed=config.seed)
    data = generate_synthetic_corpus(syn)
    item_kg = build_item_kg(data.item_triples, data.catalog)
    word_kg = kg_from_triples(data.word_triples)
    texts = [t["text"] for rd in data.raw_dialogues for t in rd["turns"]]
    vocab = build_vocabulary(texts, data.catalog)
    plain = DialogueCorpus.from_raw(data.raw_dialogues, vocab)
    injected = DialogueCorpus.from_raw(
        inject_special_tokens_corpus(data.raw_dialogues), vocab)
    return World(vocab=vocab, catalog=data.catalog, item_kg=item_kg,
                 word_kg=word_kg, plain=plain, injected=injected)


def split_corpus(corpus: DialogueCorpus, train_frac: float, val_frac: float,
                 ) -> tuple[DialogueCorpus, DialogueCorpus, DialogueCorpus]:
    n = len(corpus.dialogues)
    n_train = int(n * train_frac)
    n_val = int(n * val_frac)
    mk = lambda ds: DialogueCorpus(ds, corpus.vocab)
    return (mk(corpus.dialogues[:n_train]),
            mk(corpus.dialogues[n_train:n_train + n_val]),
            mk(corpus.dialogues[n_train + n_val:]))


def train_teachers(world: World, config: ExperimentConfig,
                   include_plain: bool = False):
    train_inj, _, _ = split_corpus(world.injected, config.split.train_frac,
                                   config.split.val_frac)
    train_plain, _, _ = split_corpus(world.plain, config.split.train_frac,
                                     config.split.val_frac)
    dial = train_dialogue_model(train_inj, config.lm, config.lm_train())
    plain = train_dialogue_model(train_plain, config.lm, config.lm_train()) \
        if include_plain else None
    rec = train_recommender(train_inj, world.item_kg, world.word_kg,
                            config.recommender, config.rec_train())
    clf = train_turn_classifier(train_inj, config.classifier,
                                config.lm_train(epochs=config.train.classifier_epochs))
    return dial, plain, rec, clf


def train_student_variant(world: World, config: ExperimentConfig, variant: str,
                          dial_teacher: Seq2SeqLM | None,
                          plain_teacher: Seq2SeqLM | None,
                          rec_model: RecommenderModel | None,
                          seed: int | None = None) -> tuple[Seq2SeqLM, GateTrace, bool]:
    """Train one ablation-grid student. Returns (student, trace, uses_st)."""
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    seed = config.seed if seed is None else seed
    distill = dataclasses.replace(config.distill)
    uses_st = variant == "both_st"
    distill.use_special_tokens = uses_st
    if variant == "vanilla":
        distill.gamma = 0.0
        distill.use_dialogue_teacher = False
        distill.use_rec_teacher = False
    elif variant == "dial_only":
        distill.use_rec_teacher = False
    elif variant == "rec_only":
        distill.use_dialogue_teacher = False
    elif variant == "fixed_gate":
        distill.gate = "fixed"
        distill.fixed_value = 0.5
    corpus = world.injected if uses_st else world.plain
    train, _, _ = split_corpus(corpus, config.split.train_frac, config.split.val_frac)
    teacher = dial_teacher if uses_st else plain_teacher
    rec_session = RecEvalSession(rec_model) if (
        rec_model is not None and distill.use_rec_teacher) else None
    lm_cfg = config.lm_train(epochs=config.train.student_epochs, seed=seed)
    student, trace = train_student(train, teacher, rec_session, config.lm,
                                   lm_cfg, distill)
    return student, trace, uses_st


def rec_rankings(session: RecEvalSession, corpus: DialogueCorpus, k_max: int = 50,
                 ) -> list[tuple[list[int], list[int]]]:
    """Per recommendation turn: (module top-k_max ranking, gold mentions)."""
    vocab = corpus.vocab
    out = []
    for dlg in corpus.dialogues:
        for ti, turn in enumerate(dlg.turns):
            if turn.speaker != "agent":
                continue
            golds = turn.item_mentions(vocab)
            if not golds:
                continue
            ranked = session.topk(dlg.turns[:ti], min(k_max, vocab.n_items))
            out.append((ranked, golds))
    return out


def evaluate_student(student: Seq2SeqLM, world: World, config: ExperimentConfig,
                     rec_model: RecommenderModel | None = None,
                     classifier: TurnClassifier | None = None,
                     dialogue_teacher: Seq2SeqLM | None = None,
                     uses_special_tokens: bool = True,
                     ) -> tuple[MetricReport, list]:
    """Full metric report on the held-out test split."""
    corpus = world.injected if uses_special_tokens else world.plain
    _, _, test = split_corpus(corpus, config.split.train_frac, config.split.val_frac)
    decode = dataclasses.replace(config.decode, seed=config.seed)
    records = generate_records(student, test, decode,
                               classifier=classifier if uses_special_tokens else None,
                               k_max=max(config.eval.ks))
    r_at_k = None
    if rec_model is not None:
        session = RecEvalSession(rec_model)
        rankings = rec_rankings(session, test, k_max=max(config.eval.ks))
        r_at_k = {k: recall_at_k(rankings, k) for k in config.eval.ks}
    ppl = perplexity(student, test)
    report = compute_metric_report(records, world.vocab, ks=config.eval.ks,
                                   ppl=ppl, r_at_k=r_at_k)
    for k in config.eval.ks:
        report.relaxed_f1_at_k[k] = relaxed_response_metrics(
            records, world.item_kg, world.vocab, k)["f1"]
    if rec_model is not None:
        from .dialogue import build_lm_samples
        samples = build_lm_samples(test, student.config.max_len)
        k_cap = min(max(config.eval.ks) + 4, world.vocab.n_items)
        per_record = [session.topk(s.history, k_cap) for s in samples]
        refilled = refill_records(records, per_record, world.vocab)
        for k in config.eval.ks:
            report.refill_f1_at_k[k] = response_metrics(refilled, k)["f1"]
    if dialogue_teacher is not None:
        report.lambda_rec, report.lambda_other = gate_diagnostics(dialogue_teacher,
                                                                  test)
    return report, records


def run_full_experiment(config: ExperimentConfig, world: World | None = None,
                        ) -> dict:
    """gen-data -> train teachers, classifier, student -> evaluate.

    Returns a JSON-ready summary including the metric report, gate
    diagnostics, and the recommendation/response mismatch table.
    """
    if world is None:
        world = world_from_synthetic(config)
    dial, _, rec, clf = train_teachers(world, config)
    student, trace, uses_st = train_student_variant(
        world, config, "both_st" if config.distill.use_special_tokens else "both",
        dial, None, rec)
    report, _ = evaluate_student(student, world, config, rec_model=rec,
                                 classifier=clf, dialogue_teacher=dial,
                                 uses_special_tokens=uses_st)
    mm = mismatch_report(report.r_at_k, report.rer_at_k) if report.r_at_k else {}
    return {"report": report.to_json(),
            "mismatch": {str(k): v for k, v in mm.items()},
            "gate_trace_summary": trace.summary()}
