"""Experiment CLI: data generation, training, evaluation, ablations,
benchmarking, and the chat service."""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from .checkpoint import (
    load_classifier,
    load_lm,
    load_recommender,
    save_classifier,
    save_lm,
    save_recommender,
)
from .config import ExperimentConfig, load_config
from .data import learnability_violations
from .dialogue import train_dialogue_model
from .distill import train_student, train_turn_classifier
from .metrics import (
    format_metric_table,
    latency_bench,
    mismatch_report,
    save_records_jsonl,
)
from .pipeline import (
    ABLATION_VARIANTS,
    evaluate_student,
    load_world,
    rec_rankings,
    split_corpus,
    train_student_variant,
    write_data_files,
)
from .recommender import RecEvalSession, train_recommender


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load(ctx) -> ExperimentConfig:
    try:
        return load_config(ctx.obj.get("config"), seed=ctx.obj.get("seed"),
                           out_dir=ctx.obj.get("out"))
    except Exception as e:  # noqa: BLE001 - single-line CLI error contract
        _fail(f"config: {e}")


@click.group()
@click.option("--config", type=click.Path(), default=None,
              help="YAML or JSON experiment config.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default=None,
              help="Override the output directory.")
@click.pass_context
def main(ctx, config, seed, out):
    """Unified conversational recommendation via gated two-teacher
    knowledge distillation."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, seed=seed, out=out)


def _command(fn):
    """Wrap a command body with the single-line error contract."""
    def runner(ctx, *args, **kwargs):
        try:
            fn(ctx, *args, **kwargs)
        except SystemExit:
            raise
        except Exception as e:  # noqa: BLE001
            _fail(str(e))
    runner.__name__ = fn.__name__
    runner.__doc__ = fn.__doc__
    return click.pass_context(runner)


@main.command("gen-data")
@_command
def gen_data(ctx):
    """Generate the synthetic corpus, knowledge graphs, and catalog."""
    cfg = _load(ctx)
    data = write_data_files(cfg)
    bad = learnability_violations(data)
    if bad:
        raise RuntimeError(f"generator produced unreachable gold items: {bad[:3]}")
    n_turns = sum(len(d["turns"]) for d in data.raw_dialogues)
    click.echo(f"wrote {len(data.raw_dialogues)} dialogues ({n_turns} turns), "
               f"{len(data.catalog)} items to {cfg.out_dir}")


@main.command("train-rec")
@_command
def train_rec(ctx):
    """Train the recommendation teacher."""
    cfg = _load(ctx)
    world = load_world(cfg)
    train, _, _ = split_corpus(world.injected, cfg.split.train_frac,
                               cfg.split.val_frac)
    model = train_recommender(train, world.item_kg, world.word_kg,
                              cfg.recommender, cfg.rec_train())
    path = cfg.checkpoint_path("recommender")
    save_recommender(path, model)
    click.echo(f"saved {path}")


@main.command("train-dial")
@click.option("--plain", is_flag=True,
              help="Train on the corpus without [REC]/[GEN] prefixes.")
@_command
def train_dial(ctx, plain):
    """Train the dialogue teacher."""
    cfg = _load(ctx)
    world = load_world(cfg)
    corpus = world.plain if plain else world.injected
    train, _, _ = split_corpus(corpus, cfg.split.train_frac, cfg.split.val_frac)
    model = train_dialogue_model(train, cfg.lm, cfg.lm_train())
    name = "dialogue_plain" if plain else "dialogue"
    path = cfg.checkpoint_path(name)
    save_lm(path, model, kind="dialogue")
    click.echo(f"saved {path}")


@main.command("train-classifier")
@_command
def train_classifier(ctx):
    """Train the [REC]/[GEN] turn classifier."""
    cfg = _load(ctx)
    world = load_world(cfg)
    train, _, _ = split_corpus(world.injected, cfg.split.train_frac,
                               cfg.split.val_frac)
    clf = train_turn_classifier(train, cfg.classifier,
                                cfg.lm_train(epochs=cfg.train.classifier_epochs))
    path = cfg.checkpoint_path("classifier")
    save_classifier(path, clf)
    click.echo(f"saved {path}")


@main.command("train-student")
@_command
def train_student_cmd(ctx):
    """Distill both teachers into the student."""
    cfg = _load(ctx)
    world = load_world(cfg)
    corpus = world.injected if cfg.distill.use_special_tokens else world.plain
    train, _, _ = split_corpus(corpus, cfg.split.train_frac, cfg.split.val_frac)
    dial = None
    if cfg.distill.use_dialogue_teacher and cfg.distill.gamma > 0:
        name = "dialogue" if cfg.distill.use_special_tokens else "dialogue_plain"
        dial, _ = load_lm(cfg.checkpoint_path(name), world.vocab)
    rec_session = None
    if cfg.distill.use_rec_teacher and cfg.distill.gamma > 0:
        rec = load_recommender(cfg.checkpoint_path("recommender"), world.vocab,
                               world.item_kg, world.word_kg)
        rec_session = RecEvalSession(rec)
    student, trace = train_student(train, dial, rec_session, cfg.lm,
                                   cfg.lm_train(epochs=cfg.train.student_epochs),
                                   cfg.distill)
    path = cfg.checkpoint_path("student")
    save_lm(path, student, kind="student", distill_config=cfg.distill)
    trace_path = Path(cfg.out_dir) / "gate_trace.jsonl"
    if trace.entries:
        trace.to_jsonl(trace_path)
    click.echo(f"saved {path} (gate summary: {trace.summary()})")


@main.command("evaluate")
@click.option("--student", "student_path", type=click.Path(), default=None)
@_command
def evaluate(ctx, student_path):
    """Evaluate the student on the held-out test split."""
    cfg = _load(ctx)
    world = load_world(cfg)
    path = student_path or cfg.checkpoint_path("student")
    student, ckpt = load_lm(path, world.vocab)
    uses_st = bool(ckpt.config.get("distill", {}).get("use_special_tokens", True))
    classifier = None
    clf_path = Path(cfg.checkpoint_path("classifier"))
    if uses_st and clf_path.exists():
        classifier = load_classifier(clf_path, world.vocab)
    rec = None
    rec_path = Path(cfg.checkpoint_path("recommender"))
    if rec_path.exists():
        rec = load_recommender(rec_path, world.vocab, world.item_kg, world.word_kg)
    dial = None
    dial_path = Path(cfg.checkpoint_path("dialogue"))
    if dial_path.exists():
        dial, _ = load_lm(dial_path, world.vocab)
    report, records = evaluate_student(student, world, cfg, rec_model=rec,
                                       classifier=classifier, dialogue_teacher=dial,
                                       uses_special_tokens=uses_st)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"report": report.to_json()}
    if report.r_at_k:
        mm = mismatch_report(report.r_at_k, report.rer_at_k)
        payload["mismatch"] = {str(k): v for k, v in mm.items()}
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    save_records_jsonl(records, out / "records.jsonl")
    table = format_metric_table(report, label="student")
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    click.echo(table)
    if report.r_at_k:
        for k, row in payload["mismatch"].items():
            pct = row["relative_decrease_pct"]
            pct_s = f"{pct:.2f}%" if pct is not None else "n/a"
            click.echo(f"mismatch@{k}: R={row['r_at_k']:.3f} "
                       f"ReR={row['rer_at_k']:.3f} decrease={pct_s}")


@main.command("ablate")
@click.option("--variants", default=",".join(ABLATION_VARIANTS),
              help="Comma-separated subset of: " + ", ".join(ABLATION_VARIANTS))
@click.option("--seeds", default="0", help="Comma-separated student seeds.")
@_command
def ablate(ctx, variants, seeds):
    """Train and evaluate the ablation grid."""
    cfg = _load(ctx)
    world = load_world(cfg)
    wanted = [v.strip() for v in variants.split(",") if v.strip()]
    seed_list = [int(s) for s in seeds.split(",")]
    for v in wanted:
        if v not in ABLATION_VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    train_inj, _, _ = split_corpus(world.injected, cfg.split.train_frac,
                                   cfg.split.val_frac)
    train_plain, _, _ = split_corpus(world.plain, cfg.split.train_frac,
                                     cfg.split.val_frac)
    dial = train_dialogue_model(train_inj, cfg.lm, cfg.lm_train())
    plain_teacher = train_dialogue_model(train_plain, cfg.lm, cfg.lm_train())
    rec = train_recommender(train_inj, world.item_kg, world.word_kg,
                            cfg.recommender, cfg.rec_train())
    clf = train_turn_classifier(train_inj, cfg.classifier,
                                cfg.lm_train(epochs=cfg.train.classifier_epochs))
    results = {}
    for variant in wanted:
        f1s, ppls, ratios = [], [], []
        for seed in seed_list:
            student, _, uses_st = train_student_variant(
                world, cfg, variant, dial, plain_teacher, rec, seed=seed)
            rep, _ = evaluate_student(student, world, cfg,
                                      classifier=clf if uses_st else None,
                                      uses_special_tokens=uses_st)
            f1s.append(rep.f1_at_k[1])
            ppls.append(rep.ppl)
            ratios.append(rep.rec_ratio)
        results[variant] = {"f1_at_1": float(np.mean(f1s)),
                            "ppl": float(np.mean(ppls)),
                            "rec_ratio": float(np.mean(ratios)),
                            "seeds": seed_list}
        click.echo(f"{variant:11s} F1@1={results[variant]['f1_at_1']:.4f} "
                   f"PPL={results[variant]['ppl']:.3f} "
                   f"RecRatio={results[variant]['rec_ratio']:.3f}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.json", "w", encoding="utf-8") as f:
        json.dump(results, f, indent=2, sort_keys=True)
    click.echo(f"wrote {out / 'ablation.json'}")


@main.command("bench")
@click.option("--student", "student_path", type=click.Path(), default=None)
@click.option("--min-tokens", type=int, default=1000)
@_command
def bench(ctx, student_path, min_tokens):
    """Benchmark per-token generation latency."""
    cfg = _load(ctx)
    world = load_world(cfg)
    path = student_path or cfg.checkpoint_path("student")
    student, _ = load_lm(path, world.vocab)
    _, _, test = split_corpus(world.injected, cfg.split.train_frac,
                              cfg.split.val_frac)
    from .dialogue import build_lm_samples
    histories = [s.enc for s in build_lm_samples(test, cfg.lm.max_len)][:50]
    if not histories:
        raise ValueError("no evaluation histories available")
    result = latency_bench(student, histories,
                           dataclasses.replace(cfg.decode, max_new_tokens=16),
                           min_tokens=min_tokens)
    click.echo(result["formatted"])


@main.command("serve")
@click.option("--port", type=int, default=8008)
@click.option("--host", default="127.0.0.1")
@click.option("--with-recommender", is_flag=True,
              help="Load the recommender for annotation of chit-chat turns.")
@_command
def serve(ctx, port, host, with_recommender):
    """Serve the student behind the HTTP chat API."""
    import uvicorn

    from .distill import DistillConfig
    from .service import ServeState, create_app

    cfg = _load(ctx)
    world = load_world(cfg)
    student, ckpt = load_lm(cfg.checkpoint_path("student"), world.vocab)
    classifier = load_classifier(cfg.checkpoint_path("classifier"), world.vocab)
    rec_session = None
    if with_recommender:
        rec = load_recommender(cfg.checkpoint_path("recommender"), world.vocab,
                               world.item_kg, world.word_kg)
        rec_session = RecEvalSession(rec)
    distill_echo = ckpt.config.get("distill")
    distill = DistillConfig(**distill_echo) if distill_echo else cfg.distill
    state = ServeState(vocab=world.vocab, catalog=world.catalog, student=student,
                       classifier=classifier, distill=distill, decode=cfg.decode,
                       rec_session=rec_session)
    click.echo(f"serving on http://{host}:{port}")
    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")


@main.command("chat")
@click.option("--url", default="http://127.0.0.1:8008")
@click.option("--message", default=None,
              help="Send one message and print the reply (non-interactive).")
@_command
def chat(ctx, url, message):
    """Thin HTTP client for a running chat service."""
    import httpx

    with httpx.Client(base_url=url, timeout=60.0) as client:
        session_id = client.post("/sessions").json()["session_id"]

        def send(text: str):
            r = client.post(f"/sessions/{session_id}/messages",
                            json={"text": text})
            r.raise_for_status()
            body = r.json()
            click.echo(f"agent [{body['classifier_decision']}]: {body['text']}")
            for item in body["items"]:
                click.echo(f"  #{item['rank']} {item['title']} "
                           f"(score {item['score']:.3f})")

        if message is not None:
            send(message)
            return
        click.echo("type a message ('quit' to exit)")
        while True:
            try:
                line = input("you: ").strip()
            except EOFError:
                break
            if not line or line.lower() in ("quit", "exit"):
                break
            send(line)


if __name__ == "__main__":
    main()
