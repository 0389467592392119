import json
import re
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from conkd.cli import main
from conkd.config import config_from_dict, load_config


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = {
        "seed": 3,
        "out_dir": str(root / "run"),
        "synthetic": {"n_dialogues": 60, "n_items": 12, "n_attributes": 3,
                      "turns_range": [4, 6]},
        "lm": {"n_layers": 1, "hidden": 16, "n_heads": 2, "ffn": 32,
               "max_len": 48, "dropout": 0.0},
        "classifier": {"n_layers": 1, "hidden": 16, "n_heads": 2, "ffn": 32,
                       "max_len": 48},
        "recommender": {"hidden": 16},
        "train": {"teacher_epochs": 3, "rec_epochs": 3, "student_epochs": 2,
                  "classifier_epochs": 2},
        "split": {"train_frac": 0.8, "val_frac": 0.0},
        "decode": {"max_new_tokens": 10},
    }
    path = root / "micro.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path), cfg


def _run(args, **kwargs):
    return CliRunner().invoke(main, args, catch_exceptions=False, **kwargs)


def test_config_defaults_and_overrides(micro_config, tmp_path):
    path, raw = micro_config
    cfg = load_config(path)
    assert cfg.seed == 3
    assert cfg.train.batch_size == 32  # defaulted
    assert cfg.distill.eta == 0.3 and cfg.distill.gamma == 0.6
    assert cfg.train.lr == 1e-3 and cfg.train.clip_norm == 1.0
    over = load_config(path, seed=9, out_dir=str(tmp_path))
    assert over.seed == 9 and over.out_dir == str(tmp_path)
    jpath = tmp_path / "c.json"
    jpath.write_text(json.dumps(raw))
    assert load_config(str(jpath)).synthetic.n_items == 12


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown keys"):
        config_from_dict({"train": {"warmup": 5}})
    with pytest.raises(ValueError, match="top-level"):
        config_from_dict({"trainer": {}})


def test_full_cli_flow(micro_config):
    path, raw = micro_config
    out = Path(raw["out_dir"])
    r = _run(["--config", path, "gen-data"])
    assert r.exit_code == 0, r.output
    assert (out / "corpus.jsonl").exists()
    assert (out / "item_kg.jsonl").exists()
    assert (out / "catalog.json").exists()

    for cmd in (["train-rec"], ["train-dial"], ["train-dial", "--plain"],
                ["train-classifier"], ["train-student"]):
        r = _run(["--config", path] + cmd)
        assert r.exit_code == 0, r.output
    for name in ("recommender", "dialogue", "dialogue_plain", "classifier",
                 "student"):
        assert (out / f"{name}.ckpt").exists()

    r = _run(["--config", path, "evaluate"])
    assert r.exit_code == 0, r.output
    assert "ReR@1" in r.output
    report = json.loads((out / "report.json").read_text())
    assert "report" in report and "mismatch" in report
    assert (out / "records.jsonl").exists()
    assert (out / "report.txt").exists()

    r = _run(["--config", path, "bench", "--min-tokens", "120"])
    assert r.exit_code == 0, r.output
    assert re.search(r"\d+\.\d{3} ms/token", r.output)

    r = _run(["--config", path, "ablate", "--variants", "vanilla",
              "--seeds", "3"])
    assert r.exit_code == 0, r.output
    grid = json.loads((out / "ablation.json").read_text())
    assert "vanilla" in grid and "f1_at_1" in grid["vanilla"]


def test_cli_errors_are_single_line_nonzero(micro_config, tmp_path):
    path, raw = micro_config
    runner = CliRunner()
    r = runner.invoke(main, ["--config", str(tmp_path / "absent.yaml"),
                             "gen-data"])
    assert r.exit_code == 1
    err_lines = [l for l in r.output.strip().splitlines() if l]
    assert len(err_lines) == 1 and err_lines[0].startswith("error:")

    empty_out = tmp_path / "nockpt"
    r = runner.invoke(main, ["--config", path, "--out", str(empty_out),
                             "evaluate"])
    assert r.exit_code == 1
    lines = [l for l in r.output.strip().splitlines() if l]
    assert lines[-1].startswith("error:")

    bad = tmp_path / "bad.yaml"
    bad.write_text("train: {warmup: 2}\n")
    r = runner.invoke(main, ["--config", str(bad), "gen-data"])
    assert r.exit_code == 1
    assert "error:" in r.output
