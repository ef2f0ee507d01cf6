import json

import pytest

from conftest import make_corpus
from budgetmode.cli import run_subcommand
from budgetmode.config import CONFIG_ENV_VAR, RunConfig, config_from_dict, load_config
from budgetmode.errors import ParseError, ValidationError
from budgetmode.traces import write_jsonl

SMALL_TRAIN = """\
dapo:
  warmup_steps: 2
  budget_steps: 2
  tasks_per_step: 2
  group_size: 4
  eval_samples: 1
environment:
  n_tasks: 4
"""


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("", encoding="utf-8")
    cfg = load_config(p)
    assert cfg == RunConfig()
    assert (cfg.truncation.r_med, cfg.truncation.r_low) == (0.5, 0.25)
    assert (cfg.reward.alpha_high, cfg.reward.alpha_med, cfg.reward.alpha_low) == (0.0, 0.5, 1.0)
    assert (cfg.dapo.eps_low, cfg.dapo.eps_high, cfg.dapo.group_size) == (0.2, 0.28, 16)


@pytest.mark.parametrize("data,path", [
    ({"truncation": {"r_low": 0.6, "r_med": 0.5}}, "truncation.r_low"),
    ({"reward": {"alpha_xl": 2.0}}, "reward.alpha_xl"),
    ({"bogus": 1}, "bogus"),
    ({"dapo": {"group_size": "big"}}, "dapo.group_size"),
    ({"dapo": {"eps_low": 0.5}}, "dapo.eps_low"),
    ({"reward": {"alpha_low": -1}}, "reward.alpha_low"),
    ({"construct": {"tokenizer": "bpe"}}, "construct.tokenizer"),
    ({"environment": {"init_stop_prob": 1.5}}, "environment.init_stop_prob"),
    ({"seed": True}, "seed"),
    ({"dapo": []}, "dapo"),
])
def test_validation_paths(data, path):
    with pytest.raises(ValidationError) as info:
        config_from_dict(data)
    assert info.value.path == path


def test_round_trip_and_digest(tmp_path):
    cfg = config_from_dict({"seed": 3, "reward": {"leak_keywords": ["Hmm"]}, "dapo": {"dynamic_sampling": [False, False]}})
    p = tmp_path / "c.yaml"
    p.write_text(cfg.dumps(), encoding="utf-8")
    again = load_config(p)
    assert again == cfg
    assert again.digest() == cfg.digest() != RunConfig().digest()


def test_env_var_and_parse_error(tmp_path, monkeypatch):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 11\n", encoding="utf-8")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(p))
    assert load_config().seed == 11
    monkeypatch.delenv(CONFIG_ENV_VAR)
    assert load_config() == RunConfig()
    p.write_text("seed: [1\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_config(p)


@pytest.fixture
def inputs(tmp_path):
    records, refs = make_corpus(40)
    write_jsonl(tmp_path / "traces.jsonl", (r.to_json() for r in records))
    write_jsonl(tmp_path / "refs.jsonl", ({"id": k, "answer": v} for k, v in refs.items()))
    return tmp_path


def declared(out_dir, manifest="run_manifest.json"):
    man = json.loads((out_dir / manifest).read_text(encoding="utf-8"))
    return man, {o["path"] for o in man["outputs"]}


def test_construct(inputs):
    out = inputs / "a"
    argv = ["construct", "--input", str(inputs / "traces.jsonl"), "--answers", str(inputs / "refs.jsonl"),
            "--r-med", "0.5", "--r-low", "0.25", "--seed", "2"]
    assert run_subcommand(argv + ["--out", str(out)]) == 0
    man, files = declared(out)
    on_disk = {p.name for p in out.iterdir()} - {"run_manifest.json"}
    assert files == on_disk == {"sft_high.jsonl", "sft_medium.jsonl", "sft_low.jsonl", "manifest.json"}
    assert man["seed"] == 2 and len(man["config_hash"]) == 64
    row = json.loads((out / "sft_low.jsonl").read_text(encoding="utf-8").splitlines()[0])
    assert set(row) == {"id", "mode", "system_prompt", "query", "target_raw_text"}
    assert json.loads((out / "manifest.json").read_text())["counts"] == {"high": 40, "medium": 40, "low": 40}

    assert run_subcommand(argv + ["--out", str(inputs / "b"), "--threads", "3"]) == 0
    for name in files:
        assert (out / name).read_bytes() == (inputs / "b" / name).read_bytes()


def test_construct_empty_corpus(inputs, capsys):
    (inputs / "empty.jsonl").write_text("", encoding="utf-8")
    code = run_subcommand(["construct", "--input", str(inputs / "empty.jsonl"),
                           "--answers", str(inputs / "refs.jsonl"), "--out", str(inputs / "e")])
    err = json.loads(capsys.readouterr().err)
    assert code != 0 and code == err["exit_status"] == 3
    assert err["error"] == "empty_corpus"


def test_construct_bad_ratio_is_validation(inputs, capsys):
    code = run_subcommand(["construct", "--input", str(inputs / "traces.jsonl"), "--answers",
                           str(inputs / "refs.jsonl"), "--out", str(inputs / "e"), "--r-low", "0.7"])
    assert code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "validation_error"


def test_missing_input_is_io(inputs, capsys):
    code = run_subcommand(["score", "--traces", str(inputs / "nope.jsonl"), "--answers", str(inputs / "refs.jsonl")])
    assert code == 4
    assert json.loads(capsys.readouterr().err)["error"] == "io_error"


def test_score(inputs, capsys):
    traces = inputs / "group.jsonl"
    rows = [
        {"id": "a", "query_id": "q1", "mode": "low", "raw_text": "<think>x y</think>\\boxed{5}"},
        {"id": "b", "query_id": "q1", "mode": "low", "raw_text": "<think>x y z w</think>Wait \\boxed{5}"},
        {"id": "c", "query_id": "q1", "mode": "low", "raw_text": "<think>x</think>\\boxed{4}"},
    ]
    write_jsonl(traces, rows)
    write_jsonl(inputs / "qrefs.jsonl", [{"id": "q1", "answer": "5"}])
    out = inputs / "scores.jsonl"
    assert run_subcommand(["score", "--traces", str(traces), "--answers", str(inputs / "qrefs.jsonl"),
                           "--out", str(out)]) == 0
    got = [json.loads(line) for line in out.read_text().splitlines()]
    assert [(g["id"], g["task"], g["lambda"], g["leak"], g["total"]) for g in got] == [
        ("a", 1, 0.25, 0.5, 1.75), ("b", 1, -0.5, -0.5, 0.0), ("c", 0, 0.5, 0.5, 0.5)]
    _, files = declared(inputs, "scores.run_manifest.json")
    assert files == {"scores.jsonl"}

    assert run_subcommand(["score", "--traces", str(traces), "--answers", str(inputs / "qrefs.jsonl")]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_train_toy_determinism(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL_TRAIN, encoding="utf-8")
    for name in ("a", "b"):
        assert run_subcommand(["train-toy", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / name)]) == 0
    man_a, files = declared(tmp_path / "a")
    man_b, _ = declared(tmp_path / "b")
    assert files == {p.name for p in (tmp_path / "a").iterdir()} - {"run_manifest.json"}
    assert {o["path"]: o["sha256"] for o in man_a["outputs"]} == {o["path"]: o["sha256"] for o in man_b["outputs"]}
    steps = (tmp_path / "a" / "log.jsonl").read_text().splitlines()
    assert len(steps) == 4 and json.loads(steps[0])["phase"] == 1

    assert run_subcommand(["train-toy", "--config", str(cfg), "--seed", "7", "--no-leak-penalty",
                           "--out", str(tmp_path / "c")]) == 0
    meta = json.loads((tmp_path / "c" / "metadata.json").read_text())
    assert meta["reward"]["leak_enabled"] is False


def test_report_table_fixture(tmp_path):
    rows = [
        {"benchmark": "GSM8K", "mode": "low", "accuracy": 0.993, "cost": 0.007},
        {"benchmark": "GSM8K", "mode": "medium", "accuracy": 0.987, "cost": 0.013},
        {"benchmark": "GSM8K", "mode": "high", "accuracy": 1.008, "cost": 0.5},
    ]
    write_jsonl(tmp_path / "m.jsonl", rows)
    (tmp_path / "b.json").write_text(json.dumps({"GSM8K": {"accuracy": 1.0, "cost": 1.0}}))
    out = tmp_path / "r" / "report.json"
    assert run_subcommand(["report", "--measurements", str(tmp_path / "m.jsonl"),
                           "--baseline", str(tmp_path / "b.json"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())["reports"][0]
    assert rep["s_act_pct"] == 99.6
    _, files = declared(out.parent, "report.run_manifest.json")
    assert files == {"report.json", "report.csv"}


def test_report_bad_baseline(tmp_path, capsys):
    write_jsonl(tmp_path / "m.jsonl", [{"mode": "low", "accuracy": 0.5, "cost": 1.0}])
    (tmp_path / "b.json").write_text(json.dumps({"accuracy": 0.0, "cost": 1.0}))
    code = run_subcommand(["report", "--measurements", str(tmp_path / "m.jsonl"),
                           "--baseline", str(tmp_path / "b.json"), "--out", str(tmp_path / "r.json")])
    assert code == 2
    assert json.loads(capsys.readouterr().err)["error"] in ("validation_error", "invalid_baseline")
