"""Command-line front end: construct, score, train-toy, report."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .act import BaselineMeasurement, ModeMeasurement, build_reports, scatter_csv
from .config import RunConfig, load_config
from .dapo import run_two_phase
from .errors import EXIT_IO, EXIT_RUNTIME, BudgetModeError, ParseError, ValidationError
from .rewards import composite_reward, group_length_range, load_keywords
from .sft import build_dataset
from .traces import MODES, Tokenizer, iter_jsonl, read_traces, write_jsonl


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunManifest:
    """Records config hash, seed, versions and every file a run wrote."""

    def __init__(self, command: str, cfg: RunConfig, seed: int, root: Path):
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.root = root
        self.started = _now()
        self.outputs: list = []

    def write_text(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.outputs.append(path)

    def write_jsonl(self, path: Path, records) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_jsonl(path, records)
        self.outputs.append(path)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.cfg.digest(),
            "config": self.cfg.to_dict(),
            "seed": self.seed,
            "versions": {
                "budgetmode": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "started": self.started,
            "finished": _now(),
            "outputs": [
                {"path": _rel(p, self.root), "sha256": _sha256(p), "bytes": p.stat().st_size}
                for p in self.outputs
            ],
        }

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _rel(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return path.as_posix()


def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "threads", None) is not None:
        cfg = dataclasses.replace(cfg, threads=args.threads)
    return cfg


def _reward_cfg(cfg: RunConfig):
    reward = cfg.reward
    if cfg.construct.keywords_file:
        reward = dataclasses.replace(reward, leak_keywords=load_keywords(cfg.construct.keywords_file))
    return reward


def _answers(path) -> dict:
    out = {}
    for obj in iter_jsonl(path):
        if "id" not in obj or "answer" not in obj:
            raise ParseError(f"{path}: answer records need 'id' and 'answer'")
        out[str(obj["id"])] = str(obj["answer"])
    return out


def cmd_construct(args) -> int:
    cfg = _config(args)
    trunc = cfg.truncation
    if args.r_med is not None or args.r_low is not None:
        trunc = dataclasses.replace(
            trunc,
            r_med=trunc.r_med if args.r_med is None else args.r_med,
            r_low=trunc.r_low if args.r_low is None else args.r_low,
        )
    tok = Tokenizer(cfg.construct.tokenizer)
    records = read_traces(args.input, tok)
    refs = _answers(args.answers)
    samples, manifest = build_dataset(
        records, trunc, references=refs, reward_cfg=_reward_cfg(cfg), tok=tok,
        seed=cfg.seed, tolerance=cfg.construct.balance_tolerance, threads=cfg.threads,
    )
    out = Path(args.out)
    run = RunManifest("construct", dataclasses.replace(cfg, truncation=trunc), cfg.seed, out)
    for mode in MODES:
        run.write_jsonl(out / f"sft_{mode.value}.jsonl", (s.to_json() for s in samples if s.mode is mode))
    run.write_text(out / "manifest.json", json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
    run.save(out / "run_manifest.json")
    return 0


def cmd_score(args) -> int:
    cfg = _config(args)
    reward = _reward_cfg(cfg)
    tok = Tokenizer(cfg.construct.tokenizer)
    records = read_traces(args.traces, tok)
    refs = _answers(args.answers)
    raw = {str(o["id"]): o for o in iter_jsonl(args.traces)}
    groups: dict = {}
    for rec in records:
        key = str(raw[rec.id].get(args.group_by, rec.id))
        groups.setdefault((key, rec.trace.mode), []).append(rec)
    lines = []
    for (key, _), recs in groups.items():
        lens = group_length_range([r.trace for r in recs])
        for rec in recs:
            ref = refs.get(key, refs.get(rec.id))
            if ref is None:
                raise ValidationError(f"no reference answer for {rec.id!r}", "answers")
            br = composite_reward(rec.trace, ref, lens, reward)
            lines.append({"id": rec.id, args.group_by: key, **br.to_json()})
    if args.out:
        out = Path(args.out)
        run = RunManifest("score", cfg, cfg.seed, out.parent)
        run.write_jsonl(out, lines)
        run.save(out.with_name(out.stem + ".run_manifest.json"))
    else:
        sys.stdout.write("".join(json.dumps(line) + "\n" for line in lines))
    return 0


def cmd_train_toy(args) -> int:
    cfg = _config(args)
    if args.no_leak_penalty:
        cfg = dataclasses.replace(cfg, reward=dataclasses.replace(cfg.reward, leak_enabled=False))
    dapo = dataclasses.replace(cfg.dapo, seed=cfg.seed)
    env = cfg.environment.build(_reward_cfg(cfg), seed=cfg.seed)
    policy = cfg.environment.build_policy()
    log = run_two_phase(env, policy, dapo, _reward_cfg(cfg))
    out = Path(args.out)
    run = RunManifest("train-toy", cfg, cfg.seed, out)
    run.write_text(out / "log.jsonl", log.steps_jsonl())
    run.write_text(out / "evals.jsonl", log.evals_jsonl())
    run.write_text(out / "summary.csv", log.summary_csv())
    run.write_text(out / "metadata.json", json.dumps(log.metadata, indent=2, sort_keys=True) + "\n")
    run.write_text(out / "policy.json", json.dumps({"params": policy.params.tolist()}) + "\n")
    run.save(out / "run_manifest.json")
    return 0


def _baselines(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a JSON object")

    def one(obj):
        try:
            return BaselineMeasurement(float(obj["accuracy"]), float(obj["cost"]), obj.get("unit", "fraction"))
        except KeyError as exc:
            raise ParseError(f"{path}: baseline missing {exc.args[0]!r}") from None

    if "accuracy" in data:
        return {"*": one(data)}
    return {str(k): one(v) for k, v in data.items()}


def cmd_report(args) -> int:
    cfg = _config(args)
    measurements = []
    for obj in iter_jsonl(args.measurements):
        try:
            measurements.append(ModeMeasurement(
                mode=obj["mode"], accuracy=float(obj["accuracy"]), cost=float(obj["cost"]),
                unit=obj.get("unit", "fraction"), benchmark=str(obj.get("benchmark", "")),
            ))
        except KeyError as exc:
            raise ParseError(f"{args.measurements}: measurement missing {exc.args[0]!r}") from None
    reports = build_reports(measurements, _baselines(args.baseline))
    out = Path(args.out)
    run = RunManifest("report", cfg, cfg.seed, out.parent)
    body = {"reports": [r.to_json() for r in reports]}
    run.write_text(out, json.dumps(body, indent=2, sort_keys=True) + "\n")
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    run.write_text(csv_path, scatter_csv(measurements, reports))
    run.save(out.with_name(out.stem + ".run_manifest.json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="budgetmode", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", default=None, help="YAML run config (default: $BUDGETMODE_CONFIG)")
        p.add_argument("--threads", type=int, default=None)
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("construct", help="build budget-mode SFT data from full traces")
    p.add_argument("--input", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--r-med", type=float, default=None)
    p.add_argument("--r-low", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("score", help="composite rewards for grouped rollouts")
    p.add_argument("--traces", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--group-by", default="query_id")
    p.add_argument("--out", default=None)
    common(p, seed=False)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("train-toy", help="two-phase training on the toy environment")
    p.add_argument("--out", required=True)
    p.add_argument("--no-leak-penalty", action="store_true")
    common(p)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("report", help="ACT scores from per-mode measurements")
    p.add_argument("--measurements", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    common(p, seed=False)
    p.set_defaults(func=cmd_report)
    return parser


def run_subcommand(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetModeError as exc:
        return _fail(exc.code, str(exc), exc.exit_status)
    except OSError as exc:
        return _fail("io_error", str(exc), EXIT_IO)
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime error record
        return _fail("runtime_error", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)


def _fail(code: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message, "exit_status": status}) + "\n")
    return status


def main(argv=None) -> None:
    sys.exit(run_subcommand(argv))


if __name__ == "__main__":
    main()
