"""Accuracy-cost trade-off (ACT) scoring for mode-controlled models."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidBaseline, ParseError, RaggedOutcomes, UnitMismatch, ValidationError

UNITS = ("fraction", "percent")

# Weight on accuracy retention; the rest goes to compression.
BETA = {"high": 1.0, "medium": 0.5, "low": 0.5}
MODE_ORDER = ("low", "medium", "high")


def _mode_key(mode) -> str:
    key = getattr(mode, "value", mode)
    key = str(key).lower()
    if key not in BETA:
        raise ParseError(f"unknown mode {mode!r}")
    return key


@dataclass(frozen=True)
class ModeMeasurement:
    mode: str
    accuracy: float
    cost: float
    unit: str = "fraction"
    benchmark: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mode", _mode_key(self.mode))
        if self.unit not in UNITS:
            raise ValidationError(f"unit must be one of {UNITS}", "unit")
        if not self.cost > 0:
            raise ValidationError("cost must be positive", "cost")
        if not np.isfinite(self.accuracy):
            raise ValidationError("accuracy must be finite", "accuracy")


@dataclass(frozen=True)
class BaselineMeasurement:
    accuracy_base: float
    cost_base: float
    unit: str = "fraction"

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ValidationError(f"unit must be one of {UNITS}", "unit")


def retention_and_compression(m: ModeMeasurement, base: BaselineMeasurement) -> tuple:
    """Return ``(acc / acc_base, 1 - cost / cost_base)``.

    Retention is not capped at 1; compression goes negative when the mode
    costs more than the baseline.
    """
    if not (base.accuracy_base > 0 and base.cost_base > 0):
        raise InvalidBaseline("baseline accuracy and cost must be positive")
    if m.unit != base.unit:
        raise UnitMismatch(f"measurement in {m.unit} but baseline in {base.unit}")
    return m.accuracy / base.accuracy_base, 1.0 - m.cost / base.cost_base


def mode_score(retention: float, compression: float, mode) -> float:
    beta = BETA[_mode_key(mode)]
    return beta * retention + (1.0 - beta) * compression


def act_score(scores: Sequence[float]) -> float:
    scores = list(scores)
    if len(scores) != 3:
        raise ValidationError(f"need exactly three mode scores, got {len(scores)}", "scores")
    return sum(scores) / 3


def aggregate_accuracy(outcomes: Sequence[Sequence[int]], repeats: int) -> float:
    """Mean over problems of the per-problem mean over ``repeats`` samples."""
    if not outcomes:
        raise RaggedOutcomes("no problems")
    for i, row in enumerate(outcomes):
        if len(row) != repeats:
            raise RaggedOutcomes(f"problem {i} has {len(row)} outcomes, expected {repeats}")
    return float(np.mean([np.mean(row) for row in outcomes]))


@dataclass
class ACTReport:
    benchmark: str
    retention: dict = field(default_factory=dict)
    compression: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    s_act: float = 0.0

    def to_json(self) -> dict:
        # Full precision internally; the *_pct fields are display values.
        return {
            "benchmark": self.benchmark,
            "retention": {m: self.retention[m] for m in MODE_ORDER},
            "compression": {m: self.compression[m] for m in MODE_ORDER},
            "scores": {m: self.scores[m] for m in MODE_ORDER},
            "s_act": self.s_act,
            "scores_pct": {m: round(100 * self.scores[m], 1) for m in MODE_ORDER},
            "s_act_pct": round(100 * self.s_act, 1),
        }


def build_report(
    measurements: Sequence[ModeMeasurement], base: BaselineMeasurement, benchmark: str = ""
) -> ACTReport:
    by_mode = {}
    for m in measurements:
        if m.mode in by_mode:
            raise ValidationError(f"duplicate measurement for mode {m.mode}", benchmark or "report")
        by_mode[m.mode] = m
    missing = [m for m in MODE_ORDER if m not in by_mode]
    if missing:
        raise ValidationError(f"missing modes {missing}", benchmark or "report")
    report = ACTReport(benchmark)
    for mode in MODE_ORDER:
        a, c = retention_and_compression(by_mode[mode], base)
        report.retention[mode] = a
        report.compression[mode] = c
        report.scores[mode] = mode_score(a, c, mode)
    report.s_act = act_score(report.scores[m] for m in MODE_ORDER)
    return report


def build_reports(
    measurements: Sequence[ModeMeasurement],
    baselines: Mapping[str, BaselineMeasurement],
) -> list:
    """One report per benchmark, in first-seen order."""
    grouped: dict = {}
    for m in measurements:
        grouped.setdefault(m.benchmark, []).append(m)
    reports = []
    for bench, items in grouped.items():
        base = baselines.get(bench, baselines.get("*"))
        if base is None:
            raise ValidationError(f"no baseline for benchmark {bench!r}", "baseline")
        reports.append(build_report(items, base, bench))
    return reports


def scatter_csv(measurements: Sequence[ModeMeasurement], reports: Sequence[ACTReport]) -> str:
    """Plot-ready rows of accuracy against cost for each benchmark and mode."""
    lookup = {r.benchmark: r for r in reports}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["benchmark", "mode", "accuracy", "cost", "retention", "compression", "score"])
    for m in measurements:
        r = lookup[m.benchmark]
        writer.writerow([m.benchmark, m.mode, repr(m.accuracy), repr(m.cost),
                         repr(r.retention[m.mode]), repr(r.compression[m.mode]),
                         repr(r.scores[m.mode])])
    return buf.getvalue()
