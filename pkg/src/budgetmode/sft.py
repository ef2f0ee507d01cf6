"""Budget-mode SFT corpus construction and the mode-conditioned NLL loss."""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .errors import EmptyCorpus, GeneratorFailure, ValidationError
from .prompts import CONNECTIVE_LOW, CONNECTIVE_MEDIUM, SYSTEM_PROMPTS
from .rewards import ModeRewardConfig, answers_match, detect_leak, extract_boxed, extract_final_answer
from .traces import DEFAULT_TOKENIZER, MODES, Mode, ReasoningTrace, Tokenizer, TraceRecord, count_tokens

CONNECTIVE_SEP = "\n\n"


@dataclass(frozen=True)
class TruncationConfig:
    r_high: float = 1.0
    r_med: float = 0.5
    r_low: float = 0.25
    connective_med: str = CONNECTIVE_MEDIUM
    connective_low: str = CONNECTIVE_LOW

    def __post_init__(self):
        if self.r_high != 1.0:
            raise ValidationError("r_high must be 1.0", "truncation.r_high")
        if not 0 <= self.r_low < self.r_med <= self.r_high:
            raise ValidationError(
                f"need 0 <= r_low < r_med <= r_high, got r_low={self.r_low}, r_med={self.r_med}",
                "truncation.r_low",
            )

    def ratio(self, mode: Mode) -> float:
        return {Mode.HIGH: self.r_high, Mode.MEDIUM: self.r_med, Mode.LOW: self.r_low}[mode]

    def connective(self, mode: Mode) -> str:
        return {Mode.HIGH: "", Mode.MEDIUM: self.connective_med, Mode.LOW: self.connective_low}[mode]


@dataclass(frozen=True)
class SftSample:
    id: str
    query: str
    mode: Mode
    system_prompt: str
    target: ReasoningTrace
    retained: bool = True

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "mode": self.mode.value,
            "system_prompt": self.system_prompt,
            "query": self.query,
            "target_raw_text": self.target.raw_text,
        }


@dataclass
class DatasetManifest:
    counts: dict
    mean_thinking_tokens: dict
    balance_ratio: tuple
    tolerance: float = 1.05
    rejected: dict = field(default_factory=dict)

    @property
    def balanced(self) -> bool:
        lo, hi = min(self.counts.values()), max(self.counts.values())
        return lo > 0 and hi / lo <= self.tolerance

    def to_json(self) -> dict:
        return {
            "counts": {m.value: self.counts[m] for m in MODES},
            "mean_thinking_tokens": {m.value: self.mean_thinking_tokens[m] for m in MODES},
            "balance_ratio": list(self.balance_ratio),
            "balanced": self.balanced,
            "tolerance": self.tolerance,
            "rejected": {m.value: self.rejected.get(m, 0) for m in MODES},
        }


def retained_count(n: int, ratio: float) -> int:
    # Decimal reading of the ratio, so 0.29 * 100 keeps 29 rather than 28.
    return math.floor(Fraction(repr(float(ratio))) * n)


def truncate_thinking(
    trace: ReasoningTrace,
    mode: Mode,
    cfg: TruncationConfig = TruncationConfig(),
    tok: Tokenizer = DEFAULT_TOKENIZER,
) -> ReasoningTrace:
    """Keep the first ``floor(r * n)`` thinking tokens and append the connective.

    High mode returns the trace unchanged. Other modes return an empty
    answer, to be regenerated.
    """
    mode = Mode.parse(mode)
    if mode is Mode.HIGH:
        return trace.replace(mode=mode, tok=tok)
    keep = retained_count(count_tokens(trace.thinking, tok), cfg.ratio(mode))
    if tok.scheme == "external":
        kept = " ".join(tok.tokens(trace.thinking)[:keep])
    elif keep == 0:
        kept = ""
    else:
        kept = trace.thinking[: tok.spans(trace.thinking)[keep - 1][1]]
    connective = cfg.connective(mode)
    thinking = kept + CONNECTIVE_SEP + connective if kept else connective
    return ReasoningTrace.build(thinking, "", mode, tok,
                                open_marker=trace.open_marker, close_marker=trace.close_marker)


class AnswerGenerator(Protocol):
    def __call__(self, truncated: ReasoningTrace, source: ReasoningTrace) -> str: ...


def copy_final_answer(truncated: ReasoningTrace, source: ReasoningTrace) -> str:
    """Deterministic stand-in for model regeneration: reuse the source's final answer."""
    boxed = extract_boxed(source.answer)
    if boxed is not None:
        return boxed
    final = extract_final_answer(source.answer)
    return "" if final is None else final


def regenerate_answer(
    truncated: ReasoningTrace,
    generator: AnswerGenerator = copy_final_answer,
    source: Optional[ReasoningTrace] = None,
    tok: Tokenizer = DEFAULT_TOKENIZER,
) -> ReasoningTrace:
    if truncated.answer:
        raise ValidationError("truncated trace must have an empty answer", "answer")
    try:
        answer = generator(truncated, source if source is not None else truncated)
    except GeneratorFailure:
        raise
    except Exception as exc:
        raise GeneratorFailure(f"answer generator failed: {exc}") from exc
    if not isinstance(answer, str):
        raise GeneratorFailure(f"answer generator returned {type(answer).__name__}, not str")
    return truncated.replace(answer=answer, tok=tok)


def filter_sample(
    sample: SftSample, reference_answer: str, reward_cfg: ModeRewardConfig = ModeRewardConfig()
) -> bool:
    """Keep a sample only if its final answer is right and its answer section is leak-free."""
    answer = sample.target.answer
    if not answers_match(extract_final_answer(answer), reference_answer):
        return False
    return not detect_leak(answer, reward_cfg)


def _samples_for(record, reference, cfg, prompts, generator, reward_cfg, tok):
    out = []
    for mode in MODES:
        if mode is Mode.HIGH:
            target = record.trace.replace(mode=Mode.HIGH, tok=tok)
        else:
            truncated = truncate_thinking(record.trace, mode, cfg, tok)
            target = regenerate_answer(truncated, generator, record.trace, tok)
        sample = SftSample(record.id, record.query, mode, prompts[mode], target)
        if reference is None or not filter_sample(sample, reference, reward_cfg):
            sample = dataclasses.replace(sample, retained=False)
        out.append(sample)
    return out


def build_dataset(
    records: Sequence[TraceRecord],
    cfg: TruncationConfig = TruncationConfig(),
    prompts: Optional[Mapping[Mode, str]] = None,
    references: Optional[Mapping[str, str]] = None,
    *,
    generator: AnswerGenerator = copy_final_answer,
    reward_cfg: ModeRewardConfig = ModeRewardConfig(),
    tok: Tokenizer = DEFAULT_TOKENIZER,
    seed: int = 0,
    tolerance: float = 1.05,
    threads: int = 1,
) -> tuple:
    """Derive High/Medium/Low samples from full traces and balance the modes.

    Returns ``(samples, manifest)`` where ``samples`` holds the retained,
    balanced samples sorted by (id, mode). When ``references`` is None the
    reference is the final answer of each source trace.
    """
    if not records:
        raise EmptyCorpus("no traces to build from")
    prompts = dict(SYSTEM_PROMPTS if prompts is None else {Mode.parse(k): v for k, v in prompts.items()})

    def work(rec):
        if references is None:
            ref = extract_final_answer(rec.trace.answer)
        else:
            ref = references.get(rec.id)
        return _samples_for(rec, ref, cfg, prompts, generator, reward_cfg, tok)

    ordered = sorted(records, key=lambda r: r.id)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, ordered))
    else:
        results = [work(r) for r in ordered]

    by_mode = {m: [] for m in MODES}
    rejected = {m: 0 for m in MODES}
    for triple in results:
        for s in triple:
            if s.retained:
                by_mode[s.mode].append(s)
            else:
                rejected[s.mode] += 1
    target = min(len(v) for v in by_mode.values())
    if target == 0:
        empty = [m.value for m in MODES if not by_mode[m]]
        raise EmptyCorpus(f"no samples survived filtering for modes {empty}")

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    for mode in MODES:
        items = by_mode[mode]
        if len(items) > target:
            keep = np.sort(rng.choice(len(items), size=target, replace=False))
            by_mode[mode] = [items[i] for i in keep]

    counts = {m: len(by_mode[m]) for m in MODES}
    means = {m: float(np.mean([s.target.thinking_tokens for s in by_mode[m]])) for m in MODES}
    lo = min(counts.values())
    manifest = DatasetManifest(
        counts=counts,
        mean_thinking_tokens=means,
        balance_ratio=tuple(counts[m] / lo for m in (Mode.HIGH, Mode.MEDIUM, Mode.LOW)),
        tolerance=tolerance,
        rejected=rejected,
    )
    samples = sorted((s for m in MODES for s in by_mode[m]), key=lambda s: (s.id, s.mode.index))
    return samples, manifest


def sft_loss(samples: Sequence[SftSample], policy, tok: Tokenizer = DEFAULT_TOKENIZER) -> float:
    """Mean over samples of the summed token negative log-likelihood."""
    if not samples:
        raise EmptyCorpus("no samples")
    # fsum keeps the total correctly rounded, so a uniform policy gives
    # exactly T * ln V.
    terms = []
    for s in samples:
        seq = policy.encode(s.target, tok)
        terms.extend(policy.token_logprobs(s.mode, seq).tolist())
    return -math.fsum(terms) / len(samples)


def sft_gradient(samples: Sequence[SftSample], policy, tok: Tokenizer = DEFAULT_TOKENIZER) -> np.ndarray:
    """Gradient of :func:`sft_loss` with respect to the policy parameters."""
    grad = np.zeros(policy.n_params)
    for s in samples:
        seq = policy.encode(s.target, tok)
        grad -= policy.score_gradient(s.mode, seq, np.ones(len(seq)))
    return grad / len(samples)
