"""Budget-aware composite reward: task correctness, group-normalized
length reward and the answer-section leak penalty."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

from .errors import OutOfGroupRange, ParseError, ValidationError
from .traces import Mode, ReasoningTrace

DEFAULT_LEAK_KEYWORDS = (
    "Wait",
    "Let me think",
    "Actually",
    "Alternatively",
    "However",
    "Hold on",
    "Let me reconsider",
)


@dataclass(frozen=True)
class ModeRewardConfig:
    alpha_high: float = 0.0
    alpha_med: float = 0.5
    alpha_low: float = 1.0
    leak_keywords: tuple = DEFAULT_LEAK_KEYWORDS
    leak_reward: float = 0.5
    leak_penalty: float = -0.5
    # Switch for ablations; when off the leak component is 0.
    leak_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "leak_keywords", tuple(self.leak_keywords))
        for name in ("alpha_high", "alpha_med", "alpha_low"):
            if getattr(self, name) < 0:
                raise ValidationError("must be nonnegative", name)
        if not self.leak_keywords or not all(k.strip() for k in self.leak_keywords):
            raise ValidationError("keyword list must be nonempty", "leak_keywords")

    def alpha(self, mode: Mode) -> float:
        return {Mode.HIGH: self.alpha_high, Mode.MEDIUM: self.alpha_med,
                Mode.LOW: self.alpha_low}[Mode.parse(mode)]


@dataclass(frozen=True)
class RewardBreakdown:
    task: int
    lam: float
    length: float
    leak: float
    alpha: float
    total: float
    mode: Mode = Mode.HIGH

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "task": self.task,
            "lambda": self.lam,
            "length": self.length,
            "leak": self.leak,
            "alpha": self.alpha,
            "total": self.total,
        }


def load_keywords(path) -> tuple:
    """Keyword file: one keyword per line, '#' starts a comment."""
    words = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                words.append(line)
    if not words:
        raise ParseError(f"{path}: no keywords")
    return tuple(words)


# Answer extraction and normalization

_BOXED = "\\boxed{"
_ANSWER_IS = re.compile(r"(?i)\banswer(?:[ \t]+is)?[ \t]*[:=]?[ \t]*([^\n]+?)[ \t]*\.?[ \t]*$", re.MULTILINE)


def _boxed_contents(text: str) -> list[str]:
    out = []
    start = text.find(_BOXED)
    while start != -1:
        i = start + len(_BOXED)
        depth = 1
        j = i
        while j < len(text) and depth:
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
            j += 1
        if depth == 0:
            out.append(text[i:j - 1])
        start = text.find(_BOXED, j if depth == 0 else i)
    return out


def extract_boxed(text: str) -> Optional[str]:
    """Last complete ``\\boxed{...}`` expression, markup included."""
    contents = _boxed_contents(text)
    return None if not contents else _BOXED + contents[-1] + "}"


def extract_final_answer(text: str) -> Optional[str]:
    boxed = _boxed_contents(text)
    if boxed:
        return boxed[-1]
    matches = _ANSWER_IS.findall(text)
    if matches:
        return matches[-1]
    return None


def normalize_answer(text: str) -> str:
    s = text.strip()
    while True:
        inner = _boxed_contents(s)
        if len(inner) == 1 and s.startswith(_BOXED) and s.endswith("}"):
            s = inner[0].strip()
            continue
        if len(s) >= 2 and s[0] == s[-1] == "$":
            s = s.strip("$").strip()
            continue
        return s


def answers_match(candidate: Optional[str], reference: str) -> bool:
    if candidate is None:
        return False
    return normalize_answer(candidate) == normalize_answer(reference)


def task_reward(trace: ReasoningTrace, reference: str) -> int:
    if not reference.strip():
        raise ValidationError("reference answer is empty", "reference")
    return int(answers_match(extract_final_answer(trace.answer), reference))


# Length reward

def length_lambda(length: int, len_min: int, len_max: int) -> float:
    if not len_min <= length <= len_max:
        raise OutOfGroupRange(f"length {length} outside group range [{len_min}, {len_max}]")
    if len_max == len_min:
        return 0.0
    return 0.5 - (length - len_min) / (len_max - len_min)


def length_reward(lam: float, task: int) -> float:
    return lam if task == 1 else min(0.0, lam)


# Leak penalty

@lru_cache(maxsize=64)
def _keyword_regex(keywords: tuple):
    parts = []
    for kw in keywords:
        words = kw.split()
        parts.append(r"\s+".join(re.escape(w) for w in words))
    return re.compile(r"(?<!\w)(?:" + "|".join(parts) + r")(?!\w)", re.IGNORECASE)


def detect_leak(answer: str, cfg: ModeRewardConfig = ModeRewardConfig()) -> bool:
    return _keyword_regex(cfg.leak_keywords).search(answer) is not None


def count_leaks(text: str, cfg: ModeRewardConfig = ModeRewardConfig()) -> int:
    return len(_keyword_regex(cfg.leak_keywords).findall(text))


def leak_reward(answer: str, cfg: ModeRewardConfig = ModeRewardConfig()) -> float:
    return cfg.leak_penalty if detect_leak(answer, cfg) else cfg.leak_reward


def composite_reward(
    trace: ReasoningTrace,
    reference: str,
    group_lens: tuple,
    cfg: ModeRewardConfig = ModeRewardConfig(),
) -> RewardBreakdown:
    task = task_reward(trace, reference)
    lam = length_lambda(trace.total_tokens, *group_lens)
    length = length_reward(lam, task)
    leak = leak_reward(trace.answer, cfg) if cfg.leak_enabled else 0.0
    alpha = cfg.alpha(trace.mode)
    return RewardBreakdown(
        task=task, lam=lam, length=length, leak=leak, alpha=alpha,
        total=task + alpha * length + leak, mode=trace.mode,
    )


def group_length_range(traces: Sequence[ReasoningTrace]) -> tuple:
    lens = [t.total_tokens for t in traces]
    return min(lens), max(lens)


def score_group(
    traces: Sequence[ReasoningTrace],
    reference: str,
    cfg: ModeRewardConfig = ModeRewardConfig(),
) -> list[RewardBreakdown]:
    """Score one rollout group; length bounds come from the group itself."""
    if not traces:
        return []
    bounds = group_length_range(traces)
    return [composite_reward(t, reference, bounds, cfg) for t in traces]


def task_only_reward(trace: ReasoningTrace, reference: str) -> RewardBreakdown:
    """Reward with no compression terms, for the warm-up phase."""
    task = task_reward(trace, reference)
    return RewardBreakdown(task=task, lam=0.0, length=0.0, leak=0.0, alpha=0.0,
                           total=float(task), mode=trace.mode)
