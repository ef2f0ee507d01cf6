"""Synthetic reasoning environment and a tiny mode-conditioned softmax policy.

The policy writes a thinking section one token at a time until it emits the
stop-thinking action, then an answer section until it emits end-of-sequence.
Each section has its own action set:

* thinking: ``think_vocab`` words, then ``</think>``
* answer:   ``answer_vocab`` words, then ``<eos>``

The logits depend on (mode, section, bucket), where the bucket is the number
of tokens already written in the current section divided by
``bucket_size`` and capped at ``n_buckets - 1``. After ``<eos>`` the
environment appends a boxed final answer, which is correct with probability
``curve(effort, difficulty)``. Effort is the thinking length plus
``leak_weight`` times the number of answer-section words the reward
detector would flag as leaked reasoning, so reasoning that spills into the
answer still helps correctness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ParseError, RolloutOverflow, UnknownToken, ValidationError
from .act import aggregate_accuracy
from .rewards import ModeRewardConfig, count_leaks
from .traces import MODES, Mode, ReasoningTrace, Tokenizer, DEFAULT_TOKENIZER

THINK, ANSWER = 0, 1
STOP_THINK = "</think>"
EOS = "<eos>"


@dataclass(frozen=True)
class TokenSeq:
    """Policy-level encoding of one response.

    ``section[t]`` and ``bucket[t]`` identify the state before token ``t``;
    ``action[t]`` indexes the section's action set.
    """

    section: np.ndarray
    bucket: np.ndarray
    action: np.ndarray

    def __len__(self):
        return len(self.action)


class ToyPolicy:
    def __init__(
        self,
        think_vocab: Sequence[str] = ("step",),
        answer_vocab: Sequence[str] = ("ans", "wait"),
        bucket_size: int = 4,
        n_buckets: int = 16,
        params: Optional[np.ndarray] = None,
    ):
        if bucket_size < 1 or n_buckets < 1:
            raise ValueError("bucket_size and n_buckets must be positive")
        self.think_vocab = tuple(think_vocab)
        self.answer_vocab = tuple(answer_vocab)
        self.bucket_size = bucket_size
        self.n_buckets = n_buckets
        self.think_actions = self.think_vocab + (STOP_THINK,)
        self.answer_actions = self.answer_vocab + (EOS,)
        self.shapes = (
            (len(MODES), n_buckets, len(self.think_actions)),
            (len(MODES), n_buckets, len(self.answer_actions)),
        )
        self._split = int(np.prod(self.shapes[0]))
        self.n_params = self._split + int(np.prod(self.shapes[1]))
        if params is None:
            params = np.zeros(self.n_params)
        self.set_params(params)

    # parameters

    def set_params(self, params) -> None:
        params = np.array(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        self.params = params
        self._log_tables = None
        self._cdf_tables = None

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.think_vocab, self.answer_vocab, self.bucket_size,
                         self.n_buckets, self.params.copy())

    def logits(self, section: int) -> np.ndarray:
        if section == THINK:
            return self.params[: self._split].reshape(self.shapes[0])
        return self.params[self._split:].reshape(self.shapes[1])

    def set_logits(self, section: int, mode=None, bucket=slice(None), action=slice(None),
                   value=0.0) -> None:
        """Assign logits in place; ``mode=None`` means every mode."""
        table = self.logits(section)
        modes = slice(None) if mode is None else Mode.parse(mode).index
        table[modes, bucket, action] = value
        self._log_tables = None
        self._cdf_tables = None

    def log_tables(self) -> tuple:
        """Log-softmax of both sections' logits, cached until parameters change."""
        if self._log_tables is None:
            out = []
            for section in (THINK, ANSWER):
                z = self.logits(section)
                zmax = z.max(axis=-1, keepdims=True)
                lse = zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))
                out.append(z - lse)
            self._log_tables = tuple(out)
        return self._log_tables

    def cdf_tables(self) -> tuple:
        if self._cdf_tables is None:
            self._cdf_tables = tuple(np.cumsum(np.exp(t), axis=-1) for t in self.log_tables())
        return self._cdf_tables

    def probs(self, mode, section: int, position: int) -> np.ndarray:
        return np.exp(self.log_tables()[section][Mode.parse(mode).index, self.bucket(position)])

    def bucket(self, position):
        return np.minimum(np.asarray(position) // self.bucket_size, self.n_buckets - 1)

    # sequences

    def encode(self, trace: ReasoningTrace, tok: Tokenizer = DEFAULT_TOKENIZER) -> TokenSeq:
        """Map a trace onto policy actions.

        A delimited trace starts in the thinking section and closes it with
        the stop action; an undelimited one starts directly in the answer
        section. Every response ends with ``<eos>``.
        """
        sections, positions, actions = [], [], []
        if trace.delimited:
            index = {w: i for i, w in enumerate(self.think_vocab)}
            words = tok.tokens(trace.thinking)
            for pos, w in enumerate(words):
                if w not in index:
                    raise UnknownToken(f"thinking token {w!r} is not in the policy vocabulary")
                sections.append(THINK)
                positions.append(pos)
                actions.append(index[w])
            sections.append(THINK)
            positions.append(len(words))
            actions.append(len(self.think_vocab))
        index = {w: i for i, w in enumerate(self.answer_vocab)}
        words = tok.tokens(trace.answer)
        for pos, w in enumerate(words):
            if w not in index:
                raise UnknownToken(f"answer token {w!r} is not in the policy vocabulary")
            sections.append(ANSWER)
            positions.append(pos)
            actions.append(index[w])
        sections.append(ANSWER)
        positions.append(len(words))
        actions.append(len(self.answer_vocab))
        return TokenSeq(
            np.array(sections, dtype=np.int64),
            self.bucket(np.array(positions, dtype=np.int64)),
            np.array(actions, dtype=np.int64),
        )

    def token_logprobs(self, mode, seq: TokenSeq) -> np.ndarray:
        m = Mode.parse(mode).index
        think, answer = self.log_tables()
        out = np.empty(len(seq))
        t = seq.section == THINK
        out[t] = think[m, seq.bucket[t], seq.action[t]]
        a = ~t
        out[a] = answer[m, seq.bucket[a], seq.action[a]]
        return out

    def score_gradient(self, mode, seq: TokenSeq, weights) -> np.ndarray:
        """Sum over tokens of ``weights[t] * d log pi(a_t | s_t) / d params``."""
        m = Mode.parse(mode).index
        weights = np.asarray(weights, dtype=np.float64)
        grads = []
        for section, logp in zip((THINK, ANSWER), self.log_tables()):
            g = np.zeros(self.shapes[section])
            sel = seq.section == section
            if sel.any():
                b, a, w = seq.bucket[sel], seq.action[sel], weights[sel]
                np.add.at(g[m], (b, a), w)
                # d log softmax / d z = onehot - p
                mass = np.zeros(self.n_buckets)
                np.add.at(mass, b, w)
                g[m] -= mass[:, None] * np.exp(logp[m])
            grads.append(g.ravel())
        return np.concatenate(grads)


@dataclass(frozen=True)
class ToyTask:
    query_id: str
    difficulty: int
    reference_answer: str
    seed: int = 0

    def __post_init__(self):
        if self.difficulty < 1:
            raise ValidationError("difficulty must be >= 1", "difficulty")


def reference_for_seed(seed: int) -> str:
    return str(int(np.random.default_rng(seed).integers(10, 1000)))


def make_tasks(difficulties: Sequence[int], seed: int = 0) -> list:
    seeds = np.random.SeedSequence(seed).generate_state(len(difficulties), dtype=np.uint32)
    return [
        ToyTask(f"q{i:04d}", int(d), reference_for_seed(int(s)), int(s))
        for i, (d, s) in enumerate(zip(difficulties, seeds))
    ]


# correctness curves: (effort, difficulty) -> success probability

@dataclass(frozen=True)
class ExponentialCurve:
    """``1 - exp(-effort / (scale * difficulty))``."""

    scale: float = 1.0

    def __call__(self, effort, difficulty):
        return 1.0 - math.exp(-effort / (self.scale * difficulty))


@dataclass(frozen=True)
class ConstantCurve:
    value: float = 1.0

    def __call__(self, effort, difficulty):
        return self.value


@dataclass(frozen=True)
class StepCurve:
    """``high`` once effort reaches ``threshold * difficulty``, else ``low``."""

    threshold: float = 1.0
    low: float = 0.0
    high: float = 1.0

    def __call__(self, effort, difficulty):
        return self.high if effort >= self.threshold * difficulty else self.low


CURVES = {"exponential": ExponentialCurve, "constant": ConstantCurve, "step": StepCurve}


@dataclass(frozen=True)
class Rollout:
    task: ToyTask
    trace: ReasoningTrace
    tokens: TokenSeq
    old_logp: np.ndarray
    correct_draw: bool

    @property
    def mode(self) -> Mode:
        return self.trace.mode

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)


@dataclass
class ToyEnvironment:
    tasks: list
    curve: Callable = field(default_factory=ExponentialCurve)
    max_thinking: Optional[int] = 64
    max_answer: Optional[int] = 16
    hard_cap: int = 256
    leak_weight: float = 1.0
    leak_config: ModeRewardConfig = field(default_factory=ModeRewardConfig)

    def success_probability(self, effort: float, difficulty: int) -> float:
        p = float(self.curve(effort, difficulty))
        return min(1.0, max(0.0, p))

    def leaked_words(self, words: Sequence[str]) -> int:
        return count_leaks(" ".join(words), self.leak_config)

    def rollout(self, policy: ToyPolicy, task: ToyTask, mode, rng: np.random.Generator) -> Rollout:
        mode = Mode.parse(mode)
        m = mode.index
        think_lp, answer_lp = policy.log_tables()
        sections, buckets, actions, logps = [], [], [], []

        cdfs = policy.cdf_tables()

        def sample(section, table, pos):
            b = min(pos // policy.bucket_size, policy.n_buckets - 1)
            cdf = cdfs[section][m, b]
            a = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)
            sections.append(section)
            buckets.append(b)
            actions.append(a)
            logps.append(table[m, b, a])
            return a

        think_words = []
        stop = len(policy.think_vocab)
        while True:
            if self.max_thinking is not None and len(think_words) >= self.max_thinking:
                break  # enforced close; not a policy decision
            if len(think_words) >= self.hard_cap:
                raise RolloutOverflow(f"thinking exceeded {self.hard_cap} tokens")
            a = sample(THINK, think_lp, len(think_words))
            if a == stop:
                break
            think_words.append(policy.think_vocab[a])

        answer_words = []
        eos = len(policy.answer_vocab)
        while True:
            if self.max_answer is not None and len(answer_words) >= self.max_answer:
                break
            if len(think_words) + len(answer_words) >= self.hard_cap:
                raise RolloutOverflow(f"response exceeded {self.hard_cap} tokens")
            a = sample(ANSWER, answer_lp, len(answer_words))
            if a == eos:
                break
            answer_words.append(policy.answer_vocab[a])

        effort = len(think_words) + self.leak_weight * self.leaked_words(answer_words)
        correct = bool(rng.random() < self.success_probability(effort, task.difficulty))
        final = task.reference_answer if correct else corrupt_answer(task.reference_answer)
        answer_text = " ".join(answer_words + ["\\boxed{" + final + "}"])
        trace = ReasoningTrace.build(" ".join(think_words), answer_text, mode)
        seq = TokenSeq(np.array(sections, dtype=np.int64), np.array(buckets, dtype=np.int64),
                       np.array(actions, dtype=np.int64))
        return Rollout(task, trace, seq, np.array(logps, dtype=np.float64), correct)


def corrupt_answer(reference: str) -> str:
    return str(int(reference) + 1)


def rollout(policy: ToyPolicy, task: ToyTask, mode, rng, env: ToyEnvironment) -> Rollout:
    return env.rollout(policy, task, mode, rng)


@dataclass(frozen=True)
class EvalResult:
    mode: Mode
    accuracy: float
    thinking_tokens: float
    answer_tokens: float
    total_tokens: float
    n_rollouts: int

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "accuracy": self.accuracy,
            "thinking_tokens": self.thinking_tokens,
            "answer_tokens": self.answer_tokens,
            "total_tokens": self.total_tokens,
            "n_rollouts": self.n_rollouts,
        }


def sample_rng(base_seed: int, task_index: int, sample_index: int) -> np.random.Generator:
    """Independent stream per (task, sample), so prefixes are stable."""
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(task_index, sample_index)))


def evaluate(policy: ToyPolicy, env: ToyEnvironment, mode, n_samples: int, rng) -> EvalResult:
    """Monte-Carlo accuracy and mean token counts over ``n_samples`` rollouts per task."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1", "n_samples")
    mode = Mode.parse(mode)
    if isinstance(rng, np.random.Generator):
        base = int(rng.integers(0, 2**63 - 1))
    else:
        base = int(rng)

    outcomes, think, answer = [], [], []
    for i, task in enumerate(env.tasks):
        row = []
        for j in range(n_samples):
            r = env.rollout(policy, task, mode, sample_rng(base, i, j))
            row.append(int(r.correct_draw))
            think.append(r.trace.thinking_tokens)
            answer.append(r.trace.answer_tokens)
        outcomes.append(row)
    think, answer = np.array(think, dtype=float), np.array(answer, dtype=float)
    return EvalResult(
        mode=mode,
        accuracy=aggregate_accuracy(outcomes, n_samples),
        thinking_tokens=float(think.mean()),
        answer_tokens=float(answer.mean()),
        total_tokens=float((think + answer).mean()),
        n_rollouts=len(think),
    )


# environment key-value files

@dataclass
class EnvConfig:
    """Toy environment plus the initial policy it is trained from.

    ``leak_weight`` is the reasoning effort credited per leak keyword in the
    answer section: a leaked word stands in for several thinking tokens,
    which is what makes moving reasoning into the answer pay off under a
    thinking-length budget.
    """

    n_tasks: int = 32
    difficulties: tuple = (1, 2, 4, 8)
    curve: str = "exponential"
    curve_scale: float = 1.0
    max_thinking: int = 64
    max_answer: int = 16
    hard_cap: int = 256
    leak_weight: float = 3.0
    bucket_size: int = 4
    n_buckets: int = 16
    think_vocab: tuple = ("step",)
    answer_vocab: tuple = ("wait",)
    init_stop_prob: float = 0.1
    init_answer_word_prob: float = 1 / 3

    def __post_init__(self):
        for name in ("init_stop_prob", "init_answer_word_prob"):
            if not 0 < getattr(self, name) < 1:
                raise ValidationError("must be in (0, 1)", f"environment.{name}")
        if self.n_tasks < 1 or not self.difficulties:
            raise ValidationError("need at least one task and difficulty", "environment.n_tasks")

    def build(self, leak_config: ModeRewardConfig = ModeRewardConfig(), seed: int = 0) -> ToyEnvironment:
        if self.curve not in CURVES:
            raise ValidationError(f"unknown curve {self.curve!r}", "environment.curve")
        if self.curve == "exponential":
            curve = ExponentialCurve(self.curve_scale)
        elif self.curve == "step":
            curve = StepCurve(self.curve_scale)
        else:
            curve = ConstantCurve(self.curve_scale)
        diffs = [self.difficulties[i % len(self.difficulties)] for i in range(self.n_tasks)]
        return ToyEnvironment(
            tasks=make_tasks(diffs, seed),
            curve=curve,
            max_thinking=self.max_thinking,
            max_answer=self.max_answer,
            hard_cap=self.hard_cap,
            leak_weight=self.leak_weight,
            leak_config=leak_config,
        )

    def build_policy(self) -> ToyPolicy:
        """Same start in every mode and bucket: stop thinking w.p. ``init_stop_prob``,
        emit some answer word (rather than EOS) w.p. ``init_answer_word_prob``."""
        pol = ToyPolicy(self.think_vocab, self.answer_vocab, self.bucket_size, self.n_buckets)
        q, p = self.init_stop_prob, self.init_answer_word_prob
        k_t, k_a = len(self.think_vocab), len(self.answer_vocab)
        for a in range(k_t):
            pol.set_logits(THINK, action=a, value=math.log((1 - q) / k_t))
        pol.set_logits(THINK, action=k_t, value=math.log(q))
        for a in range(k_a):
            pol.set_logits(ANSWER, action=a, value=math.log(p / k_a))
        pol.set_logits(ANSWER, action=k_a, value=math.log(1 - p))
        return pol


def parse_env_file(path) -> EnvConfig:
    """Read ``key = value`` lines; ``#`` comments; lists are comma separated."""
    defaults = EnvConfig()
    known = EnvConfig.__dataclass_fields__
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValidationError(f"unknown key {key!r}", f"{path}:{lineno}")
            default = getattr(defaults, key)
            try:
                if isinstance(default, tuple):
                    cast = type(default[0]) if default else str
                    values[key] = tuple(cast(v.strip()) for v in value.split(",") if v.strip())
                elif isinstance(default, str):
                    values[key] = value
                else:
                    values[key] = type(default)(value)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return EnvConfig(**values)
