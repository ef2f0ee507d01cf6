"""Decoupled-clip, dynamically sampled group policy optimization.

The objective for one group of ``G`` rollouts is

    (1 / sum_i |o_i|) * sum_i sum_t min(r_it * A_i, clip(r_it, 1 - eps_low, 1 + eps_high) * A_i)

with ``r_it`` the new/old token probability ratio and ``A_i`` the group-
standardized reward of rollout ``i``. Groups are averaged uniformly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import LengthMismatch, ValidationError
from .rewards import ModeRewardConfig, RewardBreakdown, score_group, task_only_reward
from .toy import Rollout, ToyEnvironment, ToyPolicy, TokenSeq, evaluate
from .traces import MODES, Mode

# named random sub-streams under the root seed
STREAM_TASKS, STREAM_ROLLOUTS, STREAM_EVAL = 1, 2, 3


@dataclass(frozen=True)
class DapoConfig:
    group_size: int = 16
    eps_low: float = 0.2
    eps_high: float = 0.28
    learning_rate: float = 20.0
    warmup_steps: int = 95
    budget_steps: int = 40
    dynamic_sampling: tuple = (True, False)
    advantage_std_floor: float = 1e-8
    seed: int = 0
    tasks_per_step: int = 8
    warmup_modes: tuple = ("low", "medium", "high")
    inner_epochs: int = 1
    eval_samples: int = 8
    eval_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dynamic_sampling", tuple(bool(x) for x in self.dynamic_sampling))
        object.__setattr__(self, "warmup_modes", tuple(Mode.parse(m).value for m in self.warmup_modes))
        if not 0 < self.eps_low <= self.eps_high < 1:
            raise ValidationError("need 0 < eps_low <= eps_high < 1", "dapo.eps_low")
        if self.group_size < 2:
            raise ValidationError("group size must be at least 2", "dapo.group_size")
        if len(self.dynamic_sampling) != 2:
            raise ValidationError("one dynamic-sampling flag per phase", "dapo.dynamic_sampling")
        for name in ("warmup_steps", "budget_steps", "eval_every"):
            if getattr(self, name) < 0:
                raise ValidationError("must be nonnegative", f"dapo.{name}")
        for name in ("tasks_per_step", "inner_epochs", "eval_samples"):
            if getattr(self, name) < 1:
                raise ValidationError("must be positive", f"dapo.{name}")
        if self.advantage_std_floor <= 0:
            raise ValidationError("must be positive", "dapo.advantage_std_floor")


@dataclass
class RolloutGroup:
    query_id: str
    mode: Mode
    rollouts: list
    rewards: list
    advantages: np.ndarray

    @property
    def task_rewards(self) -> list:
        return [r.task for r in self.rewards]

    @property
    def n_tokens(self) -> int:
        return sum(r.n_tokens for r in self.rollouts)


@dataclass(frozen=True)
class PolicyStep:
    objective_value: float
    gradient: np.ndarray
    tokens_processed: int


def group_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> np.ndarray:
    """``(R_i - mean) / max(std, std_floor)`` with the population std."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or len(r) < 2:
        raise ValidationError("need a group of at least two rewards", "rewards")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    centered = r - r.mean()
    return centered / max(float(r.std()), std_floor)


def importance_ratios(new_logp, old_logp) -> np.ndarray:
    new_logp, old_logp = np.asarray(new_logp, dtype=np.float64), np.asarray(old_logp, dtype=np.float64)
    if new_logp.shape != old_logp.shape:
        raise LengthMismatch(f"{new_logp.shape} new log-probs vs {old_logp.shape} old")
    return np.exp(new_logp - old_logp)


def clipped_terms(ratios, advantage, eps_low: float, eps_high: float) -> tuple:
    """Per-token objective terms and a mask of tokens on the unclipped branch.

    Ties go to the unclipped branch, which is also the branch taken
    everywhere inside the clip interval.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    unclipped = ratios * advantage
    clipped = np.clip(ratios, 1.0 - eps_low, 1.0 + eps_high) * advantage
    live = unclipped <= clipped
    return np.where(live, unclipped, clipped), live


def clipped_surrogate(groups: Sequence[RolloutGroup], ratios, cfg: DapoConfig = DapoConfig()) -> float:
    """Objective value given per-token ratios ``ratios[g][i]``."""
    if not groups:
        return 0.0
    values = []
    for g, group_ratios in zip(groups, ratios):
        if len(group_ratios) != len(g.rollouts):
            raise LengthMismatch("ratios do not match rollouts")
        total = 0.0
        n = 0
        for ro, adv, r in zip(g.rollouts, g.advantages, group_ratios):
            r = np.asarray(r, dtype=np.float64)
            if len(r) != ro.n_tokens:
                raise LengthMismatch(f"{len(r)} ratios for {ro.n_tokens} tokens")
            terms, _ = clipped_terms(r, adv, cfg.eps_low, cfg.eps_high)
            total += terms.sum()
            n += len(r)
        values.append(total / n if n else 0.0)
    return float(np.mean(values))


def policy_ratios(groups: Sequence[RolloutGroup], policy: ToyPolicy) -> list:
    return [
        [importance_ratios(policy.token_logprobs(g.mode, ro.tokens), ro.old_logp) for ro in g.rollouts]
        for g in groups
    ]


def surrogate_objective(groups, policy: ToyPolicy, cfg: DapoConfig = DapoConfig()) -> float:
    return clipped_surrogate(groups, policy_ratios(groups, policy), cfg)


def surrogate_gradient(groups: Sequence[RolloutGroup], policy: ToyPolicy,
                       cfg: DapoConfig = DapoConfig()) -> PolicyStep:
    """Objective and its exact gradient at the policy's current parameters.

    On the unclipped branch d(r A)/d theta = A r d log pi / d theta; on the
    clipped branch the term is constant.
    """
    grad = np.zeros(policy.n_params)
    if not groups:
        return PolicyStep(0.0, grad, 0)
    values = []
    tokens = 0
    per_mode: dict = {}
    for g in groups:
        n = g.n_tokens
        tokens += n
        total = 0.0
        for ro, adv in zip(g.rollouts, g.advantages):
            r = importance_ratios(policy.token_logprobs(g.mode, ro.tokens), ro.old_logp)
            terms, live = clipped_terms(r, adv, cfg.eps_low, cfg.eps_high)
            total += terms.sum()
            if n:
                per_mode.setdefault(g.mode, []).append((ro.tokens, live * r * adv / (n * len(groups))))
        values.append(total / n if n else 0.0)
    for mode, items in per_mode.items():
        seq = concat_tokens([t for t, _ in items])
        grad += policy.score_gradient(mode, seq, np.concatenate([w for _, w in items]))
    return PolicyStep(float(np.mean(values)), grad, tokens)


def concat_tokens(seqs: Sequence[TokenSeq]) -> TokenSeq:
    return TokenSeq(
        np.concatenate([s.section for s in seqs]),
        np.concatenate([s.bucket for s in seqs]),
        np.concatenate([s.action for s in seqs]),
    )


def dynamic_sampling_filter(groups: Sequence[RolloutGroup], phase: int) -> list:
    """Phase 1 drops groups whose task rewards are all 0 or all 1; phase 2 keeps all."""
    if phase not in (1, 2):
        raise ValidationError("phase must be 1 or 2", "phase")
    if phase == 2:
        return list(groups)
    return [g for g in groups if 0 < sum(g.task_rewards) < len(g.task_rewards)]


def make_group(rollouts: Sequence[Rollout], reference: str, phase: int,
               reward_cfg: ModeRewardConfig, std_floor: float) -> RolloutGroup:
    traces = [r.trace for r in rollouts]
    if phase == 1:
        rewards = [task_only_reward(t, reference) for t in traces]
    else:
        rewards = score_group(traces, reference, reward_cfg)
    adv = group_advantages([b.total for b in rewards], std_floor)
    return RolloutGroup(rollouts[0].task.query_id, rollouts[0].mode, list(rollouts), rewards, adv)


@dataclass
class TrainingLog:
    steps: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def steps_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.steps)

    def evals_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.evals)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.steps_jsonl().encode())
        h.update(self.evals_jsonl().encode())
        return h.hexdigest()

    def eval_at(self, step: int) -> dict:
        """Per-mode evaluation records logged at ``step``."""
        return {e["mode"]: e for e in self.evals if e["step"] == step}

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["accuracy", "thinking_tokens", "answer_tokens", "total_tokens"]
        w.writerow(["step", "phase", "objective"] + [f"{m.value}_{c}" for m in MODES for c in cols])
        for r in self.steps:
            row = [r["step"], r["phase"], repr(r["objective"])]
            for m in MODES:
                stats = r["modes"].get(m.value)
                row += [repr(stats[c]) if stats else "" for c in cols]
            w.writerow(row)
        return buf.getvalue()


def _mode_stats(groups: Sequence[RolloutGroup]) -> dict:
    out = {}
    for mode in MODES:
        ros = [(ro, rw) for g in groups if g.mode is mode for ro, rw in zip(g.rollouts, g.rewards)]
        if not ros:
            continue
        out[mode.value] = {
            "accuracy": float(np.mean([rw.task for _, rw in ros])),
            "thinking_tokens": float(np.mean([ro.trace.thinking_tokens for ro, _ in ros])),
            "answer_tokens": float(np.mean([ro.trace.answer_tokens for ro, _ in ros])),
            "total_tokens": float(np.mean([ro.trace.total_tokens for ro, _ in ros])),
        }
    return out


def _evaluate_all(policy, env, cfg, step, phase, log):
    for mode in MODES:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(STREAM_EVAL, step, mode.index)))
        res = evaluate(policy, env, mode, cfg.eval_samples, rng)
        log.evals.append({"step": step, "phase": phase, **res.to_json()})


def run_two_phase(
    env: ToyEnvironment,
    policy: ToyPolicy,
    cfg: DapoConfig = DapoConfig(),
    reward_cfg: ModeRewardConfig = ModeRewardConfig(),
) -> TrainingLog:
    """Warm-up on task reward only, then budget-aware reward shaping.

    Updates ``policy`` in place by plain gradient ascent and returns the
    log. Evaluations run before the first step, at the phase boundary,
    at the end, and every ``eval_every`` steps when that is nonzero.
    """
    total = cfg.warmup_steps + cfg.budget_steps
    log = TrainingLog(metadata={
        "group_averaging": "uniform",
        "phase_boundary": cfg.warmup_steps,
        "total_steps": total,
        "n_params": policy.n_params,
        "dapo": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()},
        "reward": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(reward_cfg).items()},
    })
    _evaluate_all(policy, env, cfg, 0, 0, log)
    task_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(STREAM_TASKS,)))
    n_tasks = len(env.tasks)
    per_step = min(cfg.tasks_per_step, n_tasks)

    for step in range(1, total + 1):
        phase = 1 if step <= cfg.warmup_steps else 2
        modes = [Mode.parse(m) for m in cfg.warmup_modes] if phase == 1 else list(MODES)
        picked = np.sort(task_rng.choice(n_tasks, size=per_step, replace=False))
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(STREAM_ROLLOUTS, step)))
        groups = []
        for ti in picked:
            task = env.tasks[int(ti)]
            for mode in modes:
                ros = [env.rollout(policy, task, mode, rng) for _ in range(cfg.group_size)]
                groups.append(make_group(ros, task.reference_answer, phase, reward_cfg,
                                         cfg.advantage_std_floor))
        stats = _mode_stats(groups)
        kept = dynamic_sampling_filter(groups, 1) if cfg.dynamic_sampling[phase - 1] else groups

        objective = 0.0
        for epoch in range(cfg.inner_epochs):
            update = surrogate_gradient(kept, policy, cfg)
            if epoch == 0:
                objective = update.objective_value
            policy.set_params(policy.params + cfg.learning_rate * update.gradient)

        log.steps.append({
            "step": step,
            "phase": phase,
            "objective": objective,
            "groups": len(groups),
            "groups_kept": len(kept),
            "mean_reward": float(np.mean([b.total for g in groups for b in g.rewards])),
            "modes": stats,
        })
        boundary = step == cfg.warmup_steps or step == total
        if boundary or (cfg.eval_every and step % cfg.eval_every == 0):
            _evaluate_all(policy, env, cfg, step, phase, log)
    return log
