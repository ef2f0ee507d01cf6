import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from budgetmode.traces import MODES, Mode, TraceRecord, parse_trace  # noqa: E402

# One line per acceptance criterion, filled in by test_acceptance.py.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_corpus(n, seed=0, min_len=40, max_len=400):
    """Full traces with whitespace-token thinking and a boxed final answer."""
    rng = np.random.default_rng(seed)
    records, refs = [], {}
    for i in range(n):
        k = int(rng.integers(min_len, max_len + 1))
        thinking = " ".join(f"w{int(j)}" for j in rng.integers(0, 50, size=k))
        answer = int(rng.integers(0, 1000))
        raw = f"<think>{thinking}</think>So the result is \\boxed{{{answer}}}."
        rid = f"t{i:04d}"
        records.append(TraceRecord(rid, parse_trace(raw, Mode.HIGH), query=f"problem {i}"))
        refs[rid] = str(answer)
    return records, refs


@pytest.fixture
def corpus():
    return make_corpus(30)


def gradcheck_case(seed, policy, group_size=6, n_groups=3, spread=0.6, h=1e-6, kink=1e-4):
    """One random finite-difference configuration for the clipped surrogate.

    Rollouts come from a random old policy; the gradient is taken at a
    perturbed policy so ratios leave the clip interval. Returns
    ``(analytic, numeric, n_clipped)`` or None when a ratio sits within
    ``kink`` of a clip boundary (the objective is not differentiable there).
    """
    from budgetmode.dapo import DapoConfig, clipped_terms, make_group, policy_ratios, surrogate_gradient
    from budgetmode.dapo import surrogate_objective
    from budgetmode.rewards import ModeRewardConfig
    from budgetmode.toy import ExponentialCurve, ToyEnvironment, make_tasks

    rng = np.random.default_rng(seed)
    cfg = DapoConfig()
    env = ToyEnvironment(make_tasks([1, 2, 3], seed), ExponentialCurve(), max_thinking=12, max_answer=6)
    old = policy.copy()
    old.set_params(rng.normal(size=policy.n_params))
    groups = []
    for g in range(n_groups):
        task = env.tasks[g % len(env.tasks)]
        mode = MODES[int(rng.integers(0, 3))]
        ros = [env.rollout(old, task, mode, rng) for _ in range(group_size)]
        groups.append(make_group(ros, task.reference_answer, 2, ModeRewardConfig(), 1e-8))
    new = old.copy()
    new.set_params(old.params + spread * rng.normal(size=policy.n_params))

    n_clipped = 0
    for grp, rats in zip(groups, policy_ratios(groups, new)):
        for adv, r in zip(grp.advantages, rats):
            for bound in (1 - cfg.eps_low, 1 + cfg.eps_high):
                if np.any(np.abs(r - bound) < kink):
                    return None
            n_clipped += int((~clipped_terms(r, adv, cfg.eps_low, cfg.eps_high)[1]).sum())

    analytic = surrogate_gradient(groups, new, cfg).gradient
    numeric = np.zeros(policy.n_params)
    probe = new.copy()
    for i in range(policy.n_params):
        x = new.params.copy()
        x[i] += h
        probe.set_params(x)
        up = surrogate_objective(groups, probe, cfg)
        x[i] -= 2 * h
        probe.set_params(x)
        down = surrogate_objective(groups, probe, cfg)
        numeric[i] = (up - down) / (2 * h)
    return analytic, numeric, n_clipped


def relative_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)

