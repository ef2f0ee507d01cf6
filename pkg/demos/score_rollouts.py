"""Score one rollout group with the composite mode reward.

Rewards combine correctness, a group-relative length factor scaled by the
mode's weight, and a bonus or penalty for reasoning keywords that spill
into the answer section. Shorter correct rollouts earn more in Low mode,
the length weight is zero in High mode, and a "Wait" after the thinking
section costs a full point relative to a clean answer.

    python demos/score_rollouts.py
"""

from budgetmode import Mode, ModeRewardConfig, parse_trace, score_group

ROLLOUTS = [
    "<think>2 + 3 = 5</think>The answer is \\boxed{5}.",
    "<think>two plus three, count up from two: three, four, five</think>So \\boxed{5}.",
    "<think>2 + 3</think>Wait, let me recount: 2, then 3 more, \\boxed{5}.",
    "<think>guess</think>\\boxed{6}",
]


def main():
    cfg = ModeRewardConfig()
    for mode in (Mode.LOW, Mode.MEDIUM, Mode.HIGH):
        traces = [parse_trace(raw, mode) for raw in ROLLOUTS]
        print(f"{mode.value} mode (length weight {cfg.alpha(mode)}):")
        for t, r in zip(traces, score_group(traces, "5", cfg)):
            print(f"  tokens={t.total_tokens:>2} task={r.task} lambda={r.lam:+.3f} "
                  f"leak={r.leak:+.1f} total={r.total:+.3f}")


if __name__ == "__main__":
    main()
