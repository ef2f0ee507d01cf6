"""Two-phase training of a tabular toy policy, with and without the leak penalty.

The toy policy decides, token by token, whether to keep thinking and how
many filler words to write after the thinking section. Accuracy grows with
thinking effort, and filler words in the answer count as extra effort, so
a policy can dodge the length reward by moving work into the answer. The
warm-up phase trains on correctness only; the budget phase adds the mode
rewards. Without the leak penalty, Low mode answers grow longer.

    python demos/train_toy_policy.py     # about half a minute
"""

from budgetmode import DapoConfig, EnvConfig, ModeRewardConfig, run_two_phase


def train(leak_enabled):
    env_cfg = EnvConfig()
    reward = ModeRewardConfig(leak_enabled=leak_enabled)
    return run_two_phase(env_cfg.build(reward, seed=0), env_cfg.build_policy(), DapoConfig(seed=0), reward)


def show(log, label):
    print(label)
    end = log.metadata["total_steps"]
    for step in (0, log.metadata["phase_boundary"], end):
        row = log.eval_at(step)
        cells = "  ".join(f"{m}: acc {row[m]['accuracy']:.2f} think {row[m]['thinking_tokens']:5.1f} "
                          f"answer {row[m]['answer_tokens']:4.2f}" for m in ("low", "medium", "high"))
        print(f"  step {step:>3}  {cells}")


def main():
    show(train(True), "leak penalty on")
    show(train(False), "leak penalty off")


if __name__ == "__main__":
    main()
