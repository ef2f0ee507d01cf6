"""Turn full reasoning traces into a balanced High/Medium/Low SFT corpus.

Each trace keeps its whole thinking section for High mode. Medium and Low
keep the first half and quarter of the thinking tokens, close with a short
connective sentence, and get their final answer back from a stub that
copies the original. Samples whose answer is wrong or leaks reasoning are
dropped, then the modes are down-sampled to equal counts.

    python demos/build_sft_corpus.py
"""

import numpy as np

from budgetmode import Mode, TruncationConfig, build_dataset, parse_trace
from budgetmode.traces import TraceRecord


def synthetic_traces(n, seed=0):
    rng = np.random.default_rng(seed)
    records, refs = [], {}
    for i in range(n):
        steps = " ".join(f"step{j}: simplify term {int(rng.integers(0, 99))}." for j in range(int(rng.integers(8, 40))))
        answer = int(rng.integers(0, 1000))
        raw = f"<think>{steps}</think>Collecting the terms gives \\boxed{{{answer}}}."
        records.append(TraceRecord(f"q{i:03d}", parse_trace(raw, Mode.HIGH), query=f"problem {i}"))
        refs[f"q{i:03d}"] = str(answer)
    return records, refs


def main():
    records, refs = synthetic_traces(200)
    samples, manifest = build_dataset(records, TruncationConfig(r_med=0.5, r_low=0.25), references=refs, seed=0)
    print(f"{len(samples)} samples from {len(records)} traces")
    for mode in (Mode.HIGH, Mode.MEDIUM, Mode.LOW):
        print(f"  {mode.value:<6} count={manifest.counts[mode]:<4} "
              f"mean thinking tokens={manifest.mean_thinking_tokens[mode]:.1f}")
    low = next(s for s in samples if s.mode is Mode.LOW)
    print("\nOne Low-mode target, truncated thinking plus connective:")
    print(low.target.raw_text[-200:])


if __name__ == "__main__":
    main()
