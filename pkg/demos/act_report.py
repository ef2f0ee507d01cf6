"""Accuracy-cost trade-off report for a model run in three modes.

Each mode is compared with a baseline run: retention is accuracy over
baseline accuracy, compression is one minus cost over baseline cost.
High mode is scored on retention alone, the other modes on an even mix,
and the overall score is the mean of the three.

    python demos/act_report.py
"""

from budgetmode import BaselineMeasurement, ModeMeasurement, build_report
from budgetmode.act import scatter_csv

BASELINE = BaselineMeasurement(accuracy_base=0.80, cost_base=12000.0)
RUN = [
    ModeMeasurement("low", 0.62, 2100.0, benchmark="demo"),
    ModeMeasurement("medium", 0.71, 4800.0, benchmark="demo"),
    ModeMeasurement("high", 0.82, 11500.0, benchmark="demo"),
]


def main():
    report = build_report(RUN, BASELINE, benchmark="demo")
    for mode in ("low", "medium", "high"):
        print(f"{mode:<6} retention={report.retention[mode]:.3f} compression={report.compression[mode]:+.3f} "
              f"score={report.scores[mode]:.3f}")
    print(f"overall score {100 * report.s_act:.1f}")
    print()
    print(scatter_csv(RUN, [report]))


if __name__ == "__main__":
    main()
