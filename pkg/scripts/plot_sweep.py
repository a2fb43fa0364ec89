"""Render the standard curves from a sweep.csv produced by `cclkit sweep`
or `cclkit baselines`.

Run: python3 scripts/plot_sweep.py sweep.csv [--out plots]
Emits accuracy-vs-knob, max-advantage-vs-knob, and loss-variance-vs-knob
(seeds averaged, min/max band) as PNG files, one triple per defense.
"""

import argparse
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

PANELS = (
    ("test_acc", "test accuracy"),
    ("max_adv", "max attack advantage"),
    ("loss_var", "final train-loss variance"),
)


def load_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.DictReader(fh) if row.get("test_acc")]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("csv_path")
    parser.add_argument("--out", default="plots")
    args = parser.parse_args()

    rows = load_rows(args.csv_path)
    if not rows:
        raise SystemExit("no complete rows in the sweep CSV")
    os.makedirs(args.out, exist_ok=True)

    by_defense = defaultdict(lambda: defaultdict(list))
    for row in rows:
        knob = float(row["knob"])
        by_defense[row["defense"]][knob].append(row)

    for defense, by_knob in by_defense.items():
        knobs = sorted(by_knob)
        for column, label in PANELS:
            means, los, his = [], [], []
            for k in knobs:
                vals = [float(r[column]) for r in by_knob[k]]
                means.append(sum(vals) / len(vals))
                los.append(min(vals))
                his.append(max(vals))
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.plot(knobs, means, marker="o")
            ax.fill_between(knobs, los, his, alpha=0.2)
            ax.set_xlabel("alpha" if defense == "ccl" else f"{defense} knob")
            ax.set_ylabel(label)
            ax.set_title(f"{defense}: {label}")
            fig.tight_layout()
            name = f"{defense}_{column}.png"
            fig.savefig(os.path.join(args.out, name), dpi=150)
            plt.close(fig)
            print(f"wrote {os.path.join(args.out, name)}")


if __name__ == "__main__":
    main()
