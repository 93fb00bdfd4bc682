#!/usr/bin/env python3
"""Run the unidirectional protocol and the split-learning baseline on the
same data and print a side-by-side summary of accuracy and transport cost."""

import argparse
from pathlib import Path

from unicon.runner import load_config, run_experiment, ExperimentRun


def last_metrics(out_dir):
    lines = (Path(out_dir) / "metrics.csv").read_text().strip().split("\n")
    header = lines[0].split(",")
    last = lines[-1].split(",")
    return dict(zip(header, last))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/compare")
    args = ap.parse_args()

    root = Path(__file__).resolve().parent.parent
    results = {}
    for name in ("unicon_k2", "sl_k2"):
        cfg = load_config(root / "configs" / f"{name}.toml")
        cfg.seed = args.seed
        out = run_experiment(cfg, out_dir=Path(args.out) / name)
        results[name] = last_metrics(out)

    print(f"{'':16s}{'val_acc':>10s}{'loss':>14s}{'msgs_up':>9s}{'msgs_down':>10s}")
    for name, m in results.items():
        print(f"{name:16s}{float(m['val_acc']):10.4f}{float(m['loss']):14.4f}"
              f"{m['msgs_up']:>9s}{m['msgs_down']:>10s}")


if __name__ == "__main__":
    main()
