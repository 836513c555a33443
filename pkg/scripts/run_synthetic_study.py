#!/usr/bin/env python3
"""End-to-end synthetic study: generate a cohort, train with 5-fold CV,
score patients, and produce the downstream statistics and explainability
artifacts. Everything lands under --out and is reproducible from --seed."""

import argparse
import sys
from pathlib import Path

from tdam import cli

MODEL_OPTS = [
    "--opt", "model.d_in=16", "--opt", "model.d_model=24", "--opt", "model.n_heads=4",
    "--opt", "model.n_agents=4", "--opt", "model.n_landmarks=9",
    "--opt", "model.srmamba_layers=1", "--opt", "model.srmamba_rate=5",
    "--opt", "model.ssm_state_dim=6", "--opt", "model.agent_bias_side=4",
]
TRAIN_OPTS = ["--opt", "train.lr=0.001", "--opt", "train.max_epochs=20",
              "--opt", "train.warmup_epochs=3", "--opt", "train.folds=5"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/synthetic_study")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    seed = str(args.seed)
    data = out / "data"
    steps = [
        ["--seed", seed, "synth", "--n", str(args.n), "--patches", "9:16", "--dim", "16",
         "--censor", "0.25", "--out", str(data)],
        ["--seed", seed, "--jobs", str(args.jobs), *MODEL_OPTS, *TRAIN_OPTS, "train",
         "--cohort", str(data / "cohort.csv"), "--out", str(out / "train")],
        ["--seed", seed, "eval", "--cohort", str(data / "cohort.csv"),
         "--checkpoint", str(out / "train" / "fold0.ckpt"), "--out", str(out / "eval")],
        ["--seed", seed, "stats", "km", "--cohort", str(data / "cohort.csv"),
         "--risks", str(out / "eval" / "risks.csv"), "--out", str(out / "stats")],
        ["--seed", seed, "stats", "logrank", "--cohort", str(data / "cohort.csv"),
         "--risks", str(out / "eval" / "risks.csv"), "--out", str(out / "stats")],
        ["--seed", seed, "stats", "rmst", "--cohort", str(data / "cohort.csv"),
         "--risks", str(out / "eval" / "risks.csv"), "--tau", "60", "--out", str(out / "stats")],
        ["--seed", seed, "stats", "timeroc", "--cohort", str(data / "cohort.csv"),
         "--risks", str(out / "eval" / "risks.csv"), "--horizons", "1,3,6",
         "--out", str(out / "stats")],
        ["--seed", seed, "heatmap", "--checkpoint", str(out / "train" / "fold0.ckpt"),
         "--bag", str(data / "bags" / "P0000.bag"), "--pgm", "--out", str(out / "explain")],
        ["--seed", seed, "erf", "--checkpoint", str(out / "train" / "fold0.ckpt"),
         "--side", "4", "--out", str(out / "explain")],
    ]
    for argv in steps:
        rc = cli.run(argv)
        if rc != 0:
            print(f"step failed ({rc}): {' '.join(argv)}", file=sys.stderr)
            return rc
    print(f"study complete under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
