#!/usr/bin/env python3
"""Desk-scale end-to-end demo: synthesize a corpus, prepare a bundle,
train a small variant 2, evaluate it, and predict one profile.

Everything lands under one output directory, so the run is easy to
inspect and easy to delete. Finishes in well under a minute on a laptop.
"""

import argparse
import json
import os
import sys

from crossing_profiler.cli import main as cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="pipeline_demo", help="working directory")
    parser.add_argument("--seed", type=int, default=5)
    parser.add_argument("--sources", type=int, default=8)
    parser.add_argument("--variant", default="2")
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    config = os.path.join(args.out, "config.json")
    with open(config, "w", encoding="utf-8") as fh:
        # a short scene keeps synthesis and alignment fast
        json.dump({"scene": {
            "approach_length_m": 2.0,
            "crest_half_width_m": 1.0,
            "sampling_interval_m": 0.05,
            "profiler_margin_m": 0.2,
        }}, fh, indent=2)

    raw = os.path.join(args.out, "raw")
    bundle = os.path.join(args.out, "bundle")
    run = os.path.join(args.out, "run")
    metrics = os.path.join(args.out, "metrics")
    profile = os.path.join(args.out, "profile.csv")
    seed = str(args.seed)

    steps = [
        ["synth", "--count", str(args.sources), "--seed", seed,
         "--config", config, "--out", raw],
        ["prepare", "--raw", raw, "--out", bundle, "--seed", seed,
         "--noise-copies", "4", "--downsample-pairs", "2",
         "--sequence-length", "64"],
        ["train", "--bundle", bundle, "--out", run, "--seed", seed,
         "--variant", args.variant, "--d-model", "16", "--lstm-hidden", "16",
         "--num-heads", "2", "--lr", "2e-3", "--batch-size", "8",
         "--max-epochs", "20", "--patience", "10"],
        ["eval", "--checkpoint", os.path.join(run, "checkpoint.bin"),
         "--bundle", bundle, "--out", metrics],
        ["predict", "--checkpoint", os.path.join(run, "checkpoint.bin"),
         "--input", os.path.join(raw, "crossing_000.imu.csv"),
         "--out", profile],
    ]
    for argv in steps:
        print("+ crossing-profiler " + " ".join(argv), file=sys.stderr)
        code = cli(argv)
        if code != 0:
            print("step failed with exit code %d" % code, file=sys.stderr)
            return code
    print("done; see %s" % args.out, file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
