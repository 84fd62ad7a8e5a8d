#!/usr/bin/env python3
"""Run the full four-variant ablation over five seeds on the desk benchmark.

Generates the dataset next to the output directory if no manifest is given,
then prints the per-variant mean/stddev summary. Expect roughly half an hour
on one CPU core.

Usage: python scripts/run_ablation.py OUT_DIR [--manifest PATH] [--seeds 0,1,2,3,4]
"""

import argparse
import sys
from pathlib import Path

from prnn.cli import main as prnn_main
from prnn.config import ExperimentConfig


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--manifest", default=None)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "config.json"
    cfg_path.write_text(ExperimentConfig.desk().to_json())

    argv = ["ablate", "--config", str(cfg_path), "--seeds", args.seeds,
            "--out", str(out)]
    if args.manifest:
        argv += ["--manifest", args.manifest]
    code = prnn_main(argv)
    if code == 0:
        print((out / "summary.csv").read_text())
    return code


if __name__ == "__main__":
    sys.exit(main())
