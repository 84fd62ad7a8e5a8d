#!/usr/bin/env python3
"""Train and evaluate one variant end to end on the desk benchmark.

Usage: python scripts/run_single.py OUT_DIR [--variant prnn_full] [--seed 0]
"""

import argparse
import sys
from pathlib import Path

from prnn.cli import main as prnn_main
from prnn.config import ExperimentConfig


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--variant", default="prnn_full")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "config.json"
    cfg_path.write_text(ExperimentConfig.desk().to_json())

    manifest = out / "data" / "manifest.json"
    if not manifest.exists():
        code = prnn_main(["gen-data", "--config", str(cfg_path),
                          "--out", str(out / "data")])
        if code != 0:
            return code
    return prnn_main(["train", "--config", str(cfg_path),
                      "--manifest", str(manifest),
                      "--variant", args.variant, "--seed", str(args.seed),
                      "--out", str(out / f"{args.variant}_seed{args.seed}")])


if __name__ == "__main__":
    sys.exit(main())
