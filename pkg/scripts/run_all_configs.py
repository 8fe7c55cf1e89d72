#!/usr/bin/env python3
"""Run every experiment config under configs/ and print where reports went."""

import sys
from pathlib import Path

from qmlrob.cli import main

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SUBCOMMANDS = {
    "baseline_noise.yaml": "baseline",
    "label_flip.yaml": "attack",
    "quid_defended.yaml": "defend",
    "fgsm.yaml": "attack",
    "depth_sweep.yaml": "sweep",
}


if __name__ == "__main__":
    rc = 0
    for name, sub in SUBCOMMANDS.items():
        print(f"== {sub} {name}")
        rc |= main([sub, "--config", str(CONFIG_DIR / name)])
    sys.exit(rc)
