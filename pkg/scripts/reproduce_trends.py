#!/usr/bin/env python3
"""Run the scaled trend experiments and print a digest table.

Mirrors the trend half of the acceptance suite: noise collapse of deep
amplitude models, shallow-vs-deep angle resilience, label-flip robustness gap
against the classical baseline (with and without label smoothing),
encoder-similarity poisoning vs random flips, and FGSM fragility ordering.
"""

import argparse
import sys
import tempfile
from pathlib import Path

from qmlrob.trends import (
    depth_resilience,
    evasion_ordering,
    label_flip_gap,
    noise_collapse,
    quid_dominance,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="qmlrob_trends_"))
    seeds = tuple(args.seeds)
    print(f"writing run artifacts under {out}\n")

    pure, mixed = noise_collapse(out, seeds)
    print(f"deep amplitude model:   clean {pure:5.1f}%  ->  depolarized {mixed:5.1f}%")

    shallow, deep = depth_resilience(out, seeds)
    print(f"angle depth (noisy):    2 layers {shallow:5.1f}%  vs  10 layers {deep:5.1f}%")

    gap = label_flip_gap(out, seeds)
    print(
        "label flip (ratio 0.5): quantum ratio "
        f"{gap['q']:.2f} (ls {gap['qls']:.2f})  vs  classical {gap['c']:.2f} (ls {gap['cls']:.2f})"
    )

    quid, rand = quid_dominance(out, seeds)
    print(f"poisoning ASR:          encoder-similarity {quid:5.1f}%  vs  random {rand:5.1f}%")

    ev = evasion_ordering(out, seeds)
    print(
        "fgsm eps=0.10 ratios:   classical "
        f"{ev['cmlp']:.2f}  angle {ev['angle']:.2f}  amplitude {ev['amp']:.2f}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
