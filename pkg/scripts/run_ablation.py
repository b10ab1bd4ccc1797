#!/usr/bin/env python3
"""Toy-scale ablation grid: B, B+M, B+M+A, FULL over several seeds.

Reports per-variant mean held-out MAE/F on the toy RGB-D split, mirroring
the qualitative ordering of the model variants at desk scale.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from saldepth import Ablation
from run_toy_experiment import run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/ablation")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--n-images", type=int, default=200)
    parser.add_argument("--size", type=int, default=64)
    args = parser.parse_args(argv)

    out = Path(args.out)
    table = {}
    for ablation in (Ablation.B, Ablation.B_M, Ablation.B_M_A, Ablation.FULL):
        maes, fs = [], []
        for seed in args.seeds:
            result, minutes = run(out, seed, args.steps, args.n_images,
                                  args.size, ablation)
            print(f"{ablation.value:6s} seed={seed} mae={result.mae:.4f} "
                  f"f={result.f_measure:.4f} ({minutes:.1f} min)")
            maes.append(result.mae)
            fs.append(result.f_measure)
        table[ablation.value] = (float(np.mean(maes)), float(np.mean(fs)))

    print("\nvariant   mean MAE   mean F")
    for name, (m, f) in table.items():
        print(f"{name:8s} {m:8.4f} {f:8.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
