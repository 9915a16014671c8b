#!/usr/bin/env python3
"""Monte-Carlo double-spend revert rates across attacker shares.

Emits the attack CSV (alpha,z,trials,wins,win_rate,stderr) for a grid of
attacker hash shares at a fixed confirmation depth.

Usage: python scripts/attack_curves.py [out.csv] [--z 6] [--trials 20000] [--seed 9000]
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from chainsim.metrics import attack_curve_csv

ALPHAS = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("output", nargs="?", default="out/attack_curves.csv")
    parser.add_argument("--z", type=int, default=6)
    parser.add_argument("--trials", type=int, default=20_000)
    parser.add_argument("--horizon", type=int, default=600)
    parser.add_argument("--seed", type=int, default=9000)
    args = parser.parse_args()

    csv_text = attack_curve_csv(ALPHAS, args.z, args.trials, args.horizon, args.seed)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text)
    print(csv_text, end="")
    print(f"\nwritten to {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
