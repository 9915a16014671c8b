#!/usr/bin/env python3
"""Run the headline co-satisfiability demonstration.

Executes the baseline bandwidth sweep plus the three degenerate controls and
prints a combined panel. Each control should flip exactly one flag.

Usage: python scripts/run_headline.py [output_dir]
"""
from __future__ import annotations

import sys
from pathlib import Path

from chainsim.config import load_raw
from chainsim.harness import run_sweep

SCENARIOS = Path(__file__).parent.parent / "scenarios"

HEADLINE = [
    "baseline.toml",
    "control_single_miner.toml",
    "control_attacker_majority.toml",
    "control_low_bandwidth.toml",
]


def main() -> int:
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/headline")
    combined: list[str] = []
    for filename in HEADLINE:
        target = outdir / filename.removesuffix(".toml")
        panel_path = run_sweep(load_raw(SCENARIOS / filename), target)
        lines = panel_path.read_text().strip().splitlines()
        if not combined:
            combined.append(lines[0])
        combined.extend(lines[1:])
        print(f"completed {filename} -> {panel_path}")
    combined_path = outdir / "combined_panel.csv"
    combined_path.write_text("\n".join(combined) + "\n")
    print(f"\ncombined panel: {combined_path}\n")
    print("\n".join(combined))
    return 0


if __name__ == "__main__":
    sys.exit(main())
