#!/usr/bin/env python3
"""Regenerate the seeded random weight files shipped with the package.

Training is out of scope for this artifact; benchmark timing only needs
the exact controller architecture, so the shipped weights are seeded
random draws. Rerunning this script reproduces the same bytes.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from rtabench.policy import random_network, save_network  # noqa: E402

SEEDS = {"no_sensors": 101, "all_sensors": 102}


def main() -> None:
    data_dir = pathlib.Path(__file__).resolve().parents[1] / "src" / "rtabench" / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    for variant, seed in SEEDS.items():
        path = data_dir / f"{variant}.mlpw"
        save_network(random_network(variant, seed=seed), path, fmt="binary")
        print(f"wrote {path} ({path.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
