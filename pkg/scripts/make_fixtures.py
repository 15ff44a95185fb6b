#!/usr/bin/env python3
"""Generate synthetic fixture files for CLI experiments.

Writes a striped 64x64 weight matrix, a 256x64 calibration token matrix, the
derived activation stats, and an output-side calibration matrix. Everything
is seeded, so regenerated fixtures are byte-identical.
"""

import argparse
from pathlib import Path

from symprune.calibration import compute_stats, write_stats
from symprune.matrix import write_symw
from symprune.verification import striped_instance


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("fixtures"))
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    w, x, y = striped_instance(args.seed)
    write_symw(args.out / "weights.symw", w)
    write_symw(args.out / "tokens.symw", x)
    write_symw(args.out / "output_calib.symw", y)
    write_stats(args.out / "stats.syma", compute_stats(x))
    for name in ("weights.symw", "tokens.symw", "output_calib.symw", "stats.syma"):
        print(f"wrote {args.out / name}")


if __name__ == "__main__":
    main()
