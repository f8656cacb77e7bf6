"""False spot-detection rate of Mann-Whitney segmentation under the null.

Every pixel of a grid cell is drawn from one distribution, so any detection
is false.  Prints the observed rate per mask size next to the nominal alpha.

    python scripts/null_detection_rate.py --trials 10000 --alpha 0.01
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from espresso.quant import EXACT_LIMIT, GridCell, segment_spot


def null_rate(mask_pixels: int, background_pixels: int, trials: int, alpha: float, seed: int) -> float:
    size = mask_pixels + background_pixels
    cols = 4
    rows = math.ceil(size / cols)
    if rows * cols != size:
        raise ValueError("mask + background pixel count must be a multiple of 4")
    coords = [(r, c) for r in range(rows) for c in range(cols)]
    mask = frozenset(coords[:mask_pixels])
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        px = rng.normal(1000.0, 50.0, size=(rows, cols, 2))
        hits += segment_spot(GridCell("null", (1, 1, 1), px, mask), alpha=alpha).detected
    return hits / trials


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=10_000)
    parser.add_argument("--alpha", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    print(f"alpha = {args.alpha}, {args.trials} trials per row")
    print(f"{'mask':>5} {'background':>10} {'method':>9} {'rate':>8}")
    for mask, bg in [(4, 8), (6, 6), (8, 8), (12, 20)]:
        method = "exact" if mask + bg <= EXACT_LIMIT else "normal"
        rate = null_rate(mask, bg, args.trials, args.alpha, args.seed)
        print(f"{mask:>5} {bg:>10} {method:>9} {rate:>8.4f}")


if __name__ == "__main__":
    main()
