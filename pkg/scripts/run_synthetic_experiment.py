"""Simulate a full-scale experiment and push it through every pipeline stage.

Writes simulated scans for the requested comparisons, runs design, quant,
classify and mine, then prints the summary report alongside how many calls
agree with the simulation plan.

    python scripts/run_synthetic_experiment.py --out /tmp/espresso-run --seed 2000
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path

from espresso import cli
from espresso.callsig import parse_calls
from espresso.synthetic import COMPARISONS, genotype_d_plan, write_synthetic_experiment


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--seed", type=int, default=2000)
    parser.add_argument("--comparisons", default="CvsM", help=f"comma-separated subset of {','.join(COMPARISONS)}")
    args = parser.parse_args(argv)

    run_file = write_synthetic_experiment(
        args.out / "inputs", seed=args.seed, comparisons=tuple(args.comparisons.split(","))
    )
    code = cli.main(["run", str(run_file), "--out", str(args.out / "results")])
    if code:
        return code
    print((args.out / "results" / "report.txt").read_text(), end="")

    plan = genotype_d_plan()
    agreement: Counter = Counter()
    for call in parse_calls((args.out / "results" / "calls.tsv").read_text()):
        planned = plan.get((call.clone_id, call.comparison))
        if planned is not None and call.n:
            agreement[(call.comparison, planned, call.call)] += 1
    print("Planned vs called")
    for (cmp, planned, called), n in sorted(agreement.items()):
        print(f"  {cmp} {planned:>9} -> {called:<9} {n}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
