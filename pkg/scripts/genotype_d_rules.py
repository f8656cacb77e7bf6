"""Mine the reconstructed Genotype D fact base and show the target rules.

Prints each target rule with its mined support, exact confidence and the
two-decimal rendering, then the total number of rules at the given
thresholds.

    python scripts/genotype_d_rules.py --min-sup 5 --min-conf 0.6
"""

from __future__ import annotations

import argparse
from fractions import Fraction

from espresso.rulemine import Category, Language, Level, Rule, format_percent, mine_rules
from espresso.synthetic import genotype_d_factbase

TARGET_RULES = [
    (Rule(Level("CvsS", "positive"), (Level("CvsM", "positive"),), negated=True), "95.83%"),
    (Rule(Level("CvsM", "positive"), (Category("membranetransportprotein"),)), "63.63%"),
    (Rule(Level("MvsS", "negative"), (Category("membranetransportprotein"),)), "66.67%"),
    (Rule(Level("CvsM", "positive"), (Category("heat"),)), "83.33%"),
    (Rule(Level("CvsM", "positive"), (Category("cellwallrelated"),)), "81.25%"),
    (Rule(Level("CvsS", "negative"), (Category("ligninbiosynthesis"),)), "81.81%"),
]


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--min-sup", type=int, default=5)
    parser.add_argument("--min-conf", default="0.6")
    parser.add_argument("--max-body", type=int, default=1)
    args = parser.parse_args(argv)

    fb = genotype_d_factbase(args.seed)
    mined = mine_rules(fb, args.min_sup, Fraction(args.min_conf), Language.for_factbase(fb, args.max_body))
    found = {m.rule: m.stats for m in mined}
    for rule, target in TARGET_RULES:
        stats = found.get(rule)
        if stats is None:
            print(f"not mined: {rule.render()}")
            continue
        pct = format_percent(stats.confidence)
        print(rule.render())
        print(f"     {stats.hits}/{stats.support} -> {pct} (target {target})")
    print(f"{len(mined)} rules at min support {args.min_sup}, min confidence {args.min_conf}")


if __name__ == "__main__":
    main()
