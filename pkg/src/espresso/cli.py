"""``espresso`` command line.

Exit codes: 0 success, 1 stage/internal error, 2 missing or unusable input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

from . import callsig, design, descriptor, pipeline, quant, rulemine
from .tsvio import atomic_write, parse_table


class UsageError(Exception):
    """Missing or unreadable input file (exit 2)."""


def _read(path: str | Path) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    return p.read_text(encoding="utf-8")


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _read_description(path: str) -> descriptor.ExperimentDescription:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.expd"
    return descriptor.parse_description(_read(p))


# --- desc ----------------------------------------------------------------------


def cmd_desc_parse(args) -> int:
    desc = _read_description(args.file)
    sys.stdout.write(descriptor.serialize_description(desc))
    return 0


def cmd_desc_query(args) -> int:
    descs = [_read_description(f) for f in args.files]
    for rec in descriptor.query_records(descs, args.select):
        print(rec.to_line())
    return 0


def cmd_diff(args) -> int:
    a, b = _read_description(args.a), _read_description(args.b)
    entries = descriptor.diff_descriptions(a, b)
    for e in entries:
        print(e.describe())
    if not entries:
        print("no differences")
    return 0


# --- stages ---------------------------------------------------------------------


def cmd_design(args) -> int:
    clones = [r["clone_id"] for r in parse_table(_read(args.clones), ("clone_id",))]
    config = design.parse_configuration(args.config)
    layout = design.generate_layout(clones, config, args.replicates, args.array_types, args.seed)
    report = design.verify_layout(layout)
    out = Path(args.out)
    atomic_write(out / "layout.tsv", design.export_plate_maps(layout))
    atomic_write(out / "arraymap.tsv", design.export_array_maps(layout))
    for t, tr in report.per_type.items():
        counts = sorted(set(tr.replicate_counts.values()))
        print(f"type {t}: {tr.total_spots} spots, replicates per clone {counts}")
    for v in report.violations:
        print(f"violation: {v}")
    return 0 if report.ok else 1


def cmd_quant(args) -> int:
    mask = quant.read_mask(_read(args.mask))
    cells = quant.read_cells(_read(args.pixels), mask)
    lookup = None
    if args.layout and args.pairing:
        amap = design.import_array_maps(_read(args.layout))
        types = {a.array_id: a.array_type for p in callsig.parse_pairings(_read(args.pairing)) for a in p.arrays}
        lookup = lambda aid, pos: amap.get((types[aid], *pos)) if aid in types else None  # noqa: E731
    spots = quant.quantify(cells, args.alpha, args.channel, args.saturation, lookup)
    _emit(quant.format_spots(spots), args.output)
    return 0


def cmd_classify(args) -> int:
    spots = quant.parse_spots(_read(args.spots))
    amap = design.import_array_maps(_read(args.layout))
    calls = []
    for pairing in callsig.parse_pairings(_read(args.pairing)):
        try:
            ds = callsig.assemble_replicates(spots, amap, pairing)
        except callsig.AssemblyError as exc:
            raise UsageError(str(exc)) from None
        calls.extend(callsig.classify_all(ds, Fraction(args.alpha)))
    _emit(callsig.format_calls(calls), args.output)
    return 0


def _load_factbase(args) -> rulemine.FactBase:
    hierarchy = rulemine.parse_hierarchy(_read(args.hierarchy)) if args.hierarchy else frozenset()
    if args.facts:
        return rulemine.parse_facts(_read(args.facts), hierarchy)
    if not args.calls:
        raise UsageError("give --facts, or --calls (with optional --categories)")
    calls = callsig.parse_calls(_read(args.calls))
    cats = rulemine.parse_categories(_read(args.categories)) if args.categories else []
    return rulemine.build_factbase(calls, cats, hierarchy)


def cmd_mine(args) -> int:
    fb = _load_factbase(args)
    lang = rulemine.Language.for_factbase(fb, args.max_body)
    mined = rulemine.mine_rules(fb, args.min_sup, Fraction(args.min_conf), lang)
    _emit(rulemine.format_rules(mined), args.output)
    return 0


def cmd_report(args) -> int:
    calls = callsig.parse_calls(_read(args.calls))
    rules = rulemine.parse_rules(_read(args.rules)) if args.rules else []
    cats = rulemine.parse_categories(_read(args.categories)) if args.categories else []
    hierarchy = rulemine.parse_hierarchy(_read(args.hierarchy)) if args.hierarchy else frozenset()
    _emit(pipeline.report(calls, rules, cats, hierarchy), args.output)
    return 0


def cmd_run(args) -> int:
    overrides = {
        "seed": args.seed,
        "alpha": Decimal(args.alpha) if args.alpha else None,
        "min_confidence": Decimal(args.min_conf) if args.min_conf else None,
        "min_support": args.min_sup,
        "config": design.parse_configuration(args.config) if args.config else None,
        "stages": tuple(args.stages.split(",")) if args.stages is not None else None,
    }
    if overrides["stages"] == ("",):
        overrides["stages"] = ()
    run = pipeline.load_run(_read_path(args.run_file), **overrides)
    try:
        desc = pipeline.run_pipeline(run, args.out)
    except pipeline.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"run {desc.name}: stages {', '.join(run.stages) or '(none)'} -> {args.out}")
    return 0


def _read_path(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    return p


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="espresso", description="Microarray experiment pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    desc = sub.add_parser("desc", help="experiment description records")
    dsub = desc.add_subparsers(dest="desc_command", required=True)
    p = dsub.add_parser("parse", help="parse and print in canonical form")
    p.add_argument("file")
    p.set_defaults(func=cmd_desc_parse)
    p = dsub.add_parser("query", help="select records, e.g. --select 'TISSUE 0=D4I'")
    p.add_argument("files", nargs="+")
    p.add_argument("--select", required=True)
    p.set_defaults(func=cmd_desc_query)
    p = dsub.add_parser("diff", help="field-level differences between two descriptions")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("diff", help="diff two descriptions or run directories (manifest.expd)")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("design", help="generate a randomized replicated layout")
    p.add_argument("--clones", required=True, help="TSV with a clone_id column")
    p.add_argument("--config", default="Stanford4x16x24", help="named config or QxRxC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=4)
    p.add_argument("--array-types", type=int, default=2)
    p.add_argument("--out", default=".", help="directory for layout.tsv and arraymap.tsv")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("quant", help="segment spots and compute calibrated ratios")
    p.add_argument("--pixels", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--channel", choices=("combined", "ch1", "ch2"), default="combined")
    p.add_argument("--saturation", type=float, default=quant.DEFAULT_SATURATION)
    p.add_argument("--layout", help="arraymap.tsv, to fill clone ids (needs --pairing)")
    p.add_argument("--pairing")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_quant)

    p = sub.add_parser("classify", help="sign-test expression calls")
    p.add_argument("--spots", required=True)
    p.add_argument("--layout", required=True, help="arraymap.tsv")
    p.add_argument("--pairing", required=True)
    p.add_argument("--alpha", default="0.05")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("mine", help="induce rules from level and category facts")
    p.add_argument("--facts")
    p.add_argument("--calls")
    p.add_argument("--categories")
    p.add_argument("--hierarchy")
    p.add_argument("--min-conf", default="0.6")
    p.add_argument("--min-sup", type=int, default=5)
    p.add_argument("--max-body", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("report", help="summarize calls and rules")
    p.add_argument("--calls", required=True)
    p.add_argument("--rules")
    p.add_argument("--categories")
    p.add_argument("--hierarchy")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run pipeline stages from a run description")
    p.add_argument("run_file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha")
    p.add_argument("--min-conf")
    p.add_argument("--min-sup", type=int)
    p.add_argument("--config")
    p.add_argument("--stages", help="comma-separated subset of design,quant,classify,mine")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
