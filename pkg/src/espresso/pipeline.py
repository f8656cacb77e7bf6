"""End-to-end runs (design -> quant -> classify -> mine) and the summary report.

A run is described in the record format::

    EXPERIMENT SYNTHETIC_DROUGHT
    RUN_STAGES design quant classify mine
    SEED 2000
    PRINTING_CONFIGURATION Stanford4x16x24 4 16 24 QUADRANTS
    PARAMETER alpha 0.05
    INPUT pixels pixels.tsv

Input paths are relative to the run file.  Each run writes ``manifest.expd``
into its output directory: the resolved parameters plus a digest of every
input and output, so two runs can be compared with the description diff.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from . import callsig, design, quant, rulemine
from .descriptor import ExperimentDescription, Record, parse_description, serialize_description
from .tsvio import atomic_write, clone_sort_key, file_digest, parse_table

log = logging.getLogger(__name__)

STAGES = ("design", "quant", "classify", "mine")

# stage -> output name -> file name
OUTPUTS = {
    "design": {"layout": "layout.tsv", "arraymap": "arraymap.tsv"},
    "quant": {"spots": "spots.tsv"},
    "classify": {"calls": "calls.tsv"},
    "mine": {"facts": "facts.tsv", "rules": "rules.txt", "report": "report.txt"},
}


class PipelineError(Exception):
    def __init__(self, stage: str, message: str, exit_code: int = 1):
        self.stage = stage
        self.exit_code = exit_code
        super().__init__(f"[{stage}] {message}")


@dataclass
class PipelineRun:
    name: str = "RUN"
    stages: tuple[str, ...] = STAGES
    inputs: dict[str, Path] = field(default_factory=dict)
    seed: int = 0
    config: design.PrintingConfiguration = design.KNOWN_CONFIGURATIONS["Stanford4x16x24"]
    replicates: int = 4
    array_types: int = 2
    alpha: Decimal = Decimal("0.05")
    segmentation_alpha: Decimal = Decimal("0.01")
    channel: str = "combined"
    min_support: int = 5
    min_confidence: Decimal = Decimal("0.6")
    max_body_length: int = 1

    def __post_init__(self):
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ValueError(f"unknown stages {bad}; expected a subset of {STAGES}")
        # always execute in pipeline order
        self.stages = tuple(s for s in STAGES if s in self.stages)


_PARAMS = {
    "replicates": int,
    "array_types": int,
    "alpha": Decimal,
    "segmentation_alpha": Decimal,
    "channel": str,
    "min_support": int,
    "min_confidence": Decimal,
    "max_body_length": int,
}


def load_run(path: str | Path, **overrides) -> PipelineRun:
    path = Path(path)
    desc = parse_description(path.read_text(encoding="utf-8"))
    run = PipelineRun(name=desc.name or path.stem)
    base = path.parent
    kwargs: dict = {}
    for rec in desc:
        f = rec.fields
        if rec.keyword == "RUN_STAGES":
            kwargs["stages"] = tuple(str(s) for s in f)
        elif rec.keyword == "SEED":
            kwargs["seed"] = int(f[0])
        elif rec.keyword == "PRINTING_CONFIGURATION":
            if len(f) >= 4:
                kwargs["config"] = design.PrintingConfiguration(str(f[0]), int(f[1]), int(f[2]), int(f[3]))
            else:
                kwargs["config"] = design.parse_configuration(str(f[0]))
        elif rec.keyword == "PARAMETER":
            key = str(f[0])
            if key not in _PARAMS:
                raise ValueError(f"{path}: unknown parameter {key!r}")
            kwargs[key] = _PARAMS[key](str(f[1]))
        elif rec.keyword == "INPUT":
            kwargs.setdefault("inputs", {})[str(f[0])] = base / str(f[1])
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return replace(run, **kwargs)


def _record_value(v):
    if isinstance(v, (int, Decimal, str)):
        return v
    return str(v)


def manifest(run: PipelineRun, inputs: dict[str, tuple[str, str]], outputs: dict[str, tuple[str, str]]) -> ExperimentDescription:
    c = run.config
    recs = [
        Record("EXPERIMENT", (run.name,)),
        Record("RUN_STAGES", run.stages),
        Record("SEED", (run.seed,)),
        Record("RNG", (design.RNG_NAME,)),
        Record("PRINTING_CONFIGURATION", (c.name, c.quadrants, c.rows, c.cols, "QUADRANTS")),
    ]
    for key in _PARAMS:
        recs.append(Record("PARAMETER", (key, _record_value(getattr(run, key)))))
    for name, (rel, digest) in sorted(inputs.items()):
        recs.append(Record("INPUT", (name, rel, digest)))
    for name, (rel, digest) in sorted(outputs.items()):
        recs.append(Record("OUTPUT", (name, rel, digest)))
    return ExperimentDescription(tuple(recs))


class _Runner:
    def __init__(self, run: PipelineRun, out_dir: Path):
        self.run = run
        self.out = out_dir
        self.used_inputs: dict[str, tuple[str, str]] = {}
        self.written: dict[str, tuple[str, str]] = {}

    def need(self, stage: str, name: str, produced_by: str | None = None, optional: bool = False) -> Path | None:
        """Resolve an input: explicit INPUT first, else the run directory's stage output."""
        if name in self.run.inputs:
            path = self.run.inputs[name]
        elif produced_by is not None:
            path = self.out / OUTPUTS[produced_by][name]
        elif optional:
            return None
        else:
            raise PipelineError(stage, f"no INPUT {name} given", exit_code=2)
        if not path.is_file():
            if optional:
                return None
            raise PipelineError(stage, f"missing input {name}: {path}", exit_code=2)
        if name in self.run.inputs:
            self.used_inputs[name] = (self.run.inputs[name].name, file_digest(path))
        return path

    def write(self, stage: str, name: str, text: str) -> None:
        path = self.out / OUTPUTS[stage][name]
        atomic_write(path, text)
        self.written[name] = (path.name, file_digest(path))

    # --- stages ---

    def design(self) -> None:
        run = self.run
        clones_path = self.need("design", "clones")
        clones = [r["clone_id"] for r in parse_table(clones_path.read_text(), ("clone_id",))]
        layout = design.generate_layout(clones, run.config, run.replicates, run.array_types, run.seed)
        report = design.verify_layout(layout)
        if not report.ok:
            raise PipelineError("design", "; ".join(report.violations))
        self.write("design", "layout", design.export_plate_maps(layout))
        self.write("design", "arraymap", design.export_array_maps(layout))

    def _pairings(self, stage: str, optional: bool = False) -> list[callsig.Pairing] | None:
        path = self.need(stage, "pairing", optional=optional)
        return callsig.parse_pairings(path.read_text()) if path else None

    def quant(self) -> None:
        run = self.run
        mask = quant.read_mask(self.need("quant", "mask").read_text())
        cells = quant.read_cells(self.need("quant", "pixels").read_text(), mask)
        lookup = None
        arraymap_path = self.need("quant", "arraymap", "design", optional=True)
        pairings = self._pairings("quant", optional=True)
        if arraymap_path and pairings:
            amap = design.import_array_maps(arraymap_path.read_text())
            types = {a.array_id: a.array_type for p in pairings for a in p.arrays}
            lookup = lambda aid, pos: amap.get((types[aid], *pos)) if aid in types else None  # noqa: E731
        spots = quant.quantify(cells, float(run.segmentation_alpha), run.channel, clone_lookup=lookup)
        self.write("quant", "spots", quant.format_spots(spots))

    def classify(self) -> None:
        spots = quant.parse_spots(self.need("classify", "spots", "quant").read_text())
        amap = design.import_array_maps(self.need("classify", "arraymap", "design").read_text())
        calls = []
        for pairing in self._pairings("classify"):
            try:
                ds = callsig.assemble_replicates(spots, amap, pairing)
            except callsig.AssemblyError as exc:
                raise PipelineError("classify", str(exc), exit_code=2) from None
            calls.extend(callsig.classify_all(ds, self.run.alpha))
        self.write("classify", "calls", callsig.format_calls(calls))

    def mine(self) -> None:
        run = self.run
        calls = callsig.parse_calls(self.need("mine", "calls", "classify").read_text())
        cat_path = self.need("mine", "categories", optional=True)
        categories = rulemine.parse_categories(cat_path.read_text()) if cat_path else []
        hier_path = self.need("mine", "hierarchy", optional=True)
        hierarchy = rulemine.parse_hierarchy(hier_path.read_text()) if hier_path else frozenset()
        fb = rulemine.build_factbase(calls, categories, hierarchy)
        lang = rulemine.Language.for_factbase(fb, run.max_body_length)
        mined = rulemine.mine_rules(fb, run.min_support, Fraction(run.min_confidence), lang)
        self.write("mine", "facts", rulemine.format_facts(fb))
        self.write("mine", "rules", rulemine.format_rules(mined))
        self.write("mine", "report", report(calls, [(m.rule, m.stats) for m in mined], categories, hierarchy))


def run_pipeline(run: PipelineRun, out_dir: str | Path) -> ExperimentDescription:
    """Execute the run's stages in order; raises PipelineError on failure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = _Runner(run, out_dir)
    for stage in run.stages:
        log.info("stage %s", stage)
        try:
            getattr(runner, stage)()
        except PipelineError:
            raise
        except (ValueError, KeyError, OSError) as exc:
            raise PipelineError(stage, str(exc)) from exc
    desc = manifest(run, runner.used_inputs, runner.written)
    atomic_write(out_dir / "manifest.expd", serialize_description(desc))
    return desc


# --- report ----------------------------------------------------------------------


def report(
    calls: Sequence[callsig.ExpressionCall],
    rules: Iterable[tuple[rulemine.Rule, rulemine.RuleStats | None]],
    categories: Iterable[tuple[str, str]] = (),
    hierarchy: Iterable[tuple[str, str]] = (),
) -> str:
    """Call counts per comparison, up-calls per category, and the mined rules."""
    lines = ["Expression calls"]
    comparisons = sorted({c.comparison for c in calls})
    totals: Counter = Counter()
    for cmp in comparisons:
        counts = Counter(c.call for c in calls if c.comparison == cmp and c.n > 0)
        no_data = sum(1 for c in calls if c.comparison == cmp and c.n == 0)
        totals.update(counts)
        line = f"  {cmp}: {counts['up']} up, {counts['down']} down, {counts['unchanged']} unchanged"
        if no_data:
            line += f", {no_data} no data"
        lines.append(line)
    lines.append(f"  total: {totals['up']} up, {totals['down']} down, {totals['unchanged']} unchanged")

    member_of: dict[str, set[str]] = {}
    for clone, cat in rulemine.saturate(categories, hierarchy):
        member_of.setdefault(clone, set()).add(cat)
    lines.append("Up-regulated clones by category")
    for cmp in comparisons:
        up = [c.clone_id for c in calls if c.comparison == cmp and c.call == "up" and c.n > 0]
        per_cat = Counter(cat for clone in up for cat in member_of.get(clone, ()))
        uncategorized = sorted((c for c in up if c not in member_of), key=clone_sort_key)
        lines.append(f"  {cmp}")
        for cat in sorted(per_cat):
            lines.append(f"    {cat}: {per_cat[cat]}")
        if uncategorized:
            lines.append(f"    uncategorized: {len(uncategorized)} ({', '.join(uncategorized)})")

    lines.append("Rules")
    for rule, stats in rules:
        if stats is None or stats.confidence is None:
            lines.append(f"  {'n/a':>7}  {rule.render()}")
        else:
            pct = rulemine.format_percent(stats.confidence)
            lines.append(f"  {pct:>7}  {rule.render()}  ({stats.hits}/{stats.support})")
    return "\n".join(lines) + "\n"
