"""Synthetic inputs: a reconstructed Genotype D dataset and simulated scans.

The Genotype D reconstruction is a labeled instantiation, not measured data.
It fixes the target counts (72 of 384 clones up in CvsM, 69 of those not up
in CvsS, 43 down in CvsM) and category memberships chosen so the six
target rules come out with confidences 69/72, 7/11, 8/12, 5/6, 13/16 and
9/11.  The denominators of the last five are our choice.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import callsig, design, rulemine
from .callsig import ComparisonDataset, ExpressionCall, PairedArray, Pairing
from .quant import PIXEL_HEADER
from .tsvio import atomic_write, format_table

COMPARISONS = ("CvsM", "CvsS", "MvsS")

HIERARCHY = frozenset({
    ("heat", "environment"),
    ("environment", "protectiveprocesses"),
    ("RPPP", "carbonmetabolism"),
    ("carbonmetabolism", "protectedprocesses"),
    ("photosynthesis", "protectedprocesses"),
    ("membranetransportprotein", "stressspecific"),
    ("dehydrin", "stressspecific"),
    ("stressspecific", "protectiveprocesses"),
    ("cellwallrelated", "protectiveprocesses"),
    ("ligninbiosynthesis", "protectiveprocesses"),
    ("thiolutilizingenzymes", "rosdetoxification"),
    ("rosdetoxification", "protectiveprocesses"),
})

# clones 1..45 carry the categories behind the target rules
_RULE_BLOCKS = {
    "heat": range(1, 7),
    "membranetransportprotein": range(7, 19),
    "cellwallrelated": range(19, 35),
    "ligninbiosynthesis": range(35, 46),
}
_FILLER_CATEGORIES = (
    "RPPP", "photosynthesis", "dehydrin", "thiolutilizingenzymes",
    "signaltransduction", "geneexpression",
)
UNCATEGORIZED = range(380, 385)
NO_CVSM_CALL = "18"


def genotype_d_plan() -> dict[tuple[str, str], str]:
    """Planned call per (clone, comparison); absent keys mean no usable data."""
    plan: dict[tuple[str, str], str] = {}
    cvsm_up = list(range(1, 6)) + list(range(7, 14)) + list(range(19, 32)) + list(range(46, 93))
    cvsm_down = range(93, 136)
    for c in range(1, 385):
        clone = str(c)
        if clone != NO_CVSM_CALL:
            plan[(clone, "CvsM")] = "up" if c in cvsm_up else "down" if c in cvsm_down else "unchanged"
        plan[(clone, "CvsS")] = "unchanged"
        plan[(clone, "MvsS")] = "unchanged"
    assert len(cvsm_up) == 72
    # 3 of the 72 stay up under severe stress; some HSPs and others go down
    for c in (46, 47, 48):
        plan[(str(c), "CvsS")] = "up"
    for c in list(range(3, 6)) + list(range(60, 80)):
        plan[(str(c), "CvsS")] = "down"
    for c in range(35, 44):
        plan[(str(c), "CvsS")] = "down"
    for c in range(136, 141):
        plan[(str(c), "CvsS")] = "up"
    for c in range(7, 15):
        plan[(str(c), "MvsS")] = "down"
    for c in range(150, 160):
        plan[(str(c), "MvsS")] = "up"
    return plan


def genotype_d_categories() -> list[tuple[str, str]]:
    pairs = [(str(c), cat) for cat, block in _RULE_BLOCKS.items() for c in block]
    for c in range(46, 380):
        pairs.append((str(c), _FILLER_CATEGORIES[c % len(_FILLER_CATEGORIES)]))
    return pairs


_SIGN_PATTERNS = {"up": (14, 2), "down": (2, 14), "unchanged": (8, 8)}


def planned_log_ratios(call: str, rng: np.random.Generator, n: int = 16) -> list[float]:
    """A replicate vector whose sign counts realize ``call``."""
    pos, neg = _SIGN_PATTERNS[call]
    pos, neg = pos * n // 16, neg * n // 16
    mags = rng.uniform(0.05, 2.0, size=pos + neg)
    vals = [float(m) for m in mags[:pos]] + [-float(m) for m in mags[pos:]]
    rng.shuffle(vals)
    return vals


def genotype_d_datasets(seed: int = 0) -> list[ComparisonDataset]:
    rng = np.random.default_rng(seed)
    plan = genotype_d_plan()
    out = []
    for cmp in COMPARISONS:
        ds = ComparisonDataset(cmp)
        for c in range(1, 385):
            call = plan.get((str(c), cmp))
            ds.values[str(c)] = planned_log_ratios(call, rng) if call else []
        out.append(ds)
    return out


def genotype_d_calls(seed: int = 0, alpha=0.05) -> list[ExpressionCall]:
    return [c for ds in genotype_d_datasets(seed) for c in callsig.classify_all(ds, alpha)]


def genotype_d_factbase(seed: int = 0) -> rulemine.FactBase:
    return rulemine.build_factbase(genotype_d_calls(seed), genotype_d_categories(), HIERARCHY)


# --- simulated scans -----------------------------------------------------------

TRUE_LOG_RATIO = {"up": 1.2, "down": -1.2, "unchanged": 0.0}


def default_pairings(comparisons=COMPARISONS) -> list[Pairing]:
    """Two slides (types A and B) per comparison, each with one dye-swapped array."""
    return [
        Pairing(cmp, (
            PairedArray(f"{cmp}-A1", "A", "forward"),
            PairedArray(f"{cmp}-A2", "A", "swapped"),
            PairedArray(f"{cmp}-B1", "B", "forward"),
            PairedArray(f"{cmp}-B2", "B", "swapped"),
        ))
        for cmp in comparisons
    ]


def spot_mask(size: int = 5, radius: float = 1.5) -> frozenset:
    mid = (size - 1) / 2
    return frozenset(
        (r, c) for r in range(size) for c in range(size)
        if (r - mid) ** 2 + (c - mid) ** 2 <= radius**2
    )


def simulate_pixels(
    layout: design.LayoutDesign,
    pairings: list[Pairing],
    plan: dict[tuple[str, str], str],
    seed: int,
    cell_size: int = 5,
    dye_bias: float = 1.3,
    noise: float = 0.35,
) -> str:
    """``pixels.tsv`` text for every array named in ``pairings``.

    Clones with no planned call in a comparison print as blank spots.
    """
    rng = np.random.default_rng(seed)
    mask = spot_mask(cell_size)
    in_mask = np.zeros((cell_size, cell_size), dtype=bool)
    for r, c in mask:
        in_mask[r, c] = True
    rows = []
    for pairing in pairings:
        for arr in pairing.arrays:
            arrangement = layout.array_maps[arr.array_type]
            for i, clone in enumerate(arrangement):
                q, r, c = design.spot_position(layout.config, i)
                call = plan.get((clone, pairing.comparison))
                bg = rng.normal(100.0, 5.0, size=(cell_size, cell_size, 2))
                img = bg.copy()
                if call is not None:
                    amp = 800.0 * rng.lognormal(0.0, 0.2)
                    lr = TRUE_LOG_RATIO[call] + rng.normal(0.0, noise)
                    if arr.orientation == "swapped":
                        lr = -lr
                    sig = np.array([amp * np.exp(lr / 2) * dye_bias, amp * np.exp(-lr / 2)])
                    spot = sig * (1.0 + rng.normal(0.0, 0.05, size=(cell_size, cell_size, 2)))
                    img[in_mask] += spot[in_mask]
                img = np.clip(np.rint(img), 0, 65535).astype(int)
                for pr in range(cell_size):
                    for pc in range(cell_size):
                        rows.append((arr.array_id, q, r, c, pr, pc, img[pr, pc, 0], img[pr, pc, 1]))
    return format_table(PIXEL_HEADER, rows)


def write_synthetic_experiment(
    directory: str | Path,
    config: design.PrintingConfiguration | None = None,
    seed: int = 2000,
    comparisons=("CvsM",),
    stages=("design", "quant", "classify", "mine"),
) -> Path:
    """Write a complete run directory and return the path of its ``run.expd``.

    With the default full-scale configuration the clones and calls follow
    the Genotype D plan; smaller configurations use the first clones of it.
    """
    directory = Path(directory)
    config = config or design.KNOWN_CONFIGURATIONS["Stanford4x16x24"]
    replicates = 4
    n_clones = config.spots // replicates
    clones = [str(c) for c in range(1, n_clones + 1)]
    layout = design.generate_layout(clones, config, replicates, 2, seed)
    plan = genotype_d_plan()
    pairings = default_pairings(comparisons)

    atomic_write(directory / "clones.tsv", format_table(("clone_id",), [(c,) for c in clones]))
    atomic_write(directory / "pixels.tsv", simulate_pixels(layout, pairings, plan, seed + 1))
    atomic_write(
        directory / "mask.tsv", format_table(("px_row", "px_col"), sorted(spot_mask()))
    )
    atomic_write(directory / "pairing.tsv", callsig.format_pairings(pairings))
    keep = set(clones)
    atomic_write(
        directory / "categories.tsv",
        format_table(("clone_id", "category"), [p for p in genotype_d_categories() if p[0] in keep]),
    )
    atomic_write(directory / "hierarchy.tsv", rulemine.format_hierarchy(HIERARCHY))
    run = "\n".join([
        "EXPERIMENT SYNTHETIC_DROUGHT",
        "RUN_STAGES " + " ".join(stages),
        f"SEED {seed}",
        f"PRINTING_CONFIGURATION {config.name} {config.quadrants} {config.rows} {config.cols} QUADRANTS",
        f"PARAMETER replicates {replicates}",
        "INPUT clones clones.tsv",
        "INPUT pixels pixels.tsv",
        "INPUT mask mask.tsv",
        "INPUT pairing pairing.tsv",
        "INPUT categories categories.tsv",
        "INPUT hierarchy hierarchy.tsv",
        "",
    ])
    atomic_write(directory / "run.expd", run)
    return directory / "run.expd"


def write_genotype_d_run(directory: str | Path, seed: int = 0) -> Path:
    """Write the reconstructed Genotype D calls plus a mine-only run file.

    Returns the path of ``genotype_d.expd``.  Running it through the pipeline
    mines the reconstructed fact base and writes the summary report.
    """
    directory = Path(directory)
    atomic_write(directory / "calls.tsv", callsig.format_calls(genotype_d_calls(seed)))
    atomic_write(
        directory / "categories.tsv",
        format_table(("clone_id", "category"), genotype_d_categories()),
    )
    atomic_write(directory / "hierarchy.tsv", rulemine.format_hierarchy(HIERARCHY))
    run = "\n".join([
        "EXPERIMENT GENOTYPE_D_RECONSTRUCTION",
        "RUN_STAGES mine",
        f"SEED {seed}",
        "INPUT calls calls.tsv",
        "INPUT categories categories.tsv",
        "INPUT hierarchy hierarchy.tsv",
        "",
    ])
    atomic_write(directory / "genotype_d.expd", run)
    return directory / "genotype_d.expd"
