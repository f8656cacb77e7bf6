"""Replicated, randomized microarray layouts.

Source clones are re-pipetted into ``replicates * array_types`` printing-plate
sets, each an independent random permutation of the clone list.  Array type
``t`` is printed from plate sets ``t*replicates .. (t+1)*replicates - 1``,
which fill the array's spot positions in order (see :func:`spot_position`).
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .tsvio import format_table, parse_table

RNG_NAME = "mt19937-fisher-yates/1"
WELLS_PER_PLATE = 96
_WELL_ROWS = "ABCDEFGH"
_WELL_COLS = 12


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class PrintingConfiguration:
    name: str
    quadrants: int
    rows: int
    cols: int

    def __post_init__(self):
        for attr in ("quadrants", "rows", "cols"):
            if getattr(self, attr) < 1:
                raise LayoutError(f"{attr} must be positive, got {getattr(self, attr)}")

    @property
    def spots(self) -> int:
        return self.quadrants * self.rows * self.cols


KNOWN_CONFIGURATIONS = {
    c.name: c
    for c in (
        PrintingConfiguration("Stanford4x16x24", 4, 16, 24),
        PrintingConfiguration("Stanford4x22x24", 4, 22, 24),
    )
}


def parse_configuration(text: str) -> PrintingConfiguration:
    """Look up a named configuration, or parse ``QxRxC`` / ``Name:QxRxC``."""
    if text in KNOWN_CONFIGURATIONS:
        return KNOWN_CONFIGURATIONS[text]
    name, _, dims = text.rpartition(":")
    try:
        q, r, c = (int(x) for x in dims.lower().split("x"))
    except ValueError:
        raise LayoutError(
            f"unknown printing configuration {text!r}; known: {', '.join(KNOWN_CONFIGURATIONS)}"
        ) from None
    return PrintingConfiguration(name or f"Custom{q}x{r}x{c}", q, r, c)


def spot_position(config: PrintingConfiguration, index: int) -> tuple[int, int, int]:
    """Map the ``index``-th printed spot to 1-based (quadrant, row, col).

    Quadrants are filled in declared order, row-major within a quadrant.
    """
    per_quadrant = config.rows * config.cols
    q, rem = divmod(index, per_quadrant)
    r, c = divmod(rem, config.cols)
    return q + 1, r + 1, c + 1


def spot_index(config: PrintingConfiguration, quadrant: int, row: int, col: int) -> int:
    return ((quadrant - 1) * config.rows + (row - 1)) * config.cols + (col - 1)


def well_name(index: int) -> tuple[int, str]:
    """(1-based plate number, well label) for the ``index``-th clone of a plate set."""
    plate, w = divmod(index, WELLS_PER_PLATE)
    r, c = divmod(w, _WELL_COLS)
    return plate + 1, f"{_WELL_ROWS[r]}{c + 1}"


def _well_index(plate: int, well: str) -> int:
    r = _WELL_ROWS.index(well[0])
    c = int(well[1:]) - 1
    if not 0 <= c < _WELL_COLS:
        raise LayoutError(f"bad well {well!r}")
    return (plate - 1) * WELLS_PER_PLATE + r * _WELL_COLS + c


def array_type_name(t: int) -> str:
    return chr(ord("A") + t)


def _randbelow(rng: random.Random, n: int) -> int:
    # rejection sampling on raw bits keeps the draw unbiased and pinned to
    # MT19937 output regardless of stdlib helper changes
    k = n.bit_length()
    while True:
        r = rng.getrandbits(k)
        if r < n:
            return r


def shuffled(items: Sequence, rng: random.Random) -> tuple:
    """Fisher-Yates shuffle; every ordering equally likely."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = _randbelow(rng, i + 1)
        out[i], out[j] = out[j], out[i]
    return tuple(out)


@dataclass(frozen=True)
class LayoutDesign:
    clone_ids: tuple[str, ...]
    config: PrintingConfiguration
    replicates: int
    plate_sets: tuple[tuple[str, ...], ...]
    array_maps: dict[str, tuple[str, ...]]
    seed: int
    rng: str = RNG_NAME

    @property
    def array_types(self) -> list[str]:
        return list(self.array_maps)

    def clone_at(self, array_type: str, quadrant: int, row: int, col: int) -> str:
        return self.array_maps[array_type][spot_index(self.config, quadrant, row, col)]


def generate_layout(
    clone_ids: Sequence[str],
    config: PrintingConfiguration,
    replicates: int = 4,
    array_types: int = 2,
    seed: int = 0,
) -> LayoutDesign:
    clone_ids = tuple(str(c) for c in clone_ids)
    if replicates < 1 or array_types < 1:
        raise LayoutError("replicates and array_types must be positive")
    if len(set(clone_ids)) != len(clone_ids):
        raise LayoutError("clone ids must be unique")
    if replicates * len(clone_ids) != config.spots:
        raise LayoutError(
            f"{replicates} replicates x {len(clone_ids)} clones = "
            f"{replicates * len(clone_ids)} spots, but configuration {config.name} "
            f"has {config.spots} spots"
        )
    n = len(clone_ids)
    if 1 < n < 8 and math.factorial(n) ** replicates < array_types:
        raise LayoutError(
            f"only {math.factorial(n) ** replicates} distinct arrangements exist "
            f"for {array_types} array types"
        )
    rng = random.Random(seed)
    plate_sets: list[tuple[str, ...]] = []
    maps: dict[str, tuple[str, ...]] = {}
    for t in range(array_types):
        while True:
            sets = [shuffled(clone_ids, rng) for _ in range(replicates)]
            arrangement = tuple(c for s in sets for c in s)
            # redraw on collision so types are distinct arrangements
            if len(clone_ids) < 2 or arrangement not in maps.values():
                break
        plate_sets.extend(sets)
        maps[array_type_name(t)] = arrangement
    return LayoutDesign(clone_ids, config, replicates, tuple(plate_sets), maps, seed)


@dataclass
class TypeReport:
    replicate_counts: dict[str, int]
    total_spots: int
    quadrant_occupancy: dict[int, dict[str, int]]


@dataclass
class VerificationReport:
    per_type: dict[str, TypeReport] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_layout(layout: LayoutDesign) -> VerificationReport:
    report = VerificationReport()
    expected = set(layout.clone_ids)
    config = layout.config
    per_quadrant = config.rows * config.cols
    for t, arrangement in layout.array_maps.items():
        counts = Counter(arrangement)
        occupancy: dict[int, dict[str, int]] = {}
        for q in range(config.quadrants):
            occupancy[q + 1] = dict(Counter(arrangement[q * per_quadrant : (q + 1) * per_quadrant]))
        report.per_type[t] = TypeReport(
            {c: counts.get(c, 0) for c in layout.clone_ids}, len(arrangement), occupancy
        )
        if len(arrangement) != config.spots:
            report.violations.append(
                f"type {t}: {len(arrangement)} spots, configuration has {config.spots}"
            )
        for c in layout.clone_ids:
            if counts.get(c, 0) != layout.replicates:
                report.violations.append(
                    f"type {t}: clone {c} placed {counts.get(c, 0)} times, expected {layout.replicates}"
                )
        for c in sorted(set(counts) - expected):
            report.violations.append(f"type {t}: unknown clone {c}")
    for i, s in enumerate(layout.plate_sets):
        if sorted(s) != sorted(layout.clone_ids):
            report.violations.append(f"plate set {i + 1} is not a permutation of the clones")
    seen: dict[tuple, str] = {}
    for t, arrangement in layout.array_maps.items():
        if len(expected) > 1 and arrangement in seen:
            report.violations.append(f"types {seen[arrangement]} and {t} have identical arrangements")
        seen.setdefault(arrangement, t)
    return report


PLATE_HEADER = ("plate_set", "plate", "well", "clone_id")
ARRAYMAP_HEADER = ("array_type", "quadrant", "row", "col", "clone_id")


def export_plate_maps(layout: LayoutDesign) -> str:
    rows = []
    for s, perm in enumerate(layout.plate_sets, start=1):
        for i, clone in enumerate(perm):
            plate, well = well_name(i)
            rows.append((s, plate, well, clone))
    return format_table(PLATE_HEADER, rows)


def import_plate_maps(text: str) -> tuple[tuple[str, ...], ...]:
    sets: dict[int, list[tuple[int, str]]] = {}
    for row in parse_table(text, PLATE_HEADER):
        idx = _well_index(int(row["plate"]), row["well"])
        sets.setdefault(int(row["plate_set"]), []).append((idx, row["clone_id"]))
    out = []
    for s in sorted(sets):
        wells = sorted(sets[s])
        if [i for i, _ in wells] != list(range(len(wells))):
            raise LayoutError(f"plate set {s} has gaps or duplicate wells")
        out.append(tuple(c for _, c in wells))
    return tuple(out)


def export_array_maps(layout: LayoutDesign) -> str:
    rows = []
    for t, arrangement in layout.array_maps.items():
        for i, clone in enumerate(arrangement):
            rows.append((t, *spot_position(layout.config, i), clone))
    return format_table(ARRAYMAP_HEADER, rows)


def import_array_maps(text: str) -> dict[tuple[str, int, int, int], str]:
    """Read ``arraymap.tsv`` into {(type, quadrant, row, col): clone_id}."""
    out = {}
    for row in parse_table(text, ARRAYMAP_HEADER):
        key = (row["array_type"], int(row["quadrant"]), int(row["row"]), int(row["col"]))
        if key in out:
            raise LayoutError(f"duplicate array position {key}")
        out[key] = row["clone_id"]
    return out
