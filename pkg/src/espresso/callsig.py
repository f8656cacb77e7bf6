"""Per-clone expression calls from replicate log-ratios via the sign test.

Under the null every non-zero calibrated log-ratio is positive or negative with
probability 1/2, so the count of positives is Binomial(n, 1/2).  A clone is
called ``up`` when its positive count reaches the smallest k whose upper tail
is <= alpha (k=12 for n=16, alpha=0.05), ``down`` symmetrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

from .quant import SpotMeasurement
from .tsvio import clone_sort_key, format_table, parse_table

CALLS = ("up", "down", "unchanged")
ORIENTATIONS = ("forward", "swapped")


class CallError(ValueError):
    pass


class AssemblyError(CallError):
    pass


def _as_fraction(alpha) -> Fraction:
    if isinstance(alpha, float):
        return Fraction(repr(alpha))
    return Fraction(alpha)


@lru_cache(maxsize=None)
def binomial_upper_tail_exact(n: int, k: int) -> Fraction:
    """P(X >= k) for X ~ Binomial(n, 1/2), as an exact rational."""
    if n < 0 or k < 0 or k > n:
        raise CallError(f"need 0 <= k <= n, got n={n}, k={k}")
    return Fraction(sum(math.comb(n, i) for i in range(k, n + 1)), 2**n)


def binomial_upper_tail(n: int, k: int) -> float:
    return float(binomial_upper_tail_exact(n, k))


@lru_cache(maxsize=None)
def _threshold(n: int, alpha: Fraction) -> int:
    for t in range(n + 1):
        if binomial_upper_tail_exact(n, t) <= alpha:
            return t
    return n + 1


def threshold(n: int, alpha=0.05) -> int:
    """Smallest count t with P(X >= t) <= alpha; n + 1 when no count qualifies."""
    return _threshold(n, _as_fraction(alpha))


@dataclass(frozen=True)
class ExpressionCall:
    clone_id: str
    comparison: str
    call: str
    n: int
    k_positive: int
    k_negative: int
    tail_probability: float


def classify_clone(
    log_ratios: Sequence[float],
    alpha=0.05,
    clone_id: str = "",
    comparison: str = "",
) -> ExpressionCall:
    n = len(log_ratios)
    if n == 0:
        raise CallError("cannot classify a clone with no replicate values")
    a = _as_fraction(alpha)
    if not 0 < a < Fraction(1, 2):
        raise CallError(f"alpha must lie in (0, 0.5), got {alpha}")
    k_pos = sum(1 for v in log_ratios if v > 0)
    k_neg = sum(1 for v in log_ratios if v < 0)
    # exact zeros carry no sign information and drop out of the test
    n_eff = k_pos + k_neg
    if n_eff == 0:
        return ExpressionCall(clone_id, comparison, "unchanged", n, 0, 0, 1.0)
    t = _threshold(n_eff, a)
    if k_pos >= t:
        call = "up"
    elif k_neg >= t:
        call = "down"
    else:
        call = "unchanged"
    tail = binomial_upper_tail(n_eff, max(k_pos, k_neg))
    return ExpressionCall(clone_id, comparison, call, n, k_pos, k_neg, tail)


@dataclass(frozen=True)
class Provenance:
    array_id: str
    position: tuple[int, int, int]
    orientation: str


@dataclass
class ComparisonDataset:
    comparison: str
    values: dict[str, list[float]] = field(default_factory=dict)
    provenance: dict[str, list[Provenance]] = field(default_factory=dict)

    def clone_ids(self) -> list[str]:
        return sorted(self.values, key=clone_sort_key)


def classify_all(dataset: ComparisonDataset, alpha=0.05) -> list[ExpressionCall]:
    """One call per clone in clone-id order; clones with no usable values get n=0."""
    calls = []
    for clone in dataset.clone_ids():
        vals = dataset.values[clone]
        if vals:
            calls.append(classify_clone(vals, alpha, clone, dataset.comparison))
        else:
            calls.append(ExpressionCall(clone, dataset.comparison, "unchanged", 0, 0, 0, 1.0))
    return calls


@dataclass(frozen=True)
class PairedArray:
    array_id: str
    array_type: str
    orientation: str

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise CallError(f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}")


@dataclass(frozen=True)
class Pairing:
    """Arrays hybridized for one comparison, each read forward or dye-swapped."""

    comparison: str
    arrays: tuple[PairedArray, ...]


PAIRING_HEADER = ("comparison", "array_id", "array_type", "orientation")


def parse_pairings(text: str) -> list[Pairing]:
    grouped: dict[str, list[PairedArray]] = {}
    for r in parse_table(text, PAIRING_HEADER):
        grouped.setdefault(r["comparison"], []).append(
            PairedArray(r["array_id"], r["array_type"], r["orientation"])
        )
    return [Pairing(cmp, tuple(arrays)) for cmp, arrays in grouped.items()]


def format_pairings(pairings: Iterable[Pairing]) -> str:
    rows = [(p.comparison, a.array_id, a.array_type, a.orientation) for p in pairings for a in p.arrays]
    return format_table(PAIRING_HEADER, rows)


def assemble_replicates(
    spots: Iterable[SpotMeasurement],
    array_map: Mapping[tuple[str, int, int, int], str],
    pairing: Pairing,
) -> ComparisonDataset:
    """Collect log calibrated ratios per clone for one comparison.

    Swapped arrays contribute ``-log(ratio)``.  Flagged spots are skipped.
    Values are ordered by pairing array order, then spot position.
    """
    by_array: dict[str, list[SpotMeasurement]] = {}
    for s in spots:
        by_array.setdefault(s.array_id, []).append(s)
    clones = sorted({c for (t, *_), c in array_map.items()
                     if t in {a.array_type for a in pairing.arrays}}, key=clone_sort_key)
    ds = ComparisonDataset(pairing.comparison, {c: [] for c in clones}, {c: [] for c in clones})
    for arr in pairing.arrays:
        if arr.array_id not in by_array:
            raise AssemblyError(
                f"comparison {pairing.comparison}: array {arr.array_id} has no spot data"
            )
        sign = 1.0 if arr.orientation == "forward" else -1.0
        for s in sorted(by_array[arr.array_id], key=lambda s: s.position):
            key = (arr.array_type, *s.position)
            if key not in array_map:
                raise AssemblyError(
                    f"array {arr.array_id}: position {s.position} not in layout type {arr.array_type}"
                )
            clone = array_map[key]
            if s.clone_id is not None and s.clone_id != clone:
                raise AssemblyError(
                    f"array {arr.array_id} {s.position}: spot says clone {s.clone_id}, layout says {clone}"
                )
            if s.flagged or s.calibrated_ratio is None:
                continue
            ds.values[clone].append(sign * math.log(s.calibrated_ratio))
            ds.provenance[clone].append(Provenance(arr.array_id, s.position, arr.orientation))
    return ds


CALL_HEADER = ("clone_id", "comparison", "call", "n", "k_pos", "k_neg", "tail_probability")


def format_calls(calls: Iterable[ExpressionCall]) -> str:
    rows = [
        (c.clone_id, c.comparison, c.call, c.n, c.k_positive, c.k_negative, repr(c.tail_probability))
        for c in calls
    ]
    return format_table(CALL_HEADER, rows)


def parse_calls(text: str) -> list[ExpressionCall]:
    out = []
    for r in parse_table(text, CALL_HEADER):
        if r["call"] not in CALLS:
            raise CallError(f"unknown call {r['call']!r} for clone {r['clone_id']}")
        out.append(ExpressionCall(
            r["clone_id"], r["comparison"], r["call"], int(r["n"]),
            int(r["k_pos"]), int(r["k_neg"]), float(r["tail_probability"]),
        ))
    return out
