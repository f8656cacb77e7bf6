"""Spot quantification: segmentation, background-corrected ratios, calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .tsvio import format_table, parse_table

EXACT_LIMIT = 12
DEFAULT_SATURATION = 65535.0
FLAGS = ("absent", "low-signal", "saturated")


class QuantError(ValueError):
    pass


class CalibrationError(QuantError):
    pass


# --- Mann-Whitney ------------------------------------------------------------


def midranks(values: Sequence[float]) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a), dtype=float)
    sorted_a = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@lru_cache(maxsize=None)
def _u_counts(n: int, m: int) -> tuple[int, ...]:
    """Number of rank assignments giving U = 0..n*m (untied null)."""
    if n == 0 or m == 0:
        return (1,)
    # the top rank is either an x (beating all m ys) or a y
    with_x = _u_counts(n - 1, m)
    with_y = _u_counts(n, m - 1)
    out = [0] * (n * m + 1)
    for u, c in enumerate(with_x):
        out[u + m] += c
    for u, c in enumerate(with_y):
        out[u] += c
    return tuple(out)


def exact_upper_p(u: float, n: int, m: int) -> float:
    counts = _u_counts(n, m)
    start = math.ceil(u - 1e-9)
    hits = sum(counts[max(start, 0):])
    return float(Fraction(hits, sum(counts)))


def mann_whitney(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """U statistic (count of x beating y, ties count half) and one-sided p.

    Tests whether ``xs`` is stochastically greater than ``ys``.  For
    ``len(xs) + len(ys) <= 12`` the p-value is exact, P(U* >= U) over all
    equally likely assignments of ranks 1..N; above that a normal
    approximation with tie and continuity correction is used.
    """
    n, m = len(xs), len(ys)
    if n < 1 or m < 1:
        raise QuantError("mann_whitney needs at least one value in each sample")
    ranks = midranks(list(xs) + list(ys))
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    if n + m <= EXACT_LIMIT:
        return u, exact_upper_p(u, n, m)
    total = n + m
    _, tie_sizes = np.unique(ranks, return_counts=True)
    tie_term = float(((tie_sizes**3) - tie_sizes).sum()) / (total * (total - 1))
    var = n * m / 12.0 * ((total + 1) - tie_term)
    if var <= 0:
        return u, 1.0
    z = (u - n * m / 2.0 - 0.5) / math.sqrt(var)
    return u, 0.5 * math.erfc(z / math.sqrt(2.0))


# --- segmentation and measurement --------------------------------------------


@dataclass(frozen=True)
class GridCell:
    """One grid location: a (rows, cols, 2) pixel block plus the nominal spot mask."""

    array_id: str
    position: tuple[int, int, int]
    pixels: np.ndarray
    mask: frozenset

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 3 or px.shape[2] != 2:
            raise QuantError(f"pixels must have shape (rows, cols, 2), got {px.shape}")
        if (px < 0).any():
            raise QuantError("pixel intensities must be non-negative")
        object.__setattr__(self, "pixels", px)
        mask = frozenset((int(r), int(c)) for r, c in self.mask)
        h, w = px.shape[:2]
        if any(not (0 <= r < h and 0 <= c < w) for r, c in mask):
            raise QuantError("mask extends outside the cell")
        if not mask or len(mask) == h * w:
            raise QuantError("mask and its complement must both be non-empty")
        object.__setattr__(self, "mask", mask)

    def mask_array(self) -> np.ndarray:
        m = np.zeros(self.pixels.shape[:2], dtype=bool)
        rr, cc = zip(*self.mask)
        m[list(rr), list(cc)] = True
        return m


@dataclass(frozen=True)
class Segmentation:
    spot: np.ndarray
    background: np.ndarray
    detected: bool
    p_value: float


def channel_image(cell: GridCell, channel: str) -> np.ndarray:
    if channel == "ch1":
        return cell.pixels[:, :, 0]
    if channel == "ch2":
        return cell.pixels[:, :, 1]
    if channel == "combined":
        return cell.pixels.mean(axis=2)
    raise QuantError(f"unknown channel {channel!r}")


def segment_spot(cell: GridCell, channel: str = "combined", alpha: float = 0.01) -> Segmentation:
    if not 0 < alpha < 1:
        raise QuantError(f"alpha must lie in (0, 1), got {alpha}")
    if len(cell.mask) < 4:
        raise QuantError(f"spot mask has {len(cell.mask)} pixels; at least 4 are needed")
    img = channel_image(cell, channel)
    m = cell.mask_array()
    _, p = mann_whitney(img[m].tolist(), img[~m].tolist())
    return Segmentation(m, ~m, p <= alpha, p)


@dataclass(frozen=True)
class SpotMeasurement:
    array_id: str
    position: tuple[int, int, int]
    spot_mean: tuple[float, float]
    background_mean: tuple[float, float]
    corrected_ratio: float | None
    calibrated_ratio: float | None = None
    flags: frozenset = field(default_factory=frozenset)
    clone_id: str | None = None
    p_value: float | None = None

    @property
    def flagged(self) -> bool:
        return bool(self.flags)


def measure_spot(
    cell: GridCell,
    seg: Segmentation,
    saturation: float = DEFAULT_SATURATION,
    clone_id: str | None = None,
) -> SpotMeasurement:
    spot_px = cell.pixels[seg.spot]
    bg_px = cell.pixels[seg.background]
    m1, m2 = (float(v) for v in spot_px.mean(axis=0))
    b1, b2 = (float(v) for v in bg_px.mean(axis=0))
    flags = set()
    if not seg.detected:
        flags.add("absent")
    num, den = m1 - b1, m2 - b2
    ratio = num / den if num > 0 and den > 0 else None
    if ratio is None and seg.detected:
        flags.add("low-signal")
    if (spot_px >= saturation).any():
        flags.add("saturated")
    if "absent" in flags:
        ratio = None
    return SpotMeasurement(
        cell.array_id, cell.position, (m1, m2), (b1, b2), ratio,
        None, frozenset(flags), clone_id, seg.p_value,
    )


# --- calibration ---------------------------------------------------------------


def _middle_ratio(ratios: list):
    """Ratio whose log is the median of the log-ratios (geometric middle for even n)."""
    s = sorted(ratios)
    k = len(s)
    if k % 2:
        return s[k // 2]
    lo, hi = s[k // 2 - 1], s[k // 2]
    return lo if lo == hi else math.sqrt(lo * hi)


def calibrate_array(
    measurements: Iterable[SpotMeasurement], tol: float = 1e-9, max_iter: int = 50
) -> tuple[float, list[SpotMeasurement]]:
    """Scale corrected ratios so unflagged log-ratios have median zero.

    Re-estimates the centre of the calibrated log-ratios and rescales until it
    is within ``tol`` of zero.  Flagged spots pass through with no calibrated
    ratio.  Works on any ordered numeric type, so Fractions stay exact when
    the number of unflagged spots is odd.
    """
    measurements = list(measurements)
    good = [s.corrected_ratio for s in measurements if not s.flagged and s.corrected_ratio]
    if not good:
        raise CalibrationError("no unflagged spots to calibrate")
    c = 1
    for _ in range(max_iter):
        middle = _middle_ratio([c * r for r in good])
        if abs(math.log(middle)) <= tol:
            break
        c = c / middle
    else:
        raise CalibrationError(f"calibration did not converge in {max_iter} iterations")
    out = [
        s if s.flagged or s.corrected_ratio is None else replace(s, calibrated_ratio=c * s.corrected_ratio)
        for s in measurements
    ]
    return c, out


# --- files ---------------------------------------------------------------------

PIXEL_HEADER = ("array_id", "quadrant", "row", "col", "px_row", "px_col", "ch1", "ch2")
MASK_HEADER = ("px_row", "px_col")
SPOT_HEADER = (
    "array_id", "quadrant", "row", "col", "clone_id",
    "spot_ch1", "spot_ch2", "bg_ch1", "bg_ch2",
    "p_value", "corrected_ratio", "calibrated_ratio", "flags",
)


def read_mask(text: str) -> frozenset:
    return frozenset((int(r["px_row"]), int(r["px_col"])) for r in parse_table(text, MASK_HEADER))


def read_cells(pixels_text: str, mask: frozenset) -> list[GridCell]:
    """Group ``pixels.tsv`` rows into grid cells, ordered by array then position."""
    groups: dict[tuple, list[tuple[int, int, float, float]]] = {}
    for r in parse_table(pixels_text, PIXEL_HEADER):
        key = (r["array_id"], int(r["quadrant"]), int(r["row"]), int(r["col"]))
        groups.setdefault(key, []).append(
            (int(r["px_row"]), int(r["px_col"]), float(r["ch1"]), float(r["ch2"]))
        )
    cells = []
    for key in sorted(groups):
        px = groups[key]
        h = max(p[0] for p in px) + 1
        w = max(p[1] for p in px) + 1
        if len(px) != h * w:
            raise QuantError(f"cell {key}: expected {h * w} pixels, got {len(px)}")
        img = np.empty((h, w, 2))
        for pr, pc, c1, c2 in px:
            img[pr, pc] = (c1, c2)
        cells.append(GridCell(key[0], key[1:], img, mask))
    return cells


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def format_spots(spots: Sequence[SpotMeasurement]) -> str:
    rows = []
    for s in spots:
        rows.append((
            s.array_id, *s.position, s.clone_id or "",
            _fmt(s.spot_mean[0]), _fmt(s.spot_mean[1]),
            _fmt(s.background_mean[0]), _fmt(s.background_mean[1]),
            _fmt(s.p_value), _fmt(s.corrected_ratio), _fmt(s.calibrated_ratio),
            ",".join(f for f in FLAGS if f in s.flags),
        ))
    return format_table(SPOT_HEADER, rows)


def parse_spots(text: str) -> list[SpotMeasurement]:
    out = []
    opt = lambda v: float(v) if v else None  # noqa: E731
    for r in parse_table(text, SPOT_HEADER):
        flags = frozenset(f for f in r["flags"].split(",") if f)
        unknown = flags - set(FLAGS)
        if unknown:
            raise QuantError(f"unknown flags {sorted(unknown)}")
        out.append(SpotMeasurement(
            r["array_id"], (int(r["quadrant"]), int(r["row"]), int(r["col"])),
            (float(r["spot_ch1"]), float(r["spot_ch2"])),
            (float(r["bg_ch1"]), float(r["bg_ch2"])),
            opt(r["corrected_ratio"]), opt(r["calibrated_ratio"]), flags,
            r["clone_id"] or None, opt(r["p_value"]),
        ))
    return out


def quantify(
    cells: Sequence[GridCell],
    alpha: float = 0.01,
    channel: str = "combined",
    saturation: float = DEFAULT_SATURATION,
    clone_lookup=None,
) -> list[SpotMeasurement]:
    """Segment, measure and calibrate every cell, one calibration per array.

    ``clone_lookup(array_id, position)`` may supply clone ids.
    """
    by_array: dict[str, list[SpotMeasurement]] = {}
    for cell in cells:
        seg = segment_spot(cell, channel, alpha)
        clone = clone_lookup(cell.array_id, cell.position) if clone_lookup else None
        by_array.setdefault(cell.array_id, []).append(measure_spot(cell, seg, saturation, clone))
    out: list[SpotMeasurement] = []
    for array_id in sorted(by_array):
        try:
            _, calibrated = calibrate_array(by_array[array_id])
        except CalibrationError as exc:
            raise CalibrationError(f"array {array_id}: {exc}") from None
        out.extend(calibrated)
    return out
