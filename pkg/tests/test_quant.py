import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from espresso.quant import (
    CalibrationError,
    GridCell,
    QuantError,
    Segmentation,
    SpotMeasurement,
    calibrate_array,
    format_spots,
    mann_whitney,
    measure_spot,
    midranks,
    parse_spots,
    quantify,
    read_cells,
    read_mask,
    segment_spot,
)


def permutation_p(xs, ys):
    """P(U* >= U) over every way of choosing which ranks 1..N belong to xs."""
    n, m = len(xs), len(ys)
    ranks = midranks(list(xs) + list(ys))
    u_obs = ranks[:n].sum() - n * (n + 1) / 2
    N = n + m
    hits = total = 0
    for chosen in itertools.combinations(range(1, N + 1), n):
        u = sum(chosen) - n * (n + 1) / 2
        hits += u >= u_obs - 1e-9
        total += 1
    return hits / total


# --- Mann-Whitney ---------------------------------------------------------------


def test_separated_samples():
    u, p = mann_whitney([4, 5, 6], [1, 2, 3])
    assert u == 9
    assert p == pytest.approx(0.05, abs=1e-15)


def test_single_tie():
    assert mann_whitney([5], [5]) == (0.5, 0.5)


def test_empty_rejected():
    with pytest.raises(QuantError):
        mann_whitney([], [1.0])


small_samples = st.tuples(st.integers(1, 6), st.integers(1, 6)).flatmap(
    lambda nm: st.tuples(
        st.lists(st.integers(0, 5), min_size=nm[0], max_size=nm[0]),
        st.lists(st.integers(0, 5), min_size=nm[1], max_size=nm[1]),
    )
)


@settings(max_examples=300)
@given(small_samples)
def test_exact_p_matches_enumeration(sample):
    xs, ys = sample
    assert mann_whitney(xs, ys)[1] == pytest.approx(permutation_p(xs, ys), abs=1e-12)


@given(small_samples)
def test_u_symmetry(sample):
    xs, ys = sample
    assert mann_whitney(xs, ys)[0] + mann_whitney(ys, xs)[0] == len(xs) * len(ys)


@settings(max_examples=100)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=5))
def test_identical_multisets_not_significant(xs):
    assert mann_whitney(xs, list(reversed(xs)))[1] >= 0.5


@settings(max_examples=100)
@given(
    st.lists(st.floats(0, 100, allow_nan=False), min_size=7, max_size=20),
    st.lists(st.floats(0, 100, allow_nan=False), min_size=7, max_size=20),
)
def test_large_samples_match_scipy_asymptotic(xs, ys):
    assume(len(set(xs + ys)) > 1)
    u, p = mann_whitney(xs, ys)
    ref = stats.mannwhitneyu(xs, ys, alternative="greater", method="asymptotic")
    assert u == pytest.approx(ref.statistic)
    assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


# --- segmentation and measurement ----------------------------------------------

CROSS = frozenset({(1, 1), (1, 2), (2, 1), (2, 2)})


def cell(spot=(1000.0, 1000.0), bg=(100.0, 100.0), mask=CROSS, size=4, rng=None):
    px = np.empty((size, size, 2))
    for r in range(size):
        for c in range(size):
            base = spot if (r, c) in mask else bg
            jitter = rng.normal(0, 1, 2) if rng is not None else (0.01 * (r * size + c),) * 2
            px[r, c] = np.asarray(base) + jitter
    return GridCell("arr", (1, 1, 1), px, mask)


def test_bright_spot_detected():
    seg = segment_spot(cell(rng=np.random.default_rng(0)))
    assert seg.detected
    assert seg.spot.sum() == 4 and seg.background.sum() == 12


def test_tiny_mask_rejected():
    with pytest.raises(QuantError):
        segment_spot(cell(mask=frozenset({(0, 0), (0, 1)})))


def test_mask_must_leave_background():
    full = frozenset((r, c) for r in range(2) for c in range(2))
    with pytest.raises(QuantError):
        GridCell("a", (1, 1, 1), np.ones((2, 2, 2)), full)


def measured(m1, b1, m2, b2, detected=True):
    px = np.empty((4, 4, 2))
    px[:, :] = (b1, b2)
    for r, c in CROSS:
        px[r, c] = (m1, m2)
    gc = GridCell("arr", (1, 1, 1), px, CROSS)
    seg = Segmentation(gc.mask_array(), ~gc.mask_array(), detected, 0.0)
    return measure_spot(gc, seg)


def test_corrected_ratio_arithmetic():
    assert measured(200, 100, 150, 100).corrected_ratio == 2.0
    assert measured(180, 100, 180, 100).corrected_ratio == 1.0


def test_low_signal_flag():
    s = measured(90, 100, 150, 100)
    assert s.corrected_ratio is None and "low-signal" in s.flags


def test_absent_and_saturated_flags():
    assert measured(200, 100, 150, 100, detected=False).flags == {"absent"}
    assert "saturated" in measured(65535, 100, 150, 100).flags


@settings(max_examples=50)
@given(st.randoms(use_true_random=False))
def test_measure_invariant_under_pixel_reordering(rnd):
    gc = cell(rng=np.random.default_rng(rnd.randint(0, 10**6)))
    coords = [(r, c) for r in range(4) for c in range(4)]
    shuffled = coords[:]
    rnd.shuffle(shuffled)
    where = dict(zip(coords, shuffled))
    px = np.empty_like(gc.pixels)
    for src, dst in where.items():
        px[dst] = gc.pixels[src]
    moved = GridCell("arr", (1, 1, 1), px, frozenset(where[p] for p in gc.mask))
    a = measure_spot(gc, segment_spot(gc))
    b = measure_spot(moved, segment_spot(moved))
    assert a.spot_mean == pytest.approx(b.spot_mean)
    assert a.background_mean == pytest.approx(b.background_mean)
    assert a.corrected_ratio == pytest.approx(b.corrected_ratio)


# --- calibration -------------------------------------------------------------------


def spot(ratio, flags=()):
    return SpotMeasurement("a", (1, 1, 1), (0.0, 0.0), (0.0, 0.0), ratio, flags=frozenset(flags))


def test_constant_ratios_calibrate_to_one():
    c, out = calibrate_array([spot(2.0)] * 5)
    assert c == 0.5
    assert [s.calibrated_ratio for s in out] == [1.0] * 5


def test_already_centred_is_identity():
    c, out = calibrate_array([spot(0.5), spot(1.0), spot(2.0)])
    assert c == 1
    assert [s.calibrated_ratio for s in out] == [0.5, 1.0, 2.0]


def test_flagged_spots_pass_through():
    c, out = calibrate_array([spot(4.0), spot(None, ["absent"]), spot(3.0, ["saturated"])])
    assert c == 0.25
    assert out[1].calibrated_ratio is None and out[2].calibrated_ratio is None


def test_all_flagged_is_error():
    with pytest.raises(CalibrationError):
        calibrate_array([spot(None, ["absent"])])


def median_log(values):
    s = sorted(math.log(v) for v in values)
    k = len(s)
    return s[k // 2] if k % 2 else (s[k // 2 - 1] + s[k // 2]) / 2


@settings(max_examples=200)
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=40))
def test_median_log_ratio_is_zero(ratios):
    _, out = calibrate_array([spot(r) for r in ratios])
    assert abs(median_log([s.calibrated_ratio for s in out])) <= 1e-9


fractions = st.fractions(min_value=Fraction(1, 100), max_value=100)


@given(st.lists(fractions, min_size=1, max_size=15).filter(lambda v: len(v) % 2), fractions)
def test_scale_equivariance_exact(ratios, k):
    c1, out1 = calibrate_array([spot(r) for r in ratios])
    c2, out2 = calibrate_array([spot(k * r) for r in ratios])
    assert c2 == c1 / k
    assert [s.calibrated_ratio for s in out1] == [s.calibrated_ratio for s in out2]


@given(st.lists(st.floats(1e-2, 1e2), min_size=1, max_size=20), st.integers(-8, 8))
def test_scale_equivariance_power_of_two(ratios, e):
    # scaling by 2**e is exact in binary floating point
    k = 2.0**e
    c1, out1 = calibrate_array([spot(r) for r in ratios])
    c2, out2 = calibrate_array([spot(k * r) for r in ratios])
    assert c2 == pytest.approx(c1 / k, rel=1e-12)
    for a, b in zip(out1, out2):
        assert a.calibrated_ratio == pytest.approx(b.calibrated_ratio, rel=1e-12)


# --- files and the array-level driver ------------------------------------------------


def test_spot_file_round_trip():
    s = [
        SpotMeasurement("a1", (1, 2, 3), (200.5, 150.0), (100.0, 100.0), 2.01, 1.5, frozenset(), "7", 1e-5),
        SpotMeasurement("a1", (1, 2, 4), (90.0, 150.0), (100.0, 100.0), None, None,
                        frozenset({"low-signal", "saturated"}), None, 0.2),
    ]
    assert parse_spots(format_spots(s)) == s


def test_quantify_reads_pixel_tables():
    mask_text = "px_row\tpx_col\n" + "".join(f"{r}\t{c}\n" for r, c in sorted(CROSS))
    rows = ["array_id\tquadrant\trow\tcol\tpx_row\tpx_col\tch1\tch2"]
    for col, (sig1, sig2) in enumerate([(900, 500), (700, 700), (500, 900)], start=1):
        for r in range(4):
            for c in range(4):
                on = (r, c) in CROSS
                v1 = (sig1 if on else 100) + r + c
                v2 = (sig2 if on else 100) + r + c
                rows.append(f"x\t1\t1\t{col}\t{r}\t{c}\t{v1}\t{v2}")
    cells = read_cells("\n".join(rows) + "\n", read_mask(mask_text))
    assert len(cells) == 3
    spots = quantify(cells, alpha=0.05)
    assert all(not s.flagged for s in spots)
    assert sorted(s.calibrated_ratio for s in spots)[1] == pytest.approx(1.0)
