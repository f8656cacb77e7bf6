from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from espresso.descriptor import (
    DescriptionError,
    ExperimentDescription,
    Predicate,
    Record,
    Selector,
    apply_diff,
    diff_descriptions,
    parse_description,
    parse_selector,
    query_records,
    serialize_description,
)

DROUGHT = """\
EXPERIMENT PINE_DROUGHT_GROWTH May-August,2000 "384 clones"
DYE CY3 "Genisphere Kit"
DYE CY5 "Genisphere Kit"
PRINTING_ROBOT NCSU_FBC "Brown-type robot at NCSU"
PRINTING_CONFIGURATION Stanford4x16x24 4 16 24 QUADRANTS
PRINTING_CONFIGURATION Stanford4x22x24 4 22 24 QUADRANTS
TISSUE D4M D4 Needles Unstressed (Control)
TISSUE D4I D4 Needles Intermediate Stressed
"""


@pytest.fixture
def drought():
    return parse_description(DROUGHT)


def test_quoted_field():
    (rec,) = parse_description('DYE CY3 "Genisphere Kit"').records
    assert rec == Record("DYE", ("CY3", "Genisphere Kit"))


def test_integer_fields():
    (rec,) = parse_description("PRINTING_CONFIGURATION Stanford4x16x24 4 16 24 QUADRANTS").records
    assert rec.fields == ("Stanford4x16x24", 4, 16, 24, "QUADRANTS")
    assert all(type(v) is int for v in rec.fields[1:4])


def test_decimal_fields():
    (rec,) = parse_description("CALIBRATION threshold 0.96 .5").records
    assert rec.fields == ("threshold", Decimal("0.96"), Decimal("0.5"))


def test_empty_input():
    assert parse_description("").records == ()
    assert serialize_description(ExperimentDescription()) == ""


def test_comments_and_blank_lines_dropped():
    desc = parse_description("# header\n\nDYE CY3\n   \n# DYE CY5\n")
    assert [r.keyword for r in desc] == ["DYE"]


def test_unterminated_quote_reports_line():
    with pytest.raises(DescriptionError) as err:
        parse_description('DYE CY3\nDYE CY5 "Genisphere Kit\n')
    assert err.value.line == 2


def test_quoted_keyword_rejected():
    with pytest.raises(DescriptionError):
        parse_description('"" CY3')


def test_serialize_example():
    desc = ExperimentDescription((Record("DYE", ("CY5", "Genisphere Kit")),))
    assert serialize_description(desc) == 'DYE CY5 "Genisphere Kit"\n'


def test_numeric_looking_strings_stay_strings():
    desc = ExperimentDescription((Record("X", ("12", "0.5", "", 12)),))
    text = serialize_description(desc)
    assert text == 'X "12" "0.5" "" 12\n'
    assert parse_description(text) == desc


def test_drought_round_trip(drought):
    assert serialize_description(drought) == DROUGHT
    assert drought.name == "PINE_DROUGHT_GROWTH"


def test_invalid_records():
    with pytest.raises(DescriptionError):
        Record("")
    with pytest.raises(DescriptionError):
        Record("TWO WORDS")
    with pytest.raises(DescriptionError):
        Record("X", ('say "hi"',))


# --- property: round trip ---

bare = st.from_regex(r"[A-Za-z_(][A-Za-z0-9_,()\-]{0,8}", fullmatch=True)
quoted = st.text(
    alphabet=st.characters(blacklist_characters='"\r\n', blacklist_categories=("Cs",)), max_size=12
)
decimals = st.from_regex(r"[0-9]{0,3}\.[0-9]{1,4}", fullmatch=True).map(Decimal)
values = st.one_of(bare, quoted, st.integers(0, 10**9), decimals)
records = st.builds(
    Record,
    st.from_regex(r"[A-Z][A-Z_0-9]{0,12}", fullmatch=True),
    st.lists(values, max_size=6).map(tuple),
)
descriptions = st.lists(records, max_size=12).map(lambda rs: ExperimentDescription(tuple(rs)))


@given(descriptions)
def test_round_trip(desc):
    assert parse_description(serialize_description(desc)) == desc


@given(descriptions)
def test_serialization_is_canonical(desc):
    text = serialize_description(desc)
    assert serialize_description(parse_description(text)) == text


# --- query ---


def test_query_keyword(drought):
    got = query_records([drought], "DYE")
    assert [r.fields[0] for r in got] == ["CY3", "CY5"]


def test_query_field_predicate(drought):
    got = query_records([drought], Selector("TISSUE", (Predicate(0, "==", "D4I"),)))
    assert got == [Record("TISSUE", ("D4I", "D4", "Needles", "Intermediate", "Stressed"))]


def test_query_impossible_and_out_of_range(drought):
    assert query_records([drought], "DYE 0=CY7") == []
    assert query_records([drought], "DYE 9=CY3") == []


def test_query_numeric_comparison(drought):
    got = query_records([drought], "PRINTING_CONFIGURATION 2>16")
    assert [r.fields[0] for r in got] == ["Stanford4x22x24"]
    # string literal never equals an integer field
    assert query_records([drought], Selector("PRINTING_CONFIGURATION", (Predicate(1, "==", "4"),))) == []


def test_selector_parsing():
    sel = parse_selector("TISSUE 0=D4I 1!=D5")
    assert sel.keyword == "TISSUE"
    assert sel.predicates == (Predicate(0, "=", "D4I"), Predicate(1, "!=", "D5"))
    with pytest.raises(DescriptionError):
        parse_selector("TISSUE nonsense")


@given(descriptions, descriptions, st.sampled_from(["A", "B", "X"]))
def test_query_is_order_preserving_filter(d1, d2, kw):
    got = query_records([d1, d2], kw)
    everything = list(d1.records) + list(d2.records)
    assert got == [r for r in everything if r.keyword == kw]


# --- diff ---


def test_threshold_change_is_one_entry(drought):
    a = ExperimentDescription(drought.records + (Record("CALIBRATION", ("threshold", Decimal("0.96"))),))
    b = ExperimentDescription(drought.records + (Record("CALIBRATION", ("threshold", Decimal("0.84"))),))
    (entry,) = diff_descriptions(a, b)
    assert entry.kind == "changed"
    assert entry.locator == ("CALIBRATION", 0)
    assert entry.field_index == 1
    assert (entry.before, entry.after) == (Decimal("0.96"), Decimal("0.84"))
    assert entry.describe() == "changed CALIBRATION[0] field 1: 0.96 -> 0.84"


def test_self_diff_empty(drought):
    assert diff_descriptions(drought, drought) == []


def test_dropped_tissue_is_one_removal(drought):
    b = ExperimentDescription(drought.records[:-1])
    (entry,) = diff_descriptions(drought, b)
    assert entry.kind == "removed" and entry.field_index is None
    assert entry.locator == ("TISSUE", 1)


def test_reorder_is_not_empty():
    a = parse_description("A 1\nB 2\n")
    b = parse_description("B 2\nA 1\n")
    assert diff_descriptions(a, b)
    assert apply_diff(a, diff_descriptions(a, b)) == b


@settings(max_examples=200)
@given(descriptions, descriptions)
def test_patch_property(a, b):
    entries = diff_descriptions(a, b)
    assert apply_diff(a, entries) == b
    assert (entries == []) == (a == b)


@given(descriptions)
def test_diff_entries_well_formed(d):
    other = ExperimentDescription(tuple(reversed(d.records)))
    for e in diff_descriptions(d, other):
        if e.kind == "changed":
            assert e.before is not None and e.after is not None
        else:
            assert (e.before is None) != (e.after is None)
