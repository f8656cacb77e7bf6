"""Line-oriented experiment descriptions: parse, serialize, query and diff.

Each line is a record whose first token (the keyword) says what the line
describes, for example::

    DYE CY3 "Genisphere Kit"
    PRINTING_CONFIGURATION Stanford4x16x24 4 16 24 QUADRANTS

Field typing: all-digit tokens become ``int``, ``digits.digits`` tokens become
``Decimal``, anything else (including every quoted token) stays ``str``.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Iterable, Sequence, Union

Value = Union[str, int, Decimal]

_INT_RE = re.compile(r"^[0-9]+$")
_DEC_RE = re.compile(r"^[0-9]*\.[0-9]+$")
_BARE_RE = re.compile(r'^[^\s"]+$')


class DescriptionError(ValueError):
    """Raised for malformed description text or invalid records."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def coerce_token(token: str) -> Value:
    if _INT_RE.match(token):
        return int(token)
    if _DEC_RE.match(token):
        return Decimal(token)
    return token


def format_value(value: Value) -> str:
    if isinstance(value, bool):
        raise DescriptionError(f"unsupported field type: {value!r}")
    if isinstance(value, int):
        if value < 0:
            # would re-parse as a string
            raise DescriptionError(f"negative integers are not representable: {value}")
        return str(value)
    if isinstance(value, Decimal):
        if not value.is_finite() or value.is_signed():
            raise DescriptionError(f"decimal not representable: {value}")
        text = format(value, "f")
        return text if "." in text else text + ".0"
    if isinstance(value, str):
        if _BARE_RE.match(value) and not (_INT_RE.match(value) or _DEC_RE.match(value)):
            return value
        return f'"{value}"'
    raise DescriptionError(f"unsupported field type: {value!r}")


def _check_value(value: Value) -> None:
    if isinstance(value, str) and ('"' in value or "\n" in value or "\r" in value):
        raise DescriptionError(f"string field may not contain quotes or newlines: {value!r}")
    format_value(value)


@dataclass(frozen=True)
class Record:
    keyword: str
    fields: tuple[Value, ...] = ()

    def __post_init__(self):
        if not self.keyword or not _BARE_RE.match(self.keyword):
            raise DescriptionError(f"invalid keyword: {self.keyword!r}")
        object.__setattr__(self, "fields", tuple(self.fields))
        for v in self.fields:
            _check_value(v)

    def to_line(self) -> str:
        return " ".join([self.keyword, *(format_value(v) for v in self.fields)])


@dataclass(frozen=True)
class ExperimentDescription:
    records: tuple[Record, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def name(self) -> str:
        """First field of the first EXPERIMENT record, or empty."""
        for r in self.records:
            if r.keyword == "EXPERIMENT" and r.fields:
                return str(r.fields[0])
        return ""

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def tokenize_line(line: str, lineno: int | None = None) -> list[tuple[str, bool]]:
    """Split on whitespace, keeping double-quoted runs together.

    Returns ``(token, quoted)`` pairs.
    """
    tokens: list[tuple[str, bool]] = []
    i, n = 0, len(line)
    while i < n:
        if line[i].isspace():
            i += 1
            continue
        if line[i] == '"':
            end = line.find('"', i + 1)
            if end < 0:
                raise DescriptionError("unterminated quote", lineno)
            if end + 1 < n and not line[end + 1].isspace():
                raise DescriptionError("closing quote must be followed by whitespace", lineno)
            tokens.append((line[i + 1 : end], True))
            i = end + 1
        else:
            j = i
            while j < n and not line[j].isspace():
                if line[j] == '"':
                    raise DescriptionError("quote inside bare token", lineno)
                j += 1
            tokens.append((line[i:j], False))
            i = j
    return tokens


def parse_record(line: str, lineno: int | None = None) -> Record:
    tokens = tokenize_line(line, lineno)
    if not tokens:
        raise DescriptionError("empty record", lineno)
    keyword, quoted = tokens[0]
    if quoted or not keyword:
        raise DescriptionError("empty or quoted keyword", lineno)
    values = [tok if q else coerce_token(tok) for tok, q in tokens[1:]]
    return Record(keyword, tuple(values))


def parse_description(text: str) -> ExperimentDescription:
    records = []
    # only \n separates records; other separators may sit inside quotes
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        records.append(parse_record(stripped, lineno))
    return ExperimentDescription(tuple(records))


def serialize_description(desc: ExperimentDescription) -> str:
    if not desc.records:
        return ""
    return "\n".join(r.to_line() for r in desc.records) + "\n"


# --- query -----------------------------------------------------------------

_COMPARATORS: dict[str, Callable[[object, object], bool]] = {
    "==": operator.eq,
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@dataclass(frozen=True)
class Predicate:
    index: int
    op: str
    literal: Value

    def __post_init__(self):
        if self.op not in _COMPARATORS:
            raise DescriptionError(f"unknown comparator: {self.op}")
        if self.index < 0:
            raise DescriptionError(f"field index must be >= 0: {self.index}")

    def matches(self, record: Record) -> bool:
        if self.index >= len(record.fields):
            return False
        value = record.fields[self.index]
        # strings only compare with strings, numbers with numbers
        if isinstance(value, str) != isinstance(self.literal, str):
            return False
        return _COMPARATORS[self.op](value, self.literal)


@dataclass(frozen=True)
class Selector:
    keyword: str
    predicates: tuple[Predicate, ...] = field(default=())

    def __post_init__(self):
        if not self.keyword:
            raise DescriptionError("selector keyword must be non-empty")
        object.__setattr__(self, "predicates", tuple(self.predicates))

    def matches(self, record: Record) -> bool:
        return record.keyword == self.keyword and all(p.matches(record) for p in self.predicates)


_PRED_RE = re.compile(r"^(\d+)(==|!=|<=|>=|=|<|>)(.*)$")


def parse_selector(text: str) -> Selector:
    """Parse ``KEYWORD [IDX<op>LITERAL ...]``, e.g. ``TISSUE 0=D4I``."""
    tokens = tokenize_line(text)
    if not tokens or tokens[0][1]:
        raise DescriptionError("selector needs a keyword")
    preds = []
    for tok, quoted in tokens[1:]:
        m = _PRED_RE.match(tok)
        if quoted or not m:
            raise DescriptionError(f"bad predicate {tok!r}; expected IDX<op>LITERAL")
        idx, op, lit = m.groups()
        preds.append(Predicate(int(idx), op, coerce_token(lit)))
    return Selector(tokens[0][0], tuple(preds))


def query_records(
    descs: Iterable[ExperimentDescription], selector: Selector | str
) -> list[Record]:
    if isinstance(selector, str):
        selector = parse_selector(selector)
    return [r for d in descs for r in d.records if selector.matches(r)]


# --- diff ------------------------------------------------------------------

Locator = tuple[str, int]


@dataclass(frozen=True)
class DiffEntry:
    """One difference between two descriptions.

    ``field_index`` is None for whole-record additions/removals. ``position``
    is the record's index in the target description for record-level
    ``added`` entries (needed to patch interleavings back exactly).
    """

    kind: str
    locator: Locator
    field_index: int | None = None
    before: Value | Record | None = None
    after: Value | Record | None = None
    position: int | None = None

    def __post_init__(self):
        if self.kind == "changed":
            ok = self.before is not None and self.after is not None
        elif self.kind == "added":
            ok = self.before is None and self.after is not None
        elif self.kind == "removed":
            ok = self.before is not None and self.after is None
        else:
            raise DescriptionError(f"unknown diff kind {self.kind!r}")
        if not ok:
            raise DescriptionError(f"inconsistent before/after for {self.kind} entry")

    def describe(self) -> str:
        kw, ordinal = self.locator
        where = f"{kw}[{ordinal}]"
        show = lambda v: v.to_line() if isinstance(v, Record) else format_value(v)  # noqa: E731
        if self.field_index is not None:
            where += f" field {self.field_index}"
        if self.kind == "changed":
            return f"changed {where}: {show(self.before)} -> {show(self.after)}"
        if self.kind == "added":
            return f"added {where}: {show(self.after)}"
        return f"removed {where}: {show(self.before)}"


def _locators(records: Sequence[Record]) -> list[Locator]:
    seen: dict[str, int] = {}
    out = []
    for r in records:
        k = seen.get(r.keyword, 0)
        seen[r.keyword] = k + 1
        out.append((r.keyword, k))
    return out


def _lcs_pairs(a: Sequence[Locator], b: Sequence[Locator]) -> list[tuple[int, int]]:
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                table[i][j] = table[i + 1][j + 1] + 1
            else:
                table[i][j] = max(table[i + 1][j], table[i][j + 1])
    pairs, i, j = [], 0, 0
    while i < n and j < m:
        if a[i] == b[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def diff_descriptions(a: ExperimentDescription, b: ExperimentDescription) -> list[DiffEntry]:
    """Align records by (keyword, ordinal-within-keyword) and compare fields.

    Records whose locator exists on both sides but whose relative order
    changed are reported as a removal plus an addition, so the diff is empty
    exactly when the descriptions are equal.
    """
    loc_a, loc_b = _locators(a.records), _locators(b.records)
    pairs = _lcs_pairs(loc_a, loc_b)
    matched_a = {i for i, _ in pairs}
    matched_b = {j for _, j in pairs}
    entries: list[DiffEntry] = []
    for i, rec in enumerate(a.records):
        if i not in matched_a:
            entries.append(DiffEntry("removed", loc_a[i], before=rec))
    for i, j in pairs:
        fa, fb = a.records[i].fields, b.records[j].fields
        for k in range(max(len(fa), len(fb))):
            if k >= len(fb):
                entries.append(DiffEntry("removed", loc_a[i], k, before=fa[k]))
            elif k >= len(fa):
                entries.append(DiffEntry("added", loc_a[i], k, after=fb[k]))
            elif type(fa[k]) is not type(fb[k]) or fa[k] != fb[k]:
                entries.append(DiffEntry("changed", loc_a[i], k, fa[k], fb[k]))
    for j, rec in enumerate(b.records):
        if j not in matched_b:
            entries.append(DiffEntry("added", loc_b[j], after=rec, position=j))
    return entries


def apply_diff(a: ExperimentDescription, entries: Iterable[DiffEntry]) -> ExperimentDescription:
    """Patch ``a`` with entries produced by ``diff_descriptions(a, b)``; returns ``b``."""
    entries = list(entries)
    loc_a = _locators(a.records)
    removed = {e.locator for e in entries if e.kind == "removed" and e.field_index is None}
    field_edits: dict[Locator, list[DiffEntry]] = {}
    for e in entries:
        if e.field_index is not None:
            field_edits.setdefault(e.locator, []).append(e)

    kept: list[Record] = []
    for loc, rec in zip(loc_a, a.records):
        if loc in removed:
            continue
        edits = field_edits.get(loc)
        if edits:
            fields = list(rec.fields)
            drop = sorted((e.field_index for e in edits if e.kind == "removed"), reverse=True)
            for e in edits:
                if e.kind == "changed":
                    fields[e.field_index] = e.after
            for k in drop:
                del fields[k]
            for e in sorted((e for e in edits if e.kind == "added"), key=lambda e: e.field_index):
                fields.insert(e.field_index, e.after)
            rec = Record(rec.keyword, tuple(fields))
        kept.append(rec)

    added = sorted(
        (e for e in entries if e.kind == "added" and e.field_index is None),
        key=lambda e: e.position,
    )
    for e in added:
        kept.insert(e.position, e.after)
    return ExperimentDescription(tuple(kept))
