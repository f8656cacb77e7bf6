"""Relational rule induction over expression levels and functional categories.

Facts come in two tables, ``level(Clone, Comparison, Expression)`` and
``category(Clone, Name)``, plus category containment rules
(``category(X, parent) :- category(X, child)``) that are saturated to a
fixpoint before mining.  Under the closed-world assumption each asserted level
fact yields two negative examples: the same clone and comparison with each of
the other two expression values.

Hypotheses share the single clone variable ``A``::

    ~level(A,CvsS,positive) :- level(A,CvsM,positive).
    level(A,CvsM,positive) :- category(A,heat).

A rule covers a clone when the clone satisfies the body and has an example
(positive or negative) for the head's comparison.  ``support`` counts covered
clones, ``hits`` those whose example is positive for the head; a negated head
``~level(A,c,e)`` is positive for clones whose asserted value for ``c`` is one
of the other two expressions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping, Union

from .tsvio import clone_sort_key, format_table, parse_table

EXPRESSIONS = ("positive", "negative", "unchanged")
CALL_TO_EXPRESSION = {"up": "positive", "down": "negative", "unchanged": "unchanged"}


class IntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class Level:
    comparison: str
    expression: str

    def render(self) -> str:
        return f"level(A,{self.comparison},{self.expression})"


@dataclass(frozen=True)
class Category:
    name: str

    def render(self) -> str:
        return f"category(A,{self.name})"


Literal = Union[Level, Category]


@dataclass(frozen=True)
class Rule:
    head: Level
    body: tuple[Literal, ...]
    negated: bool = False

    def __post_init__(self):
        if not self.body:
            raise ValueError("rule body must be non-empty")

    def render(self) -> str:
        head = ("~" if self.negated else "") + self.head.render()
        return f"{head} :- {', '.join(lit.render() for lit in self.body)}."


@dataclass(frozen=True)
class RuleStats:
    support: int
    hits: int

    @property
    def confidence(self) -> Fraction | None:
        """hits/support, or None when no clone supports the body."""
        return Fraction(self.hits, self.support) if self.support else None


def saturate(facts: Iterable[tuple[str, str]], hierarchy: Iterable[tuple[str, str]]) -> frozenset:
    """Close category facts under child -> parent containment (semi-naive fixpoint)."""
    parents: dict[str, set[str]] = {}
    for child, parent in hierarchy:
        parents.setdefault(child, set()).add(parent)
    closed = set(facts)
    frontier = set(closed)
    while frontier:
        new = {(clone, p) for clone, cat in frontier for p in parents.get(cat, ())} - closed
        closed |= new
        frontier = new
    return frozenset(closed)


@dataclass(frozen=True)
class FactBase:
    levels: Mapping[tuple[str, str], str]
    asserted_categories: frozenset
    hierarchy: frozenset
    categories: frozenset = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "levels", dict(self.levels))
        for (clone, cmp), e in self.levels.items():
            if e not in EXPRESSIONS:
                raise IntegrityError(f"level({clone},{cmp},{e}): unknown expression")
        object.__setattr__(self, "asserted_categories", frozenset(self.asserted_categories))
        object.__setattr__(self, "hierarchy", frozenset(self.hierarchy))
        if self.categories is None:
            object.__setattr__(
                self, "categories", saturate(self.asserted_categories, self.hierarchy)
            )

    @property
    def clones(self) -> list[str]:
        ids = {c for c, _ in self.levels} | {c for c, _ in self.categories}
        return sorted(ids, key=clone_sort_key)

    @property
    def comparisons(self) -> list[str]:
        return sorted({cmp for _, cmp in self.levels})

    @property
    def category_names(self) -> list[str]:
        return sorted({cat for _, cat in self.categories})

    @property
    def level_facts(self) -> frozenset:
        return frozenset((c, cmp, e) for (c, cmp), e in self.levels.items())

    @property
    def negative_examples(self) -> frozenset:
        return frozenset(
            (c, cmp, other)
            for (c, cmp), e in self.levels.items()
            for other in EXPRESSIONS
            if other != e
        )


def build_factbase(
    calls: Iterable,
    categories: Mapping[str, Iterable[str]] | Iterable[tuple[str, str]] = (),
    hierarchy: Iterable[tuple[str, str]] = (),
) -> FactBase:
    """Turn expression calls into level facts and saturate category facts.

    ``calls`` holds ExpressionCall objects or ``(clone, comparison, value)``
    tuples where value is a call (up/down/unchanged) or an expression.  Calls
    with ``n == 0`` (no usable replicates) assert nothing.
    """
    levels: dict[tuple[str, str], str] = {}
    for call in calls:
        if isinstance(call, tuple):
            clone, cmp, value = call
        else:
            if call.n == 0:
                continue
            clone, cmp, value = call.clone_id, call.comparison, call.call
        expr = CALL_TO_EXPRESSION.get(value, value)
        if expr not in EXPRESSIONS:
            raise IntegrityError(f"unknown expression value {value!r} for clone {clone}")
        key = (str(clone), cmp)
        if levels.get(key, expr) != expr:
            raise IntegrityError(
                f"conflicting calls for clone {clone} in {cmp}: {levels[key]} and {expr}"
            )
        levels[key] = expr
    if isinstance(categories, Mapping):
        pairs = {(str(c), cat) for c, cats in categories.items() for cat in cats}
    else:
        pairs = {(str(c), cat) for c, cat in categories}
    return FactBase(levels, frozenset(pairs), frozenset(hierarchy))


@dataclass(frozen=True)
class Language:
    comparisons: tuple[str, ...]
    categories: tuple[str, ...] = ()
    expressions: tuple[str, ...] = EXPRESSIONS
    max_body_length: int = 1

    def __post_init__(self):
        if self.max_body_length < 1:
            raise ValueError("max_body_length must be >= 1")

    @classmethod
    def for_factbase(cls, fb: FactBase, max_body_length: int = 1) -> "Language":
        return cls(tuple(fb.comparisons), tuple(fb.category_names), EXPRESSIONS, max_body_length)

    def heads(self) -> list[tuple[Level, bool]]:
        return [
            (Level(cmp, e), neg)
            for cmp in self.comparisons
            for e in self.expressions
            for neg in (False, True)
        ]

    def body_pool(self) -> list[Literal]:
        levels = [Level(cmp, e) for cmp in self.comparisons for e in self.expressions]
        return levels + [Category(c) for c in self.categories]


def enumerate_hypotheses(language: Language) -> list[Rule]:
    """Every rule in the language, in canonical order (head, body length, body)."""
    pool = language.body_pool()
    rules = []
    for head, neg in language.heads():
        allowed = [i for i, lit in enumerate(pool) if lit != head]
        for size in range(1, language.max_body_length + 1):
            for idx in combinations(allowed, size):
                rules.append(Rule(head, tuple(pool[i] for i in idx), neg))
    return rules


class _Index:
    """Clone sets as int bitmasks for fast coverage counting."""

    def __init__(self, fb: FactBase):
        self.bit = {c: 1 << i for i, c in enumerate(fb.clones)}
        self.level: dict[Level, int] = {}
        self.examples: dict[str, int] = {}
        for (clone, cmp), e in fb.levels.items():
            b = self.bit[clone]
            self.level[Level(cmp, e)] = self.level.get(Level(cmp, e), 0) | b
            self.examples[cmp] = self.examples.get(cmp, 0) | b
        self.category: dict[str, int] = {}
        for clone, cat in fb.categories:
            self.category[cat] = self.category.get(cat, 0) | self.bit[clone]

    def literal(self, lit: Literal) -> int:
        if isinstance(lit, Level):
            return self.level.get(lit, 0)
        return self.category.get(lit.name, 0)

    def head(self, head: Level, negated: bool) -> tuple[int, int]:
        """(clones with an example for the head comparison, clones satisfying the head)."""
        examples = self.examples.get(head.comparison, 0)
        pos = self.level.get(head, 0)
        return examples, (examples & ~pos) if negated else pos


def evaluate_rule(rule: Rule, fb: FactBase, index: _Index | None = None) -> RuleStats:
    index = index or _Index(fb)
    examples, satisfied = index.head(rule.head, rule.negated)
    cover = examples
    for lit in rule.body:
        cover &= index.literal(lit)
    return RuleStats(cover.bit_count(), (cover & satisfied).bit_count())


@dataclass(frozen=True)
class MinedRule:
    rule: Rule
    stats: RuleStats
    order: tuple = field(compare=False, repr=False, default=())


def _check_thresholds(min_support: int, min_confidence) -> Fraction:
    if min_support < 1:
        raise ValueError(f"min_support must be >= 1, got {min_support}")
    conf = Fraction(repr(min_confidence)) if isinstance(min_confidence, float) else Fraction(min_confidence)
    if conf < 0:
        raise ValueError(f"min_confidence must be >= 0, got {min_confidence}")
    return conf


def _rank(found: list[MinedRule]) -> list[MinedRule]:
    return sorted(found, key=lambda m: (-m.stats.confidence, -m.stats.support, m.order))


def mine_rules(
    fb: FactBase,
    min_support: int = 5,
    min_confidence=Fraction(3, 5),
    language: Language | None = None,
) -> list[MinedRule]:
    """All rules meeting both thresholds, best first.

    Depth-first over body conjunctions.  Adding a literal can only shrink the
    covered set, so a branch is cut once its support drops below
    ``min_support`` or its hits fall below ``min_confidence * min_support``
    (no descendant could then qualify).
    """
    conf = _check_thresholds(min_support, min_confidence)
    language = language or Language.for_factbase(fb)
    index = _Index(fb)
    pool = language.body_pool()
    masks = [index.literal(lit) for lit in pool]
    hit_floor = conf * min_support
    found: list[MinedRule] = []

    for h, (head, neg) in enumerate(language.heads()):
        examples, satisfied = index.head(head, neg)
        allowed = [i for i, lit in enumerate(pool) if lit != head]

        def extend(start: int, chosen: tuple[int, ...], cover: int) -> None:
            for pos in range(start, len(allowed)):
                i = allowed[pos]
                sub = cover & masks[i]
                support = sub.bit_count()
                if support < min_support:
                    continue
                hits = (sub & satisfied).bit_count()
                if hits < hit_floor:
                    continue
                body = chosen + (i,)
                if hits >= conf * support:
                    rule = Rule(head, tuple(pool[j] for j in body), neg)
                    found.append(MinedRule(rule, RuleStats(support, hits), (h, len(body), body)))
                if len(body) < language.max_body_length:
                    extend(pos + 1, body, sub)

        extend(0, (), examples)
    return _rank(found)


def mine_rules_exhaustive(
    fb: FactBase,
    min_support: int = 5,
    min_confidence=Fraction(3, 5),
    language: Language | None = None,
) -> list[MinedRule]:
    """Reference miner: evaluate every hypothesis, no pruning."""
    conf = _check_thresholds(min_support, min_confidence)
    language = language or Language.for_factbase(fb)
    index = _Index(fb)
    pool = language.body_pool()
    head_pos = {hd: k for k, hd in enumerate(language.heads())}
    found = []
    for rule in enumerate_hypotheses(language):
        stats = evaluate_rule(rule, fb, index)
        if stats.support >= min_support and stats.hits >= conf * stats.support:
            body = tuple(pool.index(lit) for lit in rule.body)
            found.append(MinedRule(rule, stats, (head_pos[(rule.head, rule.negated)], len(body), body)))
    return _rank(found)


# --- text formats ------------------------------------------------------------


def format_percent(value: Fraction) -> str:
    """Percentage to two decimals, rounding half up on the exact rational."""
    hundredths = math.floor(Fraction(value) * 10000 + Fraction(1, 2))
    return f"{hundredths // 100}.{hundredths % 100:02d}%"


def format_rule_line(rule: Rule, stats: RuleStats) -> str:
    return f"{rule.render()} % support={stats.support} conf={stats.hits}/{stats.support}"


def format_rules(mined: Iterable[MinedRule]) -> str:
    return "".join(format_rule_line(m.rule, m.stats) + "\n" for m in mined)


_RULE_RE = re.compile(
    r"^(~?)level\(A,([^,()]+),([^,()]+)\) :- (.+)\.\s*"
    r"(?:% support=(\d+) conf=(\d+)/(\d+))?\s*$"
)
_LIT_RE = re.compile(r"(level|category)\(A,([^()]*)\)")


def parse_rule_line(line: str) -> tuple[Rule, RuleStats | None]:
    m = _RULE_RE.match(line.strip())
    if not m:
        raise ValueError(f"not a rule: {line!r}")
    neg, cmp, expr, body_text, support, hits, denom = m.groups()
    body: list[Literal] = []
    for kind, args in _LIT_RE.findall(body_text):
        if kind == "level":
            c, _, e = args.partition(",")
            body.append(Level(c, e))
        else:
            body.append(Category(args))
    stats = RuleStats(int(support), int(hits)) if support is not None else None
    return Rule(Level(cmp, expr), tuple(body), bool(neg)), stats


def parse_rules(text: str) -> list[tuple[Rule, RuleStats | None]]:
    return [
        parse_rule_line(ln)
        for ln in text.splitlines()
        if ln.strip() and not ln.lstrip().startswith("%")
    ]


FACT_HEADER = ("table", "clone_id", "comparison", "expression", "category")
HIERARCHY_HEADER = ("child", "parent")


def format_facts(fb: FactBase) -> str:
    """Asserted facts only; derived category facts are recomputed on load."""
    rows = [
        ("level", c, cmp, e, "")
        for (c, cmp), e in sorted(fb.levels.items(), key=lambda kv: (clone_sort_key(kv[0][0]), kv[0][1]))
    ]
    rows += [
        ("category", c, "", "", cat)
        for c, cat in sorted(fb.asserted_categories, key=lambda p: (clone_sort_key(p[0]), p[1]))
    ]
    return format_table(FACT_HEADER, rows)


def format_hierarchy(hierarchy: Iterable[tuple[str, str]]) -> str:
    return format_table(HIERARCHY_HEADER, sorted(hierarchy))


def parse_hierarchy(text: str) -> frozenset:
    return frozenset((r["child"], r["parent"]) for r in parse_table(text, HIERARCHY_HEADER))


def parse_facts(text: str, hierarchy: Iterable[tuple[str, str]] = ()) -> FactBase:
    levels, cats = [], []
    for r in parse_table(text, FACT_HEADER):
        if r["table"] == "level":
            levels.append((r["clone_id"], r["comparison"], r["expression"]))
        elif r["table"] == "category":
            cats.append((r["clone_id"], r["category"]))
        else:
            raise IntegrityError(f"unknown table {r['table']!r}")
    return build_factbase(levels, cats, hierarchy)


def parse_categories(text: str) -> list[tuple[str, str]]:
    """``categories.tsv``: clone_id, category."""
    return [(r["clone_id"], r["category"]) for r in parse_table(text, ("clone_id", "category"))]
