"""String-valued tables loaded from CSV, constraint filtering, plan execution and fact rendering."""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateKey,
    HeaderMismatch,
    MissingTableFile,
    TemplateColumnMissing,
    UnjoinableGroups,
    UnknownAttribute,
)
from .path_engine import JoinPlan
from .schema_graph import AttributeNode, EdgeKind, SchemaSpec

UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[str, ...]
    primary_keys: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...] = ()
    _key_index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"{self.name} row {i} has {len(row)} values, expected {width}")
        positions = [self.position(k) for k in self.primary_keys]
        for i, row in enumerate(self.rows):
            key = tuple(row[p] for p in positions)
            if key in self._key_index:
                raise DuplicateKey(f"{self.name}: duplicate primary key {dict(zip(self.primary_keys, key))}")
            self._key_index[key] = i

    def position(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise UnknownAttribute(f"{self.name} has no column {column!r}") from None

    def key_of(self, row: Sequence[str]) -> tuple[str, ...]:
        return tuple(row[self.position(k)] for k in self.primary_keys)

    def lookup(self, key: Sequence[str]) -> tuple[str, ...] | None:
        i = self._key_index.get(tuple(key))
        return None if i is None else self.rows[i]

    def __len__(self) -> int:
        return len(self.rows)


Corpus = Mapping[str, Table]


def load_csv_tables(directory, spec: SchemaSpec) -> dict[str, Table]:
    """Load ``<TABLE>.csv`` for every declared table; columns are reordered to declaration order."""
    directory = Path(directory)
    corpus: dict[str, Table] = {}
    for decl in spec.tables:
        path = directory / f"{decl.name}.csv"
        if not path.is_file():
            raise MissingTableFile(f"no CSV for table {decl.name} at {path}")
        declared = [c.name for c in decl.columns]
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise HeaderMismatch(decl.name, declared, []) from None
            missing = [c for c in declared if c not in header]
            extra = [c for c in header if c not in declared]
            if missing or extra or len(set(header)) != len(header):
                raise HeaderMismatch(decl.name, missing, extra)
            order = [header.index(c) for c in declared]
            rows = []
            for lineno, raw in enumerate(reader, start=2):
                if not raw:
                    continue
                if len(raw) != len(header):
                    raise HeaderMismatch(decl.name, [], [f"line {lineno} has {len(raw)} fields"])
                rows.append(tuple(raw[i] for i in order))
        corpus[decl.name] = Table(decl.name, tuple(declared), decl.primary_keys, tuple(rows))
    return corpus


# ---------------------------------------------------------------------------
# filtering

EQUALS = "equals"
CONTAINS = "contains"


@dataclass(frozen=True)
class ConstraintFilter:
    attribute: AttributeNode
    comparator: str
    value: str

    def __post_init__(self):
        if self.comparator not in (EQUALS, CONTAINS):
            raise ValueError(f"unknown comparator {self.comparator!r}")
        if not self.value.strip():
            raise ValueError("filter value must be non-empty")

    def matches(self, cell: str) -> bool:
        cell = cell.strip()
        if not cell:
            return False
        if self.comparator == EQUALS:
            return cell == self.value.strip()
        return self.value.strip().lower() in cell.lower()

    def __str__(self) -> str:
        return f"{self.attribute.table}.{self.attribute.column} {self.comparator} {self.value!r}"


@dataclass(frozen=True)
class CorpusView:
    corpus: Corpus
    surviving: Mapping[str, tuple[int, ...]]

    def rows(self, table: str) -> list[tuple[str, ...]]:
        t = self.corpus[table]
        return [t.rows[i] for i in self.surviving[table]]


def apply_constraints(corpus: Corpus, filters: Iterable[ConstraintFilter]) -> CorpusView:
    by_table: dict[str, list[tuple[int, ConstraintFilter]]] = {}
    for f in filters:
        table = corpus.get(f.attribute.table)
        if table is None:
            raise UnknownAttribute(f"filter targets unknown table {f.attribute.table}")
        by_table.setdefault(f.attribute.table, []).append((table.position(f.attribute.column), f))
    surviving = {}
    for name, table in corpus.items():
        checks = by_table.get(name, [])
        surviving[name] = tuple(
            i for i, row in enumerate(table.rows) if all(f.matches(row[pos]) for pos, f in checks)
        )
    return CorpusView(corpus, surviving)


# ---------------------------------------------------------------------------
# join execution

Record = dict


def _plan_columns(view: CorpusView, plan: JoinPlan) -> dict[str, list[str]]:
    columns: dict[str, list[str]] = {}
    for g in plan.groups:
        if g.table not in view.corpus:
            raise UnknownAttribute(f"plan references unknown table {g.table}")
        table = view.corpus[g.table]
        cols = columns.setdefault(g.table, list(table.primary_keys))
        for attr in g.attributes:
            table.position(attr.column)
            if attr.column not in cols:
                cols.append(attr.column)
    return columns


def execute_join_plan(view: CorpusView, plan: JoinPlan) -> list[Record]:
    """Inner equi-join of the plan's tables on their InterKey join edges, left to right.

    Records map ``"TABLE.COLUMN"`` to values for every group attribute and
    every primary key of the participating tables. Empty key cells never match.
    """
    columns = _plan_columns(view, plan)
    order = list(columns)
    for edge in plan.join_edges:
        if edge.kind is not EdgeKind.INTER_KEY:
            continue
        for node in (edge.src, edge.dst):
            table = view.corpus.get(node.table)
            if node.table not in columns or table is None or node.column not in table.columns:
                raise UnjoinableGroups(f"join edge {edge} references {node.column} absent from {node.table}")

    records: list[Record] = []
    joined: list[str] = []
    for name in order:
        table = view.corpus[name]
        positions = {c: table.position(c) for c in columns[name]}
        rows = view.rows(name)
        preds = []
        for edge in plan.join_edges:
            if edge.kind is not EdgeKind.INTER_KEY:
                continue
            if edge.src.table == name and edge.dst.table in joined:
                preds.append((f"{edge.dst.table}.{edge.dst.column}", edge.src.column))
            elif edge.dst.table == name and edge.src.table in joined:
                preds.append((f"{edge.src.table}.{edge.src.column}", edge.dst.column))
        preds = list(dict.fromkeys(preds))
        for left, right in preds:
            if right not in positions:
                positions[right] = table.position(right)

        def project(row):
            return {f"{name}.{c}": row[p] for c, p in positions.items() if c in columns[name]}

        if not joined:
            records = [project(r) for r in rows]
        elif not preds:
            records = [{**rec, **project(r)} for rec in records for r in rows]
        else:
            index: dict[tuple[str, ...], list[tuple[str, ...]]] = {}
            for r in rows:
                key = tuple(r[positions[right]].strip() for _, right in preds)
                if all(key):
                    index.setdefault(key, []).append(r)
            out = []
            for rec in records:
                key = tuple(rec[left].strip() for left, _ in preds)
                if not all(key):
                    continue
                for r in index.get(key, ()):
                    out.append({**rec, **project(r)})
            records = out
        joined.append(name)
    return records


# ---------------------------------------------------------------------------
# facts

_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")

# (key column, phrase) used by the fallback prefix, most global first
KEY_PHRASES = (("CASEID", "In case {}"), ("VEHNO", "for vehicle NO.{}"), ("OCCNO", "occupant NO.{}"))


@dataclass(frozen=True)
class FactTemplate:
    """How facts for one table are phrased.

    ``pattern`` is the record prefix with ``{COLUMN}`` placeholders; when
    ``None`` the key-based fallback prefix is used. Each rendered attribute is
    appended as ``"the <description> is: <value>"`` in ``columns`` order.
    """

    table: str
    pattern: str | None = None
    descriptions: Mapping[str, str] = field(default_factory=dict)
    columns: tuple[str, ...] = ()
    primary_keys: tuple[str, ...] = ()

    def __post_init__(self):
        if self.pattern is not None and self.columns:
            for name in _PLACEHOLDER.findall(self.pattern):
                if name not in self.columns:
                    raise TemplateColumnMissing(f"template for {self.table} names unknown column {name!r}")

    def describe(self, column: str) -> str:
        return self.descriptions.get(column) or column


@dataclass(frozen=True)
class Fact:
    text: str
    table: str
    key: tuple[str, ...]
    columns: tuple[str, ...]

    @property
    def provenance(self) -> tuple[str, tuple[str, ...], tuple[str, ...]]:
        return (self.table, self.key, self.columns)

    def __str__(self) -> str:
        return self.text


def default_templates(spec: SchemaSpec, overrides: Mapping[str, Mapping] | None = None) -> dict[str, FactTemplate]:
    """Templates for every table: descriptions from the schema, optionally overridden per table."""
    out = {}
    overrides = overrides or {}
    for t in spec.tables:
        ov = overrides.get(t.name, {})
        descriptions = {c.name: c.description for c in t.columns if c.description}
        descriptions.update(ov.get("descriptions", {}))
        out[t.name] = FactTemplate(
            t.name,
            ov.get("pattern"),
            descriptions,
            tuple(c.name for c in t.columns),
            t.primary_keys,
        )
    return out


def load_fact_templates(path, spec: SchemaSpec) -> dict[str, FactTemplate]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = sorted(set(data) - set(spec.table_names))
    if unknown:
        raise TemplateColumnMissing(f"fact templates name unknown table {unknown[0]!r}")
    for table, entry in data.items():
        cols = {c.name for c in spec.table(table).columns}
        for col in entry.get("descriptions", {}):
            if col not in cols:
                raise TemplateColumnMissing(f"fact template for {table} describes unknown column {col!r}")
    return default_templates(spec, data)


def _value(record: Mapping[str, str], table: str, column: str) -> str:
    key = f"{table}.{column}"
    if key not in record:
        raise TemplateColumnMissing(f"record has no value for {key}")
    value = record[key].strip()
    return value if value else UNKNOWN


def _prefix(template: FactTemplate, record: Mapping[str, str]) -> str:
    table = template.table
    if template.pattern is not None:
        return _PLACEHOLDER.sub(lambda m: _value(record, table, m.group(1)), template.pattern)
    keys = template.primary_keys
    parts = [
        phrase.format(_value(record, table, col))
        for col, phrase in KEY_PHRASES
        if col in keys and f"{table}.{col}" in record
    ]
    if parts and parts[0].startswith("In case"):
        return ", ".join(parts)
    return f"For {table} " + ", ".join(f"{k} {_value(record, table, k)}" for k in keys)


def extract_facts(records: Iterable[Record], templates: Mapping[str, FactTemplate], plan: JoinPlan) -> list[Fact]:
    """One fact per (record, group) listing the group's non-key attributes."""
    facts: dict[tuple, Fact] = {}
    for record in records:
        for group in plan.groups:
            template = templates.get(group.table)
            if template is None:
                raise TemplateColumnMissing(f"no fact template for table {group.table}")
            wanted = {a.column for a in group.attributes if not a.is_primary_key}
            order = template.columns or tuple(a.column for a in group.attributes)
            cols = tuple(c for c in order if c in wanted)
            if not cols:
                continue
            body = ", ".join(f"the {template.describe(c)} is: {_value(record, group.table, c)}" for c in cols)
            text = f"{_prefix(template, record)}, {body}"
            keys = template.primary_keys or tuple(a.column for a in group.attributes if a.is_primary_key)
            key = tuple(record.get(f"{group.table}.{k}", "") for k in keys)
            facts.setdefault((group.table, key, text), Fact(text, group.table, key, cols))
    return [facts[k] for k in sorted(facts)]
