"""Human-curated schema graph: declaration format, construction and validation.

A schema file declares tables, their columns and key hierarchy, plus the
hand-written context and derivation edges. :func:`build_graph` turns it into a
directed graph whose vertices are ``COLUMN[TABLE]`` attributes and whose edges
fall into exactly four classes (see :class:`EdgeKind`).
"""
from __future__ import annotations

import json
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import SchemaSyntaxError, UnknownNode, ValidationError

_FORBIDDEN = set(",[]")


def _check_identifier(value: Any, what: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise ValidationError(f"{what} must be a non-empty string, got {value!r}", entity=str(value))
    if _FORBIDDEN & set(value):
        raise ValidationError(f"{what} {value!r} contains one of ',[]'", entity=value)
    return value


@dataclass(frozen=True)
class AttributeNode:
    """A column identity: ``(column, table, is_primary_key)``."""

    column: str
    table: str
    is_primary_key: bool = False

    def __post_init__(self):
        _check_identifier(self.column, "column name")
        _check_identifier(self.table, "table name")

    @property
    def ident(self) -> tuple[str, str]:
        return (self.table, self.column)

    def __str__(self) -> str:
        return format_node(self)


def format_node(node: AttributeNode) -> str:
    return f"{node.column}[{node.table}]"


def parse_node_ref(ref: str) -> tuple[str, str]:
    """Split ``"COLUMN[TABLE]"`` into ``(table, column)``."""
    ref = ref.strip()
    if not ref.endswith("]") or "[" not in ref:
        raise ValueError(f"expected COLUMN[TABLE], got {ref!r}")
    column, _, table = ref[:-1].partition("[")
    if not column or not table:
        raise ValueError(f"expected COLUMN[TABLE], got {ref!r}")
    return table, column


class EdgeKind(Enum):
    # declaration order is the traversal / outgoing() order
    INTRA_CONTEXT = "IntraContext"
    INTRA_KEY = "IntraKey"
    INTER_DERIVE = "InterDerive"
    INTER_KEY = "InterKey"

    @property
    def rank(self) -> int:
        return _KIND_RANK[self]

    @property
    def is_inter(self) -> bool:
        return self in (EdgeKind.INTER_DERIVE, EdgeKind.INTER_KEY)


_KIND_RANK = {kind: i for i, kind in enumerate(EdgeKind)}


@dataclass(frozen=True)
class SchemaEdge:
    src: AttributeNode
    dst: AttributeNode
    kind: EdgeKind
    label: str = field(default="", compare=False)

    @property
    def triple(self) -> tuple[AttributeNode, AttributeNode, EdgeKind]:
        return (self.src, self.dst, self.kind)

    def __str__(self) -> str:
        return f"{self.src} -{self.kind.value}-> {self.dst}"


# ---------------------------------------------------------------------------
# declarations


@dataclass(frozen=True)
class ColumnDecl:
    name: str
    primary_key: bool = False
    description: str = ""
    unique_keywords: tuple[str, ...] = ()
    frequent_keywords: tuple[str, ...] = ()


@dataclass(frozen=True)
class TableDecl:
    name: str
    columns: tuple[ColumnDecl, ...]
    key_hierarchy: tuple[str, ...] = ()

    @property
    def primary_keys(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.primary_key)

    def column(self, name: str) -> ColumnDecl:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)


@dataclass(frozen=True)
class ContextEdgeDecl:
    table: str
    src: str
    dst: str
    label: str


@dataclass(frozen=True)
class DerivationEdgeDecl:
    src_table: str
    src_column: str
    dst_table: str
    dst_column: str
    label: str


@dataclass(frozen=True)
class SchemaSpec:
    tables: tuple[TableDecl, ...] = ()
    context_edges: tuple[ContextEdgeDecl, ...] = ()
    derivation_edges: tuple[DerivationEdgeDecl, ...] = ()

    def __post_init__(self):
        _validate_spec(self)

    def table(self, name: str) -> TableDecl:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def table_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tables)


def _validate_spec(spec: SchemaSpec) -> None:
    declared: dict[str, TableDecl] = {}
    for table in spec.tables:
        _check_identifier(table.name, "table name")
        if "." in table.name:
            raise ValidationError(f"table name {table.name!r} contains '.'", entity=table.name)
        if table.name in declared:
            raise ValidationError(f"table {table.name!r} declared twice", entity=table.name)
        declared[table.name] = table
        names = [c.name for c in table.columns]
        for name in names:
            _check_identifier(name, f"column name in {table.name}")
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValidationError(f"table {table.name}: column {dupes[0]!r} declared twice", entity=dupes[0])
        pks = set(table.primary_keys)
        hierarchy = list(table.key_hierarchy)
        if sorted(hierarchy) != sorted(pks) or len(set(hierarchy)) != len(hierarchy):
            offending = sorted(set(hierarchy) ^ pks) or hierarchy
            raise ValidationError(
                f"table {table.name}: key_hierarchy {hierarchy} is not a permutation of primary keys {sorted(pks)}",
                entity=str(offending[0]) if offending else table.name,
            )

    def check_column(table: str, column: str, where: str) -> None:
        if table not in declared:
            raise ValidationError(f"{where}: undeclared table {table!r}", entity=table)
        if column not in {c.name for c in declared[table].columns}:
            raise ValidationError(f"{where}: undeclared column {column!r} in table {table}", entity=column)

    for edge in spec.context_edges:
        where = f"context edge {edge.table}.{edge.src} -> {edge.table}.{edge.dst}"
        check_column(edge.table, edge.src, where)
        check_column(edge.table, edge.dst, where)
        if edge.src == edge.dst:
            raise ValidationError(f"{where}: self-loop", entity=edge.src)
        if not edge.label.strip():
            raise ValidationError(f"{where}: empty label", entity=edge.src)
    for edge in spec.derivation_edges:
        where = f"derivation edge {edge.src_table}.{edge.src_column} -> {edge.dst_table}.{edge.dst_column}"
        check_column(edge.src_table, edge.src_column, where)
        check_column(edge.dst_table, edge.dst_column, where)
        if edge.src_table == edge.dst_table:
            raise ValidationError(f"{where}: derivation edges must cross tables", entity=edge.src_column)
        if not edge.label.strip():
            raise ValidationError(f"{where}: empty label", entity=edge.src_column)

    seen_ctx = set()
    for edge in spec.context_edges:
        key = (edge.table, edge.src, edge.dst)
        if key in seen_ctx:
            raise ValidationError(f"duplicate context edge {edge.table}.{edge.src} -> {edge.dst}", entity=edge.src)
        seen_ctx.add(key)
    seen_der = set()
    for edge in spec.derivation_edges:
        key = (edge.src_table, edge.src_column, edge.dst_table, edge.dst_column)
        if key in seen_der:
            raise ValidationError(f"duplicate derivation edge {edge.src_table}.{edge.src_column}", entity=edge.src_column)
        seen_der.add(key)


# ---------------------------------------------------------------------------
# file format

_TOP_FIELDS = {"tables", "context_edges", "derivation_edges"}
_TABLE_FIELDS = {"name", "columns", "key_hierarchy"}
_COLUMN_FIELDS = {"name", "primary_key", "description", "keywords"}
_KEYWORD_FIELDS = {"unique", "frequent"}
_CONTEXT_FIELDS = {"table", "from", "to", "label"}
_DERIVATION_FIELDS = {"from", "to", "label"}


def _expect(obj: Any, kind: type, where: str):
    if not isinstance(obj, kind):
        raise SchemaSyntaxError(f"{where}: expected {kind.__name__}, got {type(obj).__name__}")
    return obj


def _check_fields(obj: Mapping, allowed: set[str], required: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaSyntaxError(f"{where}: unknown field {unknown[0]!r}")
    missing = sorted(required - set(obj))
    if missing:
        raise SchemaSyntaxError(f"{where}: missing field {missing[0]!r}")


def _str_list(obj: Any, where: str) -> tuple[str, ...]:
    _expect(obj, list, where)
    for item in obj:
        _expect(item, str, where)
    return tuple(obj)


def _qualified(ref: Any, where: str) -> tuple[str, str]:
    _expect(ref, str, where)
    table, dot, column = ref.partition(".")
    if not dot or not table or not column:
        raise SchemaSyntaxError(f"{where}: expected TABLE.COLUMN, got {ref!r}")
    return table, column


def spec_from_dict(doc: Any) -> SchemaSpec:
    """Build a :class:`SchemaSpec` from an already-decoded JSON document."""
    _expect(doc, dict, "document")
    _check_fields(doc, _TOP_FIELDS, {"tables"}, "document")
    tables = []
    for i, t in enumerate(_expect(doc["tables"], list, "tables")):
        where = f"tables[{i}]"
        _expect(t, dict, where)
        _check_fields(t, _TABLE_FIELDS, {"name", "columns"}, where)
        name = _expect(t["name"], str, f"{where}.name")
        columns = []
        for j, c in enumerate(_expect(t["columns"], list, f"{where}.columns")):
            cwhere = f"{name}.columns[{j}]"
            _expect(c, dict, cwhere)
            _check_fields(c, _COLUMN_FIELDS, {"name"}, cwhere)
            kw = _expect(c.get("keywords", {}), dict, f"{cwhere}.keywords")
            _check_fields(kw, _KEYWORD_FIELDS, set(), f"{cwhere}.keywords")
            columns.append(
                ColumnDecl(
                    name=_expect(c["name"], str, f"{cwhere}.name"),
                    primary_key=_expect(c.get("primary_key", False), bool, f"{cwhere}.primary_key"),
                    description=_expect(c.get("description", ""), str, f"{cwhere}.description"),
                    unique_keywords=_str_list(kw.get("unique", []), f"{cwhere}.keywords.unique"),
                    frequent_keywords=_str_list(kw.get("frequent", []), f"{cwhere}.keywords.frequent"),
                )
            )
        if "key_hierarchy" in t:
            hierarchy = _str_list(t["key_hierarchy"], f"{where}.key_hierarchy")
        else:
            pks = [c.name for c in columns if c.primary_key]
            if len(pks) > 1:
                raise ValidationError(f"table {name}: key_hierarchy is required with several primary keys", entity=name)
            hierarchy = tuple(pks)
        tables.append(TableDecl(name, tuple(columns), hierarchy))

    context = []
    for i, e in enumerate(_expect(doc.get("context_edges", []), list, "context_edges")):
        where = f"context_edges[{i}]"
        _expect(e, dict, where)
        _check_fields(e, _CONTEXT_FIELDS, _CONTEXT_FIELDS, where)
        context.append(
            ContextEdgeDecl(
                table=_expect(e["table"], str, f"{where}.table"),
                src=_expect(e["from"], str, f"{where}.from"),
                dst=_expect(e["to"], str, f"{where}.to"),
                label=_expect(e["label"], str, f"{where}.label"),
            )
        )
    derivation = []
    for i, e in enumerate(_expect(doc.get("derivation_edges", []), list, "derivation_edges")):
        where = f"derivation_edges[{i}]"
        _expect(e, dict, where)
        _check_fields(e, _DERIVATION_FIELDS, _DERIVATION_FIELDS, where)
        st, sc = _qualified(e["from"], f"{where}.from")
        dt, dc = _qualified(e["to"], f"{where}.to")
        derivation.append(DerivationEdgeDecl(st, sc, dt, dc, _expect(e["label"], str, f"{where}.label")))
    return SchemaSpec(tuple(tables), tuple(context), tuple(derivation))


def load_schema_spec(source: str) -> SchemaSpec:
    """Parse schema-file text (JSON) into a validated :class:`SchemaSpec`."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise SchemaSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return spec_from_dict(doc)


def read_schema_spec(path) -> SchemaSpec:
    with open(path, encoding="utf-8") as fh:
        return load_schema_spec(fh.read())


def spec_to_dict(spec: SchemaSpec) -> dict:
    tables = []
    for t in spec.tables:
        cols = []
        for c in t.columns:
            col: dict[str, Any] = {"name": c.name, "primary_key": c.primary_key, "description": c.description}
            if c.unique_keywords or c.frequent_keywords:
                col["keywords"] = {"unique": list(c.unique_keywords), "frequent": list(c.frequent_keywords)}
            cols.append(col)
        tables.append({"name": t.name, "columns": cols, "key_hierarchy": list(t.key_hierarchy)})
    return {
        "tables": tables,
        "context_edges": [
            {"table": e.table, "from": e.src, "to": e.dst, "label": e.label} for e in spec.context_edges
        ],
        "derivation_edges": [
            {"from": f"{e.src_table}.{e.src_column}", "to": f"{e.dst_table}.{e.dst_column}", "label": e.label}
            for e in spec.derivation_edges
        ],
    }


def serialize_spec(spec: SchemaSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2, ensure_ascii=False)


# ---------------------------------------------------------------------------
# graph


class SchemaGraph:
    """Directed attribute graph. Treat as immutable once constructed.

    ``key_hierarchy`` maps a table to its primary keys ordered local to global;
    it is used for tie-breaking terminal keys and may be empty for hand-built
    graphs.
    """

    def __init__(
        self,
        nodes: Iterable[AttributeNode],
        edges: Iterable[SchemaEdge],
        key_hierarchy: Mapping[str, Sequence[str]] | None = None,
    ):
        self.nodes: tuple[AttributeNode, ...] = tuple(nodes)
        self.edges: tuple[SchemaEdge, ...] = tuple(edges)
        self.key_hierarchy: dict[str, tuple[str, ...]] = {
            t: tuple(h) for t, h in (key_hierarchy or {}).items()
        }
        self._by_ident: dict[tuple[str, str], AttributeNode] = {}
        for node in self.nodes:
            self._by_ident.setdefault(node.ident, node)
        out: dict[AttributeNode, list[SchemaEdge]] = defaultdict(list)
        inc: dict[AttributeNode, list[SchemaEdge]] = defaultdict(list)
        for edge in self.edges:
            out[edge.src].append(edge)
            inc[edge.dst].append(edge)
        self._out = {n: tuple(sorted(es, key=_edge_order)) for n, es in out.items()}
        self._in = {n: tuple(sorted(es, key=lambda e: (e.kind.rank, e.src.table, e.src.column))) for n, es in inc.items()}
        self._cache: dict = {}

    def __contains__(self, node: object) -> bool:
        return isinstance(node, AttributeNode) and self._by_ident.get(node.ident) == node

    def node(self, table: str, column: str) -> AttributeNode:
        try:
            return self._by_ident[(table, column)]
        except KeyError:
            raise UnknownNode(f"{column}[{table}] is not in the graph") from None

    def resolve(self, ref: str) -> AttributeNode:
        """Look up a node from its ``COLUMN[TABLE]`` form."""
        table, column = parse_node_ref(ref)
        return self.node(table, column)

    def tables(self) -> list[str]:
        return list(dict.fromkeys(n.table for n in self.nodes))

    def table_nodes(self, table: str) -> list[AttributeNode]:
        return [n for n in self.nodes if n.table == table]

    def primary_keys(self, table: str) -> list[AttributeNode]:
        return [n for n in self.nodes if n.table == table and n.is_primary_key]

    def incoming(self, node: AttributeNode) -> tuple[SchemaEdge, ...]:
        self._require(node)
        return self._in.get(node, ())

    def _require(self, node: AttributeNode) -> None:
        if node not in self:
            raise UnknownNode(f"{node} is not in the graph")

    def __repr__(self) -> str:
        return f"SchemaGraph({len(self.nodes)} nodes, {len(self.edges)} edges)"


def _edge_order(edge: SchemaEdge):
    return (edge.kind.rank, edge.dst.table, edge.dst.column)


def outgoing(graph: SchemaGraph, node: AttributeNode) -> tuple[SchemaEdge, ...]:
    """Outgoing edges ordered by kind (context, intra-key, derive, inter-key), then destination."""
    graph._require(node)
    return graph._out.get(node, ())


def build_graph(spec: SchemaSpec) -> SchemaGraph:
    nodes: list[AttributeNode] = []
    lookup: dict[tuple[str, str], AttributeNode] = {}
    edges: list[SchemaEdge] = []
    for table in spec.tables:
        if not table.primary_keys:
            raise ValidationError(f"table {table.name} has no primary key", entity=table.name)
        for col in table.columns:
            node = AttributeNode(col.name, table.name, col.primary_key)
            nodes.append(node)
            lookup[node.ident] = node

    for table in spec.tables:
        hierarchy = [lookup[(table.name, k)] for k in table.key_hierarchy]
        local = hierarchy[0]
        for col in table.columns:
            if not col.primary_key:
                edges.append(
                    SchemaEdge(lookup[(table.name, col.name)], local, EdgeKind.INTRA_KEY, f"{col.name} is recorded per {local.column}")
                )
        for lower, upper in zip(hierarchy, hierarchy[1:]):
            edges.append(SchemaEdge(lower, upper, EdgeKind.INTRA_KEY, f"{lower.column} is nested within {upper.column}"))

    for e in spec.context_edges:
        edges.append(SchemaEdge(lookup[(e.table, e.src)], lookup[(e.table, e.dst)], EdgeKind.INTRA_CONTEXT, e.label))

    keys_by_name: dict[str, list[AttributeNode]] = defaultdict(list)
    for node in nodes:
        if node.is_primary_key:
            keys_by_name[node.column].append(node)
    for name, keys in keys_by_name.items():
        for a in keys:
            for b in keys:
                if a.table != b.table:
                    edges.append(SchemaEdge(a, b, EdgeKind.INTER_KEY, f"joinable on {name}"))

    for e in spec.derivation_edges:
        edges.append(
            SchemaEdge(lookup[(e.src_table, e.src_column)], lookup[(e.dst_table, e.dst_column)], EdgeKind.INTER_DERIVE, e.label)
        )

    return SchemaGraph(nodes, edges, {t.name: t.key_hierarchy for t in spec.tables})


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    subject: str = ""

    def __str__(self) -> str:
        return f"{self.rule}: {self.message}"


def _kind_violation(edge: SchemaEdge) -> str | None:
    same = edge.src.table == edge.dst.table
    if edge.kind in (EdgeKind.INTRA_KEY, EdgeKind.INTRA_CONTEXT) and not same:
        return f"{edge.kind.value} edge {edge} crosses tables"
    if edge.kind.is_inter and same:
        return f"{edge.kind.value} edge {edge} stays within table {edge.src.table}"
    if edge.kind is EdgeKind.INTRA_KEY and not edge.dst.is_primary_key:
        return f"IntraKey edge {edge} targets non-key attribute {edge.dst} (destination must be a primary key)"
    if edge.kind is EdgeKind.INTER_KEY:
        if edge.src.column != edge.dst.column:
            return f"InterKey edge {edge} joins differently named columns"
        if not (edge.src.is_primary_key and edge.dst.is_primary_key):
            return f"InterKey edge {edge} has a non-key endpoint"
    return None


def validate_graph(graph: SchemaGraph) -> list[Violation]:
    """Check structural invariants; returns violations instead of raising."""
    out: list[Violation] = []
    seen_ident: dict[tuple[str, str], AttributeNode] = {}
    for node in graph.nodes:
        prev = seen_ident.get(node.ident)
        if prev is not None:
            out.append(Violation("duplicate-node", f"attribute {node} declared more than once", str(node)))
        seen_ident[node.ident] = node
    node_set = set(graph.nodes)

    seen_triples = set()
    for edge in graph.edges:
        if edge.src not in node_set or edge.dst not in node_set:
            missing = edge.src if edge.src not in node_set else edge.dst
            out.append(Violation("edge-endpoint", f"edge {edge} references unknown node {missing}", str(edge)))
            continue
        if edge.src == edge.dst:
            out.append(Violation("self-loop", f"edge {edge} is a self-loop", str(edge)))
        problem = _kind_violation(edge)
        if problem:
            out.append(Violation("edge-class", problem, str(edge)))
        if edge.triple in seen_triples:
            out.append(Violation("duplicate-edge", f"edge {edge} appears more than once", str(edge)))
        seen_triples.add(edge.triple)
        if not edge.label.strip():
            out.append(Violation("empty-label", f"edge {edge} has no label", str(edge)))

    for edge in graph.edges:
        if edge.kind is EdgeKind.INTER_KEY and (edge.dst, edge.src, EdgeKind.INTER_KEY) not in seen_triples:
            out.append(Violation("inter-key-symmetry", f"InterKey edge {edge} has no reverse edge", str(edge)))

    for table, hierarchy in graph.key_hierarchy.items():
        keys = {n.column for n in graph.primary_keys(table)}
        if sorted(hierarchy) != sorted(keys):
            out.append(Violation("key-hierarchy", f"key hierarchy of {table} is not a permutation of its primary keys", table))

    intra: dict[AttributeNode, list[AttributeNode]] = defaultdict(list)
    for edge in graph.edges:
        if not edge.kind.is_inter and edge.src.table == edge.dst.table:
            intra[edge.src].append(edge.dst)
    for node in graph.nodes:
        if node.is_primary_key:
            continue
        seen = {node}
        queue = deque([node])
        anchored = False
        while queue and not anchored:
            cur = queue.popleft()
            for nxt in intra.get(cur, ()):
                if nxt.is_primary_key and nxt.table == node.table:
                    anchored = True
                    break
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        if not anchored:
            out.append(Violation("unanchored-attribute", f"{node} has no path to a primary key of {node.table}", str(node)))
    return out
