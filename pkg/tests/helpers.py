"""Shared generators and independent oracles for the test suite."""
from __future__ import annotations

import itertools
import random
from importlib import resources
from pathlib import Path

import networkx as nx

from schemaqa.path_engine import DependencyPath
from schemaqa.schema_graph import (
    ColumnDecl,
    ContextEdgeDecl,
    DerivationEdgeDecl,
    EdgeKind,
    SchemaGraph,
    SchemaSpec,
    TableDecl,
)
from schemaqa.table_store import Table

FIXTURES = Path(str(resources.files("schemaqa").joinpath("fixtures")))
CISS = FIXTURES / "ciss"
OLYMPICS = FIXTURES / "olympics"

KEY_POOL = ("K0", "K1", "K2")


# ---------------------------------------------------------------------------
# random schemas


def random_spec(rng: random.Random, max_nodes: int = 12, max_tables: int = 3) -> SchemaSpec:
    """A valid random schema with at most ``max_nodes`` attributes in total."""
    n_tables = rng.randint(1, max_tables)
    budget = max_nodes
    tables = []
    for t in range(n_tables):
        remaining_tables = n_tables - t - 1
        room = budget - remaining_tables  # leave one node per later table
        n_keys = rng.randint(1, min(3, room))
        keys = rng.sample(KEY_POOL, n_keys)
        n_plain = rng.randint(0, min(3, room - n_keys))
        budget -= n_keys + n_plain
        cols = [ColumnDecl(k, True) for k in sorted(keys)] + [ColumnDecl(f"A{i}") for i in range(n_plain)]
        rng.shuffle(cols)
        hierarchy = list(keys)
        rng.shuffle(hierarchy)
        tables.append(TableDecl(f"T{t}", tuple(cols), tuple(hierarchy)))

    context = []
    for table in tables:
        plain = [c.name for c in table.columns if not c.primary_key]
        for a, b in itertools.permutations(plain, 2):
            if rng.random() < 0.35:
                context.append(ContextEdgeDecl(table.name, a, b, f"{a} read with {b}"))
    derivation = []
    if len(tables) > 1:
        for _ in range(rng.randint(0, 3)):
            src, dst = rng.sample(tables, 2)
            sc, dc = rng.choice(src.columns).name, rng.choice(dst.columns).name
            decl = DerivationEdgeDecl(src.name, sc, dst.name, dc, f"{dst.name}.{dc} from {src.name}.{sc}")
            if all((d.src_table, d.src_column, d.dst_table, d.dst_column) != (src.name, sc, dst.name, dc) for d in derivation):
                derivation.append(decl)
    return SchemaSpec(tuple(tables), tuple(context), tuple(derivation))


# ---------------------------------------------------------------------------
# path oracle (networkx, edge based)


def _multigraph(graph: SchemaGraph, include_inter_key: bool = False) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    g.add_nodes_from(graph.nodes)
    for e in graph.edges:
        if e.kind is EdgeKind.INTER_KEY and not include_inter_key:
            continue
        g.add_edge(e.src, e.dst, key=e.kind)
    return g


def oracle_terminal_key(graph: SchemaGraph, entry):
    """Deepest key by longest simple intra-table path; ties to the more global key, then by name."""
    sub = nx.DiGraph()
    sub.add_node(entry)
    for e in graph.edges:
        if e.src.table == e.dst.table == entry.table and e.kind in (EdgeKind.INTRA_CONTEXT, EdgeKind.INTRA_KEY):
            sub.add_edge(e.src, e.dst)
    best = {}
    for node in sub.nodes:
        if not node.is_primary_key:
            continue
        if node == entry:
            best[node] = 0
            continue
        lengths = [len(p) - 1 for p in nx.all_simple_paths(sub, entry, node)]
        if lengths:
            best[node] = max(lengths)
    if not best:
        return None
    hierarchy = list(graph.key_hierarchy.get(entry.table, ()))

    def rank(k):
        return hierarchy.index(k.column) if k.column in hierarchy else -1

    top = max(best.values())
    tied = [k for k, d in best.items() if d == top]
    top_rank = max(rank(k) for k in tied)
    return min((k for k in tied if rank(k) == top_rank), key=lambda k: k.column)


def _entry(nodes, edges_kinds):
    entry = nodes[0]
    for i, (u, v) in enumerate(zip(nodes, nodes[1:])):
        if u.table != v.table:
            entry = v
    return entry


def _oracle_is_terminal(graph: SchemaGraph, nodes) -> bool:
    last = nodes[-1]
    if not last.is_primary_key:
        return False
    if last != oracle_terminal_key(graph, _entry(nodes, None)):
        return False
    return not any(e.src == last and e.kind is EdgeKind.INTER_DERIVE for e in graph.edges)


def oracle_paths(graph: SchemaGraph, attribute, max_hops: int = 8) -> set[tuple]:
    """All simple edge paths from ``attribute`` that stop at their first terminal node.

    Returned as ``(nodes, kinds)`` tuples so parallel edges of different kinds
    stay distinct.
    """
    g = _multigraph(graph)
    candidates = [((attribute,), ())]
    for target in g.nodes:
        if target == attribute:
            continue
        for epath in nx.all_simple_edge_paths(g, attribute, target, cutoff=max_hops):
            nodes = (attribute,) + tuple(v for _, v, _ in epath)
            candidates.append((nodes, tuple(k for _, _, k in epath)))
    out = set()
    for nodes, kinds in candidates:
        if not _oracle_is_terminal(graph, nodes):
            continue
        if any(_oracle_is_terminal(graph, nodes[:i]) for i in range(1, len(nodes))):
            continue
        out.add((nodes, kinds))
    return out


def as_oracle_form(paths: list[DependencyPath]) -> set[tuple]:
    return {(p.nodes, tuple(e.kind for e in p.edges)) for p in paths}


# ---------------------------------------------------------------------------
# random corpora and the nested-loop join oracle


def random_corpus(rng: random.Random, max_tables: int = 5, max_rows: int = 50, max_keys: int = 3):
    """(spec, corpus) with up to ``max_keys`` shared key columns and small key domains."""
    keys = [f"K{i}" for i in range(rng.randint(1, max_keys))]
    n_tables = rng.randint(1, max_tables)
    tables, corpus = [], {}
    for t in range(n_tables):
        name = f"T{t}"
        pks = sorted(rng.sample(keys, rng.randint(1, len(keys))))
        plain = [f"V{t}_{i}" for i in range(rng.randint(1, 2))]
        hierarchy = list(pks)
        rng.shuffle(hierarchy)
        cols = [ColumnDecl(k, True) for k in pks] + [ColumnDecl(c) for c in plain]
        tables.append(TableDecl(name, tuple(cols), tuple(hierarchy)))
        domain = [str(v) for v in range(rng.randint(2, 4))] + ["", " "]
        weights = [1.0] * (len(domain) - 2) + [0.1, 0.05]
        seen, rows = set(), []
        for _ in range(rng.randint(0, max_rows)):
            key = tuple(rng.choices(domain, weights)[0] for _ in pks)
            if key in seen:
                continue
            seen.add(key)
            rows.append(key + tuple(f"{c}:{rng.randint(0, 9)}" for c in plain))
        corpus[name] = Table(name, tuple(pks) + tuple(plain), tuple(pks), tuple(rows))
    return SchemaSpec(tuple(tables)), corpus


def nested_loop_join(view, plan) -> list[dict]:
    """Cartesian product of the plan tables filtered by every InterKey join predicate."""
    tables = plan.tables
    wanted = {}
    for g in plan.groups:
        cols = wanted.setdefault(g.table, list(view.corpus[g.table].primary_keys))
        for a in g.attributes:
            if a.column not in cols:
                cols.append(a.column)
    preds = [
        (f"{e.src.table}.{e.src.column}", f"{e.dst.table}.{e.dst.column}")
        for e in plan.join_edges
        if e.kind is EdgeKind.INTER_KEY
    ]
    out = []
    for combo in itertools.product(*(view.rows(t) for t in tables)):
        rec = {}
        for t, row in zip(tables, combo):
            cols = view.corpus[t].columns
            full = dict(zip(cols, row))
            rec.update({f"{t}.{c}": full[c] for c in cols})
        if all(rec[a].strip() and rec[a].strip() == rec[b].strip() for a, b in preds):
            out.append({k: v for k, v in rec.items() if k.split(".", 1)[1] in wanted[k.split(".", 1)[0]]})
    return out


def record_multiset(records) -> list:
    return sorted(tuple(sorted(r.items())) for r in records)
