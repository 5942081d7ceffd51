"""Dependency-path search, pruning and merging over a :class:`SchemaGraph`.

A dependency path starts at a retrieved attribute and follows context,
intra-key and derivation edges until it reaches the terminal key of the table
it is currently in. Pruning keeps the single-table tail after the last
cross-table edge; merging groups tails by ``(table, terminal key)`` and drops
chains already covered by a longer chain of the same group.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import MixedTablePath, NoReachableKey, NotAKey, PathExplosion, UnknownNode
from .schema_graph import AttributeNode, EdgeKind, SchemaEdge, SchemaGraph, format_node, outgoing

log = logging.getLogger(__name__)

DEFAULT_MAX_HOPS = 8
DEFAULT_MAX_PATHS = 256


@dataclass(frozen=True)
class DependencyPath:
    nodes: tuple[AttributeNode, ...]
    edges: tuple[SchemaEdge, ...] = ()
    # cross-table edges removed by prune_path, kept so plans stay joinable
    crossed: tuple[SchemaEdge, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("a dependency path needs at least one node")
        if len(self.edges) != len(self.nodes) - 1:
            raise ValueError("a path with n nodes needs n - 1 edges")
        for i, edge in enumerate(self.edges):
            if edge.src != self.nodes[i] or edge.dst != self.nodes[i + 1]:
                raise ValueError(f"edge {edge} does not connect {self.nodes[i]} -> {self.nodes[i + 1]}")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("dependency paths must be simple")

    @property
    def head(self) -> AttributeNode:
        return self.nodes[0]

    @property
    def last(self) -> AttributeNode:
        return self.nodes[-1]

    @property
    def tables(self) -> list[str]:
        return list(dict.fromkeys(n.table for n in self.nodes))

    def __len__(self) -> int:
        return len(self.edges)

    def __str__(self) -> str:
        return format_reasoning_chain(self)


# ---------------------------------------------------------------------------
# depth and terminal key


def _key_depths(graph: SchemaGraph, start: AttributeNode) -> dict[AttributeNode, int]:
    """Longest simple intra-table path length from ``start`` to each reachable key of its table."""
    cache = graph._cache.setdefault("key_depths", {})
    if start in cache:
        return cache[start]
    table = start.table
    best: dict[AttributeNode, int] = {}
    on_path = {start}

    def walk(node: AttributeNode, dist: int) -> None:
        if node.is_primary_key and dist > best.get(node, -1):
            best[node] = dist
        for edge in outgoing(graph, node):
            nxt = edge.dst
            if edge.kind.is_inter or nxt.table != table or nxt in on_path:
                continue
            on_path.add(nxt)
            walk(nxt, dist + 1)
            on_path.discard(nxt)

    walk(start, 0)
    cache[start] = best
    return best


def depth(graph: SchemaGraph, start: AttributeNode, key: AttributeNode) -> int | None:
    """Topological distance from ``start`` to ``key`` over intra-table edges.

    Measured as the longest simple path, so a chain ``AGE -> ROLE -> OCCNO ->
    VEHNO -> CASEID`` gives 4 even when ``AGE`` also has a direct key edge.
    Returns ``None`` when ``key`` is unreachable.
    """
    graph._require(start)
    graph._require(key)
    if not key.is_primary_key:
        raise NotAKey(f"{key} is not a primary key")
    if key.table != start.table:
        return None
    return _key_depths(graph, start).get(key)


def _global_rank(graph: SchemaGraph, key: AttributeNode) -> int:
    hierarchy = graph.key_hierarchy.get(key.table, ())
    return hierarchy.index(key.column) if key.column in hierarchy else -1


def terminal_key(graph: SchemaGraph, attribute: AttributeNode) -> AttributeNode:
    """The deepest reachable primary key of the attribute's table.

    Ties go to the more global key of the declared hierarchy, then to the
    lexicographically smaller column name.
    """
    graph._require(attribute)
    cache = graph._cache.setdefault("terminal", {})
    if attribute in cache:
        found = cache[attribute]
    else:
        depths = _key_depths(graph, attribute)
        found = None
        if depths:
            found = min(depths, key=lambda k: (-depths[k], -_global_rank(graph, k), k.column))
        cache[attribute] = found
    if found is None:
        raise NoReachableKey(f"{attribute} reaches no primary key of {attribute.table}")
    return found


def _terminal_or_none(graph: SchemaGraph, attribute: AttributeNode) -> AttributeNode | None:
    try:
        return terminal_key(graph, attribute)
    except NoReachableKey:
        return None


# ---------------------------------------------------------------------------
# enumeration


@dataclass
class PathSearch:
    paths: list[DependencyPath]
    truncated: list[DependencyPath]


def is_terminal(graph: SchemaGraph, node: AttributeNode, entry: AttributeNode) -> bool:
    """Whether a path whose current table segment began at ``entry`` may stop at ``node``.

    The node must be the segment's terminal key; a key that still has an
    outgoing derivation edge (a key feeding a foreign column) is passed
    through instead.
    """
    if not node.is_primary_key or node != _terminal_or_none(graph, entry):
        return False
    return not any(e.kind is EdgeKind.INTER_DERIVE for e in outgoing(graph, node))


def search_dependency_paths(
    graph: SchemaGraph,
    attribute: AttributeNode,
    max_hops: int = DEFAULT_MAX_HOPS,
    max_paths: int = DEFAULT_MAX_PATHS,
    follow_inter_key: bool = False,
) -> PathSearch:
    """Depth-first enumeration of dependency paths, reporting paths cut at ``max_hops``.

    InterKey edges are join links rather than dependencies and are skipped
    unless ``follow_inter_key`` is set.
    """
    graph._require(attribute)
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    found: list[DependencyPath] = []
    cut: list[DependencyPath] = []
    nodes = [attribute]
    edges: list[SchemaEdge] = []
    visited = {attribute}

    def extend(entry: AttributeNode) -> None:
        last = nodes[-1]
        if is_terminal(graph, last, entry):
            found.append(DependencyPath(tuple(nodes), tuple(edges)))
            if len(found) > max_paths:
                raise PathExplosion(f"more than {max_paths} dependency paths from {attribute}")
            return
        steps = [
            e for e in outgoing(graph, last)
            if e.dst not in visited and (follow_inter_key or e.kind is not EdgeKind.INTER_KEY)
        ]
        if len(edges) >= max_hops:
            if steps:
                cut.append(DependencyPath(tuple(nodes), tuple(edges)))
            return
        for edge in steps:
            nodes.append(edge.dst)
            edges.append(edge)
            visited.add(edge.dst)
            extend(edge.dst if edge.kind.is_inter else entry)
            visited.discard(edge.dst)
            edges.pop()
            nodes.pop()

    extend(attribute)
    return PathSearch(found, cut)


def find_dependency_paths(
    graph: SchemaGraph,
    attribute: AttributeNode,
    max_hops: int = DEFAULT_MAX_HOPS,
    max_paths: int = DEFAULT_MAX_PATHS,
    follow_inter_key: bool = False,
) -> list[DependencyPath]:
    result = search_dependency_paths(graph, attribute, max_hops, max_paths, follow_inter_key)
    for path in result.truncated:
        log.warning("dependency path cut at %d hops: %s", max_hops, format_reasoning_chain(path))
    return result.paths


# ---------------------------------------------------------------------------
# pruning and merging


def prune_path(path: DependencyPath) -> DependencyPath:
    """Keep only the tail after the last cross-table edge."""
    last_inter = None
    for i, edge in enumerate(path.edges):
        if edge.kind.is_inter:
            last_inter = i
    if last_inter is None:
        return path
    dropped = tuple(e for e in path.edges[: last_inter + 1] if e.kind.is_inter)
    return DependencyPath(
        path.nodes[last_inter + 1:],
        path.edges[last_inter + 1:],
        crossed=path.crossed + dropped,
    )


@dataclass(frozen=True)
class PlanGroup:
    table: str
    terminal_key: AttributeNode
    attributes: tuple[AttributeNode, ...]
    paths: tuple[DependencyPath, ...]

    @property
    def heads(self) -> tuple[AttributeNode, ...]:
        return tuple(dict.fromkeys(p.head for p in self.paths))


@dataclass(frozen=True)
class JoinPlan:
    groups: tuple[PlanGroup, ...]
    join_edges: tuple[SchemaEdge, ...] = ()

    @property
    def tables(self) -> list[str]:
        return list(dict.fromkeys(g.table for g in self.groups))

    def all_paths(self) -> list[DependencyPath]:
        return [p for g in self.groups for p in g.paths]

    def link_edges(self) -> list[SchemaEdge]:
        """Join edges that connect two groups' terminal keys."""
        keys = {g.terminal_key for g in self.groups}
        return [e for e in self.join_edges if e.kind is EdgeKind.INTER_KEY and e.src in keys and e.dst in keys]

    def to_dict(self) -> dict:
        return {
            "groups": [
                {
                    "table": g.table,
                    "terminal_key": format_node(g.terminal_key),
                    "attributes": [format_node(a) for a in g.attributes],
                    "paths": [[format_node(n) for n in p.nodes] for p in g.paths],
                }
                for g in self.groups
            ],
            "join_edges": [
                {"src": format_node(e.src), "dst": format_node(e.dst), "kind": e.kind.value} for e in self.join_edges
            ],
        }


def plan_from_dict(data: dict, graph: SchemaGraph) -> JoinPlan:
    """Rebuild a plan serialized with :meth:`JoinPlan.to_dict`; edges are looked up in ``graph``."""

    def edge_between(a: AttributeNode, b: AttributeNode, kind: EdgeKind | None = None) -> SchemaEdge:
        for e in outgoing(graph, a):
            if e.dst == b and (kind is None or e.kind is kind):
                return e
        raise UnknownNode(f"no edge {a} -> {b} in graph")

    groups = []
    for g in data["groups"]:
        paths = []
        for refs in g["paths"]:
            nodes = tuple(graph.resolve(r) for r in refs)
            paths.append(DependencyPath(nodes, tuple(edge_between(a, b) for a, b in zip(nodes, nodes[1:]))))
        groups.append(
            PlanGroup(
                g["table"],
                graph.resolve(g["terminal_key"]),
                tuple(graph.resolve(a) for a in g["attributes"]),
                tuple(paths),
            )
        )
    joins = tuple(
        edge_between(graph.resolve(e["src"]), graph.resolve(e["dst"]), EdgeKind(e["kind"])) for e in data["join_edges"]
    )
    return JoinPlan(tuple(groups), joins)


def _is_subsequence(short: Sequence, long: Sequence) -> bool:
    it = iter(long)
    return all(any(x == y for y in it) for x in short)


def _path_sort_key(path: DependencyPath):
    return tuple(format_node(n) for n in path.nodes)


def merge_paths(paths: Iterable[DependencyPath], graph: SchemaGraph | None = None) -> JoinPlan:
    """Group pruned paths by ``(table, terminal key)`` into a non-redundant join plan.

    Within a group, duplicate chains collapse and a chain whose nodes form a
    subsequence of another chain in the group is dropped. Groups whose
    terminal keys share a column name are linked with InterKey join edges on
    every key column the two tables share (all of them from ``graph`` when
    given, otherwise those visible in the group paths).
    """
    grouped: dict[tuple[str, AttributeNode], list[DependencyPath]] = {}
    for path in paths:
        if len(path.tables) != 1:
            raise MixedTablePath(f"path {format_reasoning_chain(path)} spans tables {path.tables}; prune it first")
        grouped.setdefault((path.last.table, path.last), []).append(path)

    groups: list[PlanGroup] = []
    crossings: list[SchemaEdge] = []
    for (table, key) in sorted(grouped, key=lambda k: (k[0], k[1].column)):
        candidates = grouped[(table, key)]
        by_nodes: dict[tuple[AttributeNode, ...], list[DependencyPath]] = {}
        for p in candidates:
            by_nodes.setdefault(p.nodes, []).append(p)
        kept = [
            nodes for nodes in by_nodes
            if not any(other != nodes and _is_subsequence(nodes, other) for other in by_nodes)
        ]
        stored = []
        for nodes in kept:
            absorbed = [p for n2, ps in by_nodes.items() if _is_subsequence(n2, nodes) for p in ps]
            crossed = tuple(dict.fromkeys(e for p in absorbed for e in p.crossed))
            first = by_nodes[nodes][0]
            stored.append(DependencyPath(first.nodes, first.edges, crossed=crossed))
        stored.sort(key=_path_sort_key)
        attrs = tuple(dict.fromkeys(n for p in stored for n in p.nodes if n != key))
        groups.append(PlanGroup(table, key, attrs, tuple(stored)))
        crossings.extend(e for p in stored for e in p.crossed)

    join_edges: list[SchemaEdge] = []
    for i, gi in enumerate(groups):
        for gj in groups[i + 1:]:
            if gi.table == gj.table or gi.terminal_key.column != gj.terminal_key.column:
                continue
            join_edges.extend(_join_edges_between(gi, gj, graph))
    group_tables = {g.table for g in groups}
    for edge in sorted(dict.fromkeys(crossings), key=lambda e: (e.src.table, e.src.column, e.dst.table, e.dst.column)):
        if edge.kind is EdgeKind.INTER_DERIVE and edge.src.table in group_tables and edge.dst.table in group_tables:
            if edge not in join_edges:
                join_edges.append(edge)
    return JoinPlan(tuple(groups), tuple(join_edges))


def _join_edges_between(gi: PlanGroup, gj: PlanGroup, graph: SchemaGraph | None) -> list[SchemaEdge]:
    if graph is not None:
        edges = [
            e for k in graph.primary_keys(gi.table) for e in outgoing(graph, k)
            if e.kind is EdgeKind.INTER_KEY and e.dst.table == gj.table
        ]
    else:
        keys_i = {n.column: n for p in gi.paths for n in p.nodes if n.is_primary_key}
        keys_j = {n.column: n for p in gj.paths for n in p.nodes if n.is_primary_key}
        edges = [
            SchemaEdge(keys_i[c], keys_j[c], EdgeKind.INTER_KEY, f"joinable on {c}")
            for c in sorted(keys_i.keys() & keys_j.keys())
        ]
    # the link between terminal keys first, then the remaining shared keys
    edges.sort(key=lambda e: (e.src != gi.terminal_key, e.src.column))
    return edges


# ---------------------------------------------------------------------------
# rendering


def format_reasoning_chain(item) -> str:
    """Render a path as ``"A[T], B[T], ..."`` or a plan / path list as numbered lines."""
    if isinstance(item, DependencyPath):
        return ", ".join(format_node(n) for n in item.nodes)
    if isinstance(item, AttributeNode):
        return format_node(item)
    if isinstance(item, JoinPlan):
        chains = [format_reasoning_chain(p) for p in item.all_paths()]
        chains += [f"{format_node(e.src)}, {format_node(e.dst)}" for e in item.link_edges()]
    else:
        chains = [format_reasoning_chain(p) for p in item]
    return "\n".join(f"Path {i}: {c}" for i, c in enumerate(chains, 1))


# ---------------------------------------------------------------------------
# planning from retrieved attributes


def expand_context_candidates(graph: SchemaGraph, attributes: Iterable[AttributeNode]) -> list[AttributeNode]:
    """Add the context sources of candidates that no other candidate already reaches.

    A non-key candidate ``v`` with incoming IntraContext edges ``u -> v`` gets
    every such ``u`` added, unless some ``u`` is a candidate already (its chain
    then covers ``v``). One pass, not transitive.
    """
    attrs = list(dict.fromkeys(attributes))
    chosen = set(attrs)
    out = list(attrs)
    for v in attrs:
        if v.is_primary_key:
            continue
        sources = [e.src for e in graph.incoming(v) if e.kind is EdgeKind.INTRA_CONTEXT]
        if not sources or any(u in chosen for u in sources):
            continue
        for u in sorted(sources, key=lambda n: n.column):
            if u not in out:
                out.append(u)
    return out


def plan_for_attributes(
    graph: SchemaGraph,
    attributes: Iterable[AttributeNode],
    expand_context: bool = True,
    max_hops: int = DEFAULT_MAX_HOPS,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> JoinPlan:
    """Search, prune and merge dependency paths for a set of retrieved attributes.

    Bare key paths (a lone primary key) are dropped when any other path exists,
    since they contribute no attribute to the plan.
    """
    attrs = list(dict.fromkeys(attributes))
    if expand_context:
        attrs = expand_context_candidates(graph, attrs)
    pruned = [prune_path(p) for a in attrs for p in find_dependency_paths(graph, a, max_hops, max_paths)]
    if any(len(p) for p in pruned):
        pruned = [p for p in pruned if len(p)]
    return merge_paths(pruned, graph)
