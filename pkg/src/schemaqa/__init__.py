"""Multi-table question answering guided by a hand-curated schema graph."""
from .errors import SchemaQAError
from .path_engine import (
    DependencyPath,
    JoinPlan,
    find_dependency_paths,
    format_reasoning_chain,
    merge_paths,
    plan_for_attributes,
    prune_path,
    terminal_key,
)
from .schema_graph import AttributeNode, EdgeKind, SchemaGraph, build_graph, read_schema_spec, validate_graph

__all__ = [
    "AttributeNode",
    "DependencyPath",
    "EdgeKind",
    "JoinPlan",
    "SchemaGraph",
    "SchemaQAError",
    "build_graph",
    "find_dependency_paths",
    "format_reasoning_chain",
    "merge_paths",
    "plan_for_attributes",
    "prune_path",
    "read_schema_spec",
    "terminal_key",
    "validate_graph",
]
