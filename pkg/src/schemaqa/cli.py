"""Command-line entry point: ``schemaqa <command> ...``.

Exit status is 0 on success, 1 on a domain error and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .config import ANSWER_MODE, SQL_MODE, PipelineConfig, load_config
from .errors import SchemaQAError
from .path_engine import find_dependency_paths, format_reasoning_chain, plan_for_attributes
from .retrieval import score_attributes, select_candidates
from .schema_graph import build_graph, format_node, read_schema_spec, validate_graph

FIXTURES = ("ciss", "olympics")


def fixture_config_path(name: str) -> Path:
    return Path(str(resources.files("schemaqa").joinpath("fixtures", name, "config.json")))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schemaqa", description="Schema-graph question answering over linked tables.")
    p.add_argument("--config", type=Path, help="pipeline config file (JSON)")
    p.add_argument("--fixture", choices=FIXTURES, help="use a bundled fixture configuration")
    p.add_argument("--schema", type=Path, help="schema file, for graph commands without a config")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    graph = sub.add_parser("graph", help="build, validate or search the schema graph")
    gsub = graph.add_subparsers(dest="graph_command")
    gsub.add_parser("build", help="print the graph's nodes and edges")
    gsub.add_parser("validate", help="check the graph's structural rules")
    for parent, name in ((gsub, "paths"), (sub, "paths")):
        cmd = parent.add_parser(name, help="dependency paths and join plan for attributes")
        cmd.add_argument("attributes", nargs="+", metavar="ATTR[TABLE]")
        cmd.add_argument("--raw", action="store_true", help="list unpruned paths per attribute instead of the plan")
        cmd.add_argument("--no-expand", action="store_true", help="do not add context sources of candidates")

    ret = sub.add_parser("retrieve", help="score schema attributes against a text segment")
    ret.add_argument("text")
    ret.add_argument("--top", type=int, default=5)

    ask = sub.add_parser("ask", help="answer a question")
    ask.add_argument("question")

    sql = sub.add_parser("sql", help="generate SQL for a question (sql mode)")
    sql.add_argument("question")
    sql.add_argument("--samples", type=int, default=None, help="draw up to k replies, keep the first with a SELECT")

    ev = sub.add_parser("eval", help="evaluate a JSONL dataset")
    ev.add_argument("dataset", type=Path)
    ev.add_argument("--judge", choices=("match", "model"), default=None)
    ev.add_argument("--output", type=Path, help="write the full JSON report here")

    index = sub.add_parser("index", help="keyword index maintenance")
    isub = index.add_subparsers(dest="index_command")
    ib = isub.add_parser("build", help="(re)build the keyword index cache")
    ib.add_argument("--output", type=Path, help="cache file (defaults to the config's keyword_cache)")
    return p


def _emit(args, text: str, data) -> None:
    if args.format == "json":
        print(json.dumps(data, ensure_ascii=False, indent=2))
    else:
        print(text)


def _config(args, parser) -> PipelineConfig:
    if args.config is None and args.fixture is None:
        parser.error(f"{args.command} needs --config or --fixture")
    return load_config(args.config if args.config is not None else fixture_config_path(args.fixture))


def _graph(args, parser):
    if args.schema is not None:
        return build_graph(read_schema_spec(args.schema))
    return build_graph(read_schema_spec(_config(args, parser).schema))


def _run(args, parser) -> int:
    from . import pipeline

    cmd = args.command
    if cmd == "graph" and args.graph_command is None:
        parser.error("graph needs one of: build, validate, paths")
    if cmd == "index" and args.index_command is None:
        parser.error("index needs: build")
    sub = args.graph_command if cmd == "graph" else None

    if cmd == "paths" or sub == "paths":
        graph = _graph(args, parser)
        nodes = [graph.resolve(a) for a in args.attributes]
        if args.raw:
            paths = [p for n in nodes for p in find_dependency_paths(graph, n)]
            _emit(args, format_reasoning_chain(paths), [format_reasoning_chain(p) for p in paths])
        else:
            plan = plan_for_attributes(graph, nodes, expand_context=not args.no_expand)
            _emit(args, format_reasoning_chain(plan), plan.to_dict())
        return 0
    if sub == "build":
        graph = _graph(args, parser)
        lines = [f"{len(graph.nodes)} nodes, {len(graph.edges)} edges"]
        lines += [f"{e.src} -> {e.dst} ({e.kind.value}: {e.label})" for e in graph.edges]
        data = {
            "nodes": [{"node": format_node(n), "primary_key": n.is_primary_key} for n in graph.nodes],
            "edges": [
                {"src": format_node(e.src), "dst": format_node(e.dst), "kind": e.kind.value, "label": e.label}
                for e in graph.edges
            ],
        }
        _emit(args, "\n".join(lines), data)
        return 0
    if sub == "validate":
        violations = validate_graph(_graph(args, parser))
        text = "\n".join([f"{len(violations)} violations"] + [f"{v.rule}: {v.message}" for v in violations])
        _emit(args, text, {"violations": [v.__dict__ for v in violations]})
        return 0 if not violations else 1

    config = _config(args, parser)
    if cmd == "ask" and config.mode != ANSWER_MODE:
        parser.error("ask needs a config in answer mode")
    if cmd == "sql" and config.mode != SQL_MODE:
        parser.error("sql needs a config in sql mode")
    engine = pipeline.build_engine(config)

    if cmd == "retrieve":
        scored = score_attributes(args.text, engine.index, engine.gateway.embed, config.retrieval.keyword_join)
        chosen = set(select_candidates(scored, config.retrieval))
        rows = scored[: max(args.top, 1)]
        text = "\n".join(
            f"{'*' if s.attribute in chosen else ' '} {format_node(s.attribute):28} {s.normalized_score:.4f}  (cos {s.raw_similarity:+.4f})"
            for s in rows
        )
        data = [
            {"attribute": format_node(s.attribute), "score": s.normalized_score, "cosine": s.raw_similarity,
             "selected": s.attribute in chosen}
            for s in rows
        ]
        _emit(args, text, data)
        return 0
    if cmd == "ask":
        record = pipeline.answer_question(args.question, engine)
        text = "\n".join(
            ["Graph searching result:", format_reasoning_chain(record.plan), "", "Facts:"]
            + [f"  {f.text}" for f in record.facts]
            + ["", f"Answer: {record.text}"]
        )
        _emit(args, text, record.to_dict())
        return 0
    if cmd == "sql":
        result = pipeline.generate_sql(args.question, engine, samples=args.samples)
        text = pipeline.format_path_lines(result.paths) + "\n\n" + result.sql
        _emit(args, text, result.to_dict())
        return 0
    if cmd == "eval":
        report = pipeline.evaluate(pipeline.load_dataset(args.dataset), engine, judge=args.judge)
        if args.output is not None:
            args.output.write_text(report.to_json(), encoding="utf-8")
        lines = [f"accuracy {report.accuracy:.4f} over {len(report.verdicts)} items"]
        lines += [f"{name}: {b['correct']}/{b['count']} = {b['accuracy']:.4f}" for name, b in report.buckets.items()]
        lines += [f"  {v.id} {'ok ' if v.correct else 'ERR' if v.error else 'no '} {v.error or ''}".rstrip() for v in report.verdicts]
        _emit(args, "\n".join(lines), report.to_dict())
        return 0
    if cmd == "index":
        if args.output is not None:
            engine.config = replace(config, keyword_cache=args.output)
        if engine.config.keyword_cache is None:
            parser.error("index build needs --output or a keyword_cache in the config")
        index = pipeline.load_or_build_index(engine, rebuild=True)
        _emit(args, f"{len(index)} entries, dimension {index.dimension} -> {engine.config.keyword_cache}",
              {"entries": len(index), "dimension": index.dimension, "path": str(engine.config.keyword_cache)})
        return 0
    parser.error(f"unknown command {cmd!r}")
    return 2


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return _run(args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (SchemaQAError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
