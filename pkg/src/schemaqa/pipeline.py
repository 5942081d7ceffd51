"""Question answering over the schema graph: decompose, retrieve, plan, extract, answer.

Also holds the SQL-generation mode and the hop-bucketed evaluation harness.
"""
from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .config import ANSWER_MODE, SQL_MODE, PipelineConfig
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyPaths,
    MalformedDecomposition,
    NoFacts,
    SchemaQAError,
    UnmappableConstraint,
)
from .gateway import MockChatProvider, MockEmbeddingProvider, ModelGateway, OpenAICompatibleProvider, render_template
from .path_engine import DependencyPath, JoinPlan, find_dependency_paths, format_reasoning_chain, plan_for_attributes
from .retrieval import KeywordIndex, RetrievalConfig, build_keyword_index, corpus_column_values, score_attributes, select_candidates
from .schema_graph import AttributeNode, EdgeKind, SchemaGraph, SchemaSpec, build_graph, format_node, outgoing, read_schema_spec
from .table_store import (
    CONTAINS,
    EQUALS,
    ConstraintFilter,
    Fact,
    FactTemplate,
    apply_constraints,
    default_templates,
    execute_join_plan,
    extract_facts,
    load_csv_tables,
    load_fact_templates,
)
from .text import STOPWORDS

log = logging.getLogger(__name__)

CASE_KEY_COLUMN = "CASEID"


# ---------------------------------------------------------------------------
# engine state


@dataclass
class Engine:
    config: PipelineConfig
    spec: SchemaSpec
    graph: SchemaGraph
    gateway: ModelGateway
    corpus: dict | None = None
    templates: dict[str, FactTemplate] = field(default_factory=dict)
    _index: KeywordIndex | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def index(self) -> KeywordIndex:
        with self._lock:
            if self._index is None:
                self._index = load_or_build_index(self)
            return self._index


def build_gateway(config: PipelineConfig, transport=None) -> ModelGateway:
    emb, chat = config.embedding, config.chat
    if emb.provider == "mock":
        embedder = MockEmbeddingProvider(emb.dimension, emb.seed)
    else:
        embedder = OpenAICompatibleProvider(
            base_url=emb.base_url,
            embedding_model=emb.model or "text-embedding-3-small",
            dimension=emb.dimension,
            api_key_env=emb.api_key_env,
            timeout=emb.timeout,
            transport=transport,
        )
    if chat.provider == "mock":
        chatter = MockChatProvider.from_file(chat.script)
    else:
        chatter = OpenAICompatibleProvider(
            base_url=chat.base_url,
            chat_model=chat.model or "gpt-4o",
            api_key_env=chat.api_key_env,
            timeout=chat.timeout,
            transport=transport,
        )
    return ModelGateway(embedder, chatter, max_in_flight=config.max_in_flight, attempts=config.attempts, backoff=config.backoff)


def build_engine(config: PipelineConfig, gateway: ModelGateway | None = None) -> Engine:
    """Load schema (and, in answer mode, the CSV corpus and fact templates)."""
    spec = read_schema_spec(config.schema)
    graph = build_graph(spec)
    gateway = gateway or build_gateway(config)
    engine = Engine(config, spec, graph, gateway)
    if config.mode == ANSWER_MODE:
        engine.corpus = load_csv_tables(config.data_dir, spec)
        if config.fact_templates is not None:
            engine.templates = load_fact_templates(config.fact_templates, spec)
        else:
            engine.templates = default_templates(spec)
    return engine


def load_or_build_index(engine: Engine, rebuild: bool = False) -> KeywordIndex:
    cache = engine.config.keyword_cache
    if cache is not None and Path(cache).exists() and not rebuild:
        index = KeywordIndex.load(cache, engine.graph)
        if engine.gateway.dimension is not None and index.dimension != engine.gateway.dimension:
            raise DimensionMismatch(
                f"keyword cache {cache} has dimension {index.dimension}, embedder gives {engine.gateway.dimension}"
            )
        return index
    values = corpus_column_values(engine.corpus) if engine.corpus is not None else None
    index = build_keyword_index(engine.spec, values, engine.gateway.embed, engine.config.retrieval)
    if cache is not None:
        index.save(cache)
    return index


def _staged(stage: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SchemaQAError as exc:
        if exc.stage is None:
            exc.stage = stage
        raise


# ---------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True)
class DecomposedQuery:
    constraints: tuple[str, ...]
    main_question: str
    raw_question: str

    def __post_init__(self):
        if not self.main_question.strip():
            raise ValueError("main_question must be non-empty")


_CONDITION = re.compile(r"^condition\s+(\d+)\s*:\s*(.*)$", re.IGNORECASE)
_MAIN = re.compile(r"^main\s+question\s*:\s*(.*)$", re.IGNORECASE)


def parse_decomposition(response: str, question: str) -> DecomposedQuery:
    """Read ``Condition N: ...`` lines followed by one ``Main Question: ...`` line.

    An optional leading ``Answer:`` line is accepted; anything else raises
    :class:`MalformedDecomposition`.
    """
    lines = [ln.strip() for ln in response.strip().splitlines() if ln.strip()]
    if lines and lines[0].lower() == "answer:":
        lines = lines[1:]
    constraints: list[str] = []
    main = None
    for ln in lines:
        if main is not None:
            raise MalformedDecomposition(f"text after the main question: {ln!r}", response)
        cond = _CONDITION.match(ln)
        if cond:
            number, text = int(cond.group(1)), cond.group(2).strip()
            if number != len(constraints) + 1:
                raise MalformedDecomposition(f"condition {number} out of sequence", response)
            if not text:
                raise MalformedDecomposition(f"condition {number} is empty", response)
            constraints.append(text)
            continue
        m = _MAIN.match(ln)
        if m:
            main = m.group(1).strip()
            if not main:
                raise MalformedDecomposition("main question is empty", response)
            continue
        raise MalformedDecomposition(f"unrecognized line {ln!r}", response)
    if main is None:
        raise MalformedDecomposition("no 'Main Question:' line", response)
    return DecomposedQuery(tuple(constraints), main, question)


def decompose_query(question: str, gateway: ModelGateway | None, enabled: bool = True) -> DecomposedQuery:
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    if not enabled:
        return DecomposedQuery((), question, question)
    response = gateway.ask("decompose", {"question": question}, temperature=0.0)
    return parse_decomposition(response, question)


# ---------------------------------------------------------------------------
# constraints -> filters

_CASE_RULE = re.compile(r"\bcase(?:\s*(?:id|number|no\.?))?\s*(?:is|=|:)?\s*#?(\d+)\b", re.IGNORECASE)
_QUOTED = re.compile(r"\"([^\"]+)\"|(?<!\w)'([^']+)'(?!\w)|“([^”]+)”")
_TRIM = ".,;:!?()"


def _capitalized_spans(text: str) -> list[str]:
    spans, run = [], []
    for raw in text.split() + [""]:
        tok = raw.strip(_TRIM)
        if tok and (tok[0].isupper() or tok[0].isdigit() or (tok == "-" and run)):
            run.append(tok)
            continue
        while run and (run[0].lower() in STOPWORDS or run[0] == "-"):
            run.pop(0)
        while run and run[-1] == "-":
            run.pop()
        if run:
            spans.append(" ".join(run))
        run = []
    return spans


def extract_value_span(text: str) -> str | None:
    """Quoted span if any, else the longest run of capitalized or numeric words."""
    quoted = [next(g for g in m.groups() if g) for m in _QUOTED.finditer(text)]
    quoted = [q.strip() for q in quoted if q.strip()]
    pool = quoted or _capitalized_spans(text)
    if not pool:
        return None
    return max(pool, key=len)


def _case_key(scored, graph: SchemaGraph) -> AttributeNode | None:
    keys = [s for s in scored if s.attribute.column == CASE_KEY_COLUMN and s.attribute.is_primary_key]
    if not keys:
        return None
    # the table keyed by the case alone is the natural home of the case id
    keys.sort(key=lambda s: (len(graph.primary_keys(s.attribute.table)), -s.normalized_score, s.attribute.table))
    return keys[0].attribute


def _schema_rows(spec: SchemaSpec) -> str:
    rows = []
    for t in spec.tables:
        for c in t.columns:
            words = [*c.unique_keywords, *c.frequent_keywords]
            if c.description:
                words.append(c.description)
            words = ", ".join(dict.fromkeys(words))
            rows.append(f"{t.name} | {c.name} | {words}")
    return "\n".join(rows)


def parse_attribute_selection(response: str, graph: SchemaGraph) -> list[tuple[str, AttributeNode]]:
    """``(fragment, attribute)`` pairs from an attribute-selection JSON reply; unknown columns are skipped."""
    text = response.strip()
    fence = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    if fence:
        text = fence.group(1)
    start, end = text.find("["), text.rfind("]")
    if start < 0 or end < start:
        raise MalformedDecomposition("attribute selection reply holds no JSON list", response)
    try:
        items = json.loads(text[start : end + 1])
    except json.JSONDecodeError as exc:
        raise MalformedDecomposition(f"attribute selection reply is not JSON: {exc}", response) from exc
    out = []
    for item in items:
        if not isinstance(item, dict):
            raise MalformedDecomposition("attribute selection entries must be objects", response)
        try:
            node = graph.node(str(item["sheet_name"]), str(item["column_name"]))
        except KeyError:
            log.warning("attribute selection names unknown column %r", item)
            continue
        out.append((str(item.get("fragment", "")), node))
    return out


def map_constraint_to_filter(
    constraint: str,
    index: KeywordIndex,
    embedder,
    config: RetrievalConfig = RetrievalConfig(),
    graph: SchemaGraph | None = None,
    gateway: ModelGateway | None = None,
    spec: SchemaSpec | None = None,
) -> ConstraintFilter:
    """Turn one condition into a filter: case-id rule, then value-span rule, then a model call."""
    text = (constraint or "").strip()
    if not text:
        raise UnmappableConstraint("empty constraint")
    scored = score_attributes(text, index, embedder, config.keyword_join)
    case = _CASE_RULE.search(text)
    if case:
        key = _case_key(scored, graph) if graph is not None else None
        if key is None:
            key = next((s.attribute for s in scored if s.attribute.column == CASE_KEY_COLUMN), None)
        if key is not None:
            return ConstraintFilter(key, EQUALS, case.group(1))
    top = scored[0].attribute
    span = extract_value_span(text)
    if span:
        return ConstraintFilter(top, EQUALS if top.is_primary_key else CONTAINS, span)
    if gateway is not None and graph is not None and spec is not None:
        picks = parse_attribute_selection(
            gateway.ask("attribute_select", {"schema_rows": _schema_rows(spec), "question": text}), graph
        )
        for fragment, node in picks:
            if fragment.strip():
                return ConstraintFilter(node, EQUALS if node.is_primary_key else CONTAINS, fragment.strip())
    raise UnmappableConstraint(f"no attribute/value could be read from constraint {text!r}")


def propagate_key_filters(graph: SchemaGraph, filters: Iterable[ConstraintFilter]) -> list[ConstraintFilter]:
    """Copy filters on primary keys to every same-named key reachable over InterKey edges."""
    out = list(dict.fromkeys(filters))
    for f in list(out):
        if not f.attribute.is_primary_key:
            continue
        seen = {f.attribute}
        stack = [f.attribute]
        while stack:
            node = stack.pop()
            for e in outgoing(graph, node):
                if e.kind is EdgeKind.INTER_KEY and e.dst.column == f.attribute.column and e.dst not in seen:
                    seen.add(e.dst)
                    stack.append(e.dst)
        for node in sorted(seen - {f.attribute}, key=lambda n: n.table):
            copy = ConstraintFilter(node, f.comparator, f.value)
            if copy not in out:
                out.append(copy)
    return out


# ---------------------------------------------------------------------------
# answer mode


@dataclass
class AnswerRecord:
    question: str
    decomposition: DecomposedQuery
    filters: list[ConstraintFilter]
    retrieved: list[AttributeNode]
    plan: JoinPlan
    facts: list[Fact]
    prompt: str
    text: str

    @property
    def chains(self) -> list[str]:
        return [line.split(": ", 1)[1] for line in format_reasoning_chain(self.plan).splitlines()]

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "decomposition": {
                "constraints": list(self.decomposition.constraints),
                "main_question": self.decomposition.main_question,
            },
            "filters": [
                {"attribute": format_node(f.attribute), "comparator": f.comparator, "value": f.value} for f in self.filters
            ],
            "retrieved": [format_node(a) for a in self.retrieved],
            "chains": self.chains,
            "plan": self.plan.to_dict(),
            "facts": [f.text for f in self.facts],
            "answer": self.text,
        }


def retrieve(engine: Engine, segment: str) -> list[AttributeNode]:
    scored = score_attributes(segment, engine.index, engine.gateway.embed, engine.config.retrieval.keyword_join)
    return select_candidates(scored, engine.config.retrieval)


def answer_question(question: str, engine: Engine, gateway: ModelGateway | None = None) -> AnswerRecord:
    if engine.config.mode != ANSWER_MODE or engine.corpus is None:
        raise ConfigError("answer_question needs an engine in answer mode")
    gateway = gateway or engine.gateway
    cfg = engine.config
    decomp = _staged("decompose", decompose_query, question, gateway, cfg.decompose)
    index = _staged("retrieve", lambda: engine.index)

    def map_all():
        mapped = [
            map_constraint_to_filter(c, index, gateway.embed, cfg.retrieval, engine.graph, gateway, engine.spec)
            for c in decomp.constraints
        ]
        return propagate_key_filters(engine.graph, mapped)

    filters = _staged("filter", map_all)
    retrieved = _staged("retrieve", retrieve, engine, decomp.main_question)
    candidates = list(dict.fromkeys([*retrieved, *(f.attribute for f in filters if not f.attribute.is_primary_key)]))
    plan = _staged(
        "plan", plan_for_attributes, engine.graph, candidates, cfg.expand_context, cfg.max_hops, cfg.max_paths
    )

    def run():
        view = apply_constraints(engine.corpus, filters)
        records = execute_join_plan(view, plan)
        if not records:
            raise NoFacts("no records satisfy the filters under the join plan", plan)
        facts = extract_facts(records, engine.templates, plan)
        if not facts:
            raise NoFacts("the join produced records but no renderable facts", plan)
        return facts

    facts = _staged("execute", run)
    bindings = {"question": question, "facts": "\n".join(f.text for f in facts)}
    prompt = _staged("answer", render_template, "answer", bindings)
    text = _staged("answer", gateway.ask, "answer", bindings, cfg.answer_temperature)
    return AnswerRecord(question, decomp, filters, retrieved, plan, facts, prompt, text)


# ---------------------------------------------------------------------------
# SQL mode


@dataclass
class SqlResult:
    question: str
    attributes: list[AttributeNode]
    paths: list[DependencyPath]
    text: str
    sql: str
    samples: list[str]

    @property
    def chains(self) -> list[str]:
        return [format_reasoning_chain(p) for p in self.paths]

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "attributes": [format_node(a) for a in self.attributes],
            "chains": self.chains,
            "sql": self.sql,
            "response": self.text,
        }


_SQL_FENCE = re.compile(r"```(?:sql)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def extract_sql(text: str) -> str:
    m = _SQL_FENCE.search(text)
    return (m.group(1) if m else text).strip()


def format_path_lines(paths: Sequence[DependencyPath]) -> str:
    return "\n\n".join(f"Path {i}: {format_reasoning_chain(p)}" for i, p in enumerate(paths, 1))


def generate_sql(question: str, engine: Engine, gateway: ModelGateway | None = None, samples: int | None = None) -> SqlResult:
    """Select attributes with the model, enumerate their dependency paths and ask for SQL.

    Paths are passed unpruned so that foreign-key hops stay visible to the
    model. With ``samples > 1`` the first reply containing a SELECT wins.
    """
    if engine.config.mode != SQL_MODE:
        raise ConfigError("generate_sql needs an engine in sql mode")
    gateway = gateway or engine.gateway
    k = samples or engine.config.samples
    reply = _staged(
        "retrieve", gateway.ask, "attribute_select", {"schema_rows": _schema_rows(engine.spec), "question": question}
    )
    picks = _staged("retrieve", parse_attribute_selection, reply, engine.graph)
    attrs = list(dict.fromkeys(node for _, node in picks))

    def enumerate_paths():
        paths: list[DependencyPath] = []
        for a in attrs:
            for p in find_dependency_paths(engine.graph, a, engine.config.max_hops, engine.config.max_paths):
                if p not in paths:
                    paths.append(p)
        if not paths:
            raise EmptyPaths(f"no dependency paths for question {question!r}")
        return paths

    paths = _staged("plan", enumerate_paths)
    bindings = {"paths": format_path_lines(paths), "question": question}
    temperature = 0.0 if k == 1 else engine.config.sample_temperature
    outputs = []
    for _ in range(k):
        text = _staged("sql", gateway.ask, "sql_generate", bindings, temperature)
        outputs.append(text)
        if "select" in extract_sql(text).lower():
            break
    chosen = next((t for t in outputs if "select" in extract_sql(t).lower()), outputs[0])
    return SqlResult(question, attrs, paths, chosen, extract_sql(chosen), outputs)


# ---------------------------------------------------------------------------
# evaluation

BUCKETS = ("1-hop", "2-hop", "≥3-hop")


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    gold_answer: str
    hops: int
    case_id: str | None = None

    def __post_init__(self):
        if not isinstance(self.hops, int) or isinstance(self.hops, bool) or self.hops < 1:
            raise ValueError(f"item {self.id}: hops must be an integer >= 1")
        if not self.question.strip():
            raise ValueError(f"item {self.id}: empty question")

    @property
    def bucket(self) -> str:
        return BUCKETS[min(self.hops, 3) - 1]


def load_dataset(path) -> list[QAItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                extra = set(doc) - {"id", "question", "gold_answer", "hops", "case_id"}
                if extra:
                    raise ValueError(f"unknown field {sorted(extra)[0]!r}")
                case = doc.get("case_id")
                items.append(QAItem(str(doc["id"]), doc["question"], str(doc["gold_answer"]), doc["hops"], None if case is None else str(case)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad dataset line: {exc}") from exc
    return items


def _normalize(text: str) -> str:
    return " ".join(re.findall(r"[0-9a-z]+", text.lower()))


def match_judge(question: str, gold: str, answer: str) -> bool:
    """Normalized gold answer appears in the normalized answer on word boundaries."""
    g, a = _normalize(gold), _normalize(answer)
    return bool(g) and f" {g} " in f" {a} "


def model_judge(gateway: ModelGateway) -> Callable[[str, str, str], bool]:
    def judge(question: str, gold: str, answer: str) -> bool:
        reply = gateway.ask("judge", {"question": question, "gold": gold, "answer": answer})
        words = _normalize(reply).split()
        return bool(words) and words[0] == "correct"

    return judge


@dataclass
class Verdict:
    id: str
    question: str
    gold_answer: str
    hops: int
    bucket: str
    answer: str | None
    correct: bool
    error: str | None = None
    facts: list[str] = field(default_factory=list)
    chains: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    verdicts: list[Verdict]

    @property
    def buckets(self) -> dict[str, dict]:
        out = {}
        for name in BUCKETS:
            vs = [v for v in self.verdicts if v.bucket == name]
            if vs:
                right = sum(v.correct for v in vs)
                out[name] = {"count": len(vs), "correct": right, "accuracy": right / len(vs)}
        return out

    @property
    def accuracy(self) -> float:
        return sum(v.correct for v in self.verdicts) / len(self.verdicts)

    def to_dict(self) -> dict:
        return {
            "total": len(self.verdicts),
            "accuracy": self.accuracy,
            "buckets": self.buckets,
            "items": [v.to_dict() for v in self.verdicts],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)


def evaluate(
    dataset: Sequence[QAItem],
    engine: Engine,
    gateway: ModelGateway | None = None,
    judge: Callable[[str, str, str], bool] | str | None = None,
    workers: int | None = None,
) -> EvalReport:
    """Answer every item and bucket verdicts by hop count; item failures are recorded, not raised."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    gateway = gateway or engine.gateway
    judge = judge or engine.config.judge
    if judge == "match":
        judge = match_judge
    elif judge == "model":
        judge = model_judge(gateway)
    _ = engine.index  # build once before fanning out

    def run(item: QAItem) -> Verdict:
        base = dict(id=item.id, question=item.question, gold_answer=item.gold_answer, hops=item.hops, bucket=item.bucket)
        try:
            record = answer_question(item.question, engine, gateway)
            ok = judge(item.question, item.gold_answer, record.text)
            return Verdict(**base, answer=record.text, correct=bool(ok), facts=[f.text for f in record.facts], chains=record.chains)
        except SchemaQAError as exc:
            return Verdict(**base, answer=None, correct=False, error=f"{type(exc).__name__}: {exc}")

    workers = workers or gateway.max_in_flight
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        verdicts = list(pool.map(run, dataset))
    return EvalReport(verdicts)
