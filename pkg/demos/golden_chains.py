"""Walk one question through every stage of the answer pipeline on the bundled fixture.

Run with ``python3 demos/golden_chains.py``. Everything is offline: the
embedder and chat model are the deterministic mocks named in the fixture config.
"""
from __future__ import annotations

from schemaqa.cli import fixture_config_path
from schemaqa.config import load_config
from schemaqa.path_engine import format_reasoning_chain
from schemaqa.pipeline import answer_question, build_engine

QUESTION = "For the case 27187, for the vehicle model Grand Prix, what is the speed of the vehicle?"


def main() -> None:
    engine = build_engine(load_config(fixture_config_path("ciss")))
    record = answer_question(QUESTION, engine)

    print("Question:", QUESTION)
    print("\nConditions:")
    for c in record.decomposition.constraints:
        print("  -", c)
    print("Main question:", record.decomposition.main_question)
    print("\nFilters:")
    for f in record.filters:
        print("  ", f)
    print("\nRetrieved:", ", ".join(str(a) for a in record.retrieved))
    print("\nGraph searching result:")
    print(format_reasoning_chain(record.plan))
    print("\nFacts:")
    for fact in record.facts:
        print("  ", fact.text)
    print("\nAnswer:", record.text)


if __name__ == "__main__":
    main()
