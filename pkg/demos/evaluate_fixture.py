"""Score the ten-item fixture dataset and print hop-bucketed accuracy.

Run with ``python3 demos/evaluate_fixture.py [report.json]``.
"""
from __future__ import annotations

import sys
from pathlib import Path

from schemaqa.cli import fixture_config_path
from schemaqa.config import load_config
from schemaqa.pipeline import build_engine, evaluate, load_dataset


def main(argv: list[str]) -> None:
    config_path = fixture_config_path("ciss")
    engine = build_engine(load_config(config_path))
    report = evaluate(load_dataset(config_path.parent / "dataset.jsonl"), engine)
    for name, bucket in report.buckets.items():
        print(f"{name:7} {bucket['correct']}/{bucket['count']}  {bucket['accuracy']:.2f}")
    print(f"overall {report.accuracy:.2f}")
    for v in report.verdicts:
        print(f"  {v.id} [{v.bucket}] {'ok' if v.correct else 'miss'}: {v.answer}")
    if argv:
        Path(argv[0]).write_text(report.to_json(), encoding="utf-8")
        print("report written to", argv[0])


if __name__ == "__main__":
    main(sys.argv[1:])
