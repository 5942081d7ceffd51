"""Generate SQL for a text-to-SQL question from dependency paths over the Olympics schema.

Run with ``python3 demos/sql_mode.py``. No table data is read in this mode.
"""
from __future__ import annotations

from schemaqa.cli import fixture_config_path
from schemaqa.config import load_config
from schemaqa.pipeline import build_engine, format_path_lines, generate_sql

QUESTION = "What was the name of the Olympic game that John Aalberg took part in when he was 31?"


def main() -> None:
    engine = build_engine(load_config(fixture_config_path("olympics")))
    result = generate_sql(QUESTION, engine)
    print("Selected attributes:", ", ".join(str(a) for a in result.attributes))
    print()
    print(format_path_lines(result.paths))
    print()
    print(result.sql)


if __name__ == "__main__":
    main()
