from __future__ import annotations

import pytest

from helpers import CISS, OLYMPICS
from schemaqa.config import load_config
from schemaqa.pipeline import build_engine
from schemaqa.schema_graph import build_graph, read_schema_spec

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def ciss_spec():
    return read_schema_spec(CISS / "schema.json")


@pytest.fixture(scope="session")
def ciss_graph(ciss_spec):
    return build_graph(ciss_spec)


@pytest.fixture(scope="session")
def ciss_config():
    return load_config(CISS / "config.json")


@pytest.fixture(scope="session")
def ciss_engine(ciss_config):
    return build_engine(ciss_config)


@pytest.fixture(scope="session")
def olympics_engine():
    return build_engine(load_config(OLYMPICS / "config.json"))


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.split("::", 1)[1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[name] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if outcome == 'PASSED' else 'FAIL'}  {name}")
