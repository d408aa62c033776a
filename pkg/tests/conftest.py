import logging

import pytest

from obfkit.taxonomy import load_taxonomy, taxonomy_from_roots


@pytest.fixture(scope="session")
def tax():
    return load_taxonomy()


@pytest.fixture(scope="session")
def tiny_tax():
    return taxonomy_from_roots(["A", "B", "C", "D"], "tiny")


@pytest.fixture(autouse=True)
def _quiet_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="obfkit")


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def record_verdict(name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
