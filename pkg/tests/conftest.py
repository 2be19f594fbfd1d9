import csv
from functools import lru_cache
from pathlib import Path

import pytest

from fujitalab import KernelEvaluator, ProblemParams, make_tent_datum

DATA = Path(__file__).parent / "data"


@lru_cache(maxsize=None)
def evaluator(p: float) -> KernelEvaluator:
    return KernelEvaluator(make_tent_datum(), ProblemParams(p))


@pytest.fixture(scope="session")
def ev():
    """Factory for shared tent-datum evaluators (memoised per p)."""
    return evaluator


@pytest.fixture(scope="session")
def tent():
    return make_tent_datum()


@pytest.fixture(scope="session")
def golden():
    """Rows of the oracle table keyed by (quantity, x, t)."""
    with open(DATA / "golden_values.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for r in rows:
        x = float(r["x"]) if r["x"] else None
        t = float(r["t"]) if r["t"] else None
        out[(r["quantity"], x, t)] = (float(r["value"]), float(r["oracle_tolerance"]))
    return out


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
