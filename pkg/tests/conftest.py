import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import WOODPECKER, WOODPECKER_RULE  # noqa: E402
from rulehead.experiments import TOY_SCHEMA  # noqa: E402
from rulehead.rule_dsl import parse_rules  # noqa: E402
from rulehead.schema import ConceptSchema  # noqa: E402

ACCEPTANCE = {}


@pytest.fixture
def wood():
    return ConceptSchema.from_dict(WOODPECKER)


@pytest.fixture
def wood_rule(wood):
    return parse_rules(WOODPECKER_RULE, wood)


@pytest.fixture
def toy():
    return TOY_SCHEMA


@pytest.fixture
def record():
    def _record(criterion, ok, detail=""):
        ACCEPTANCE[criterion] = (bool(ok), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {criterion}  {detail}")
