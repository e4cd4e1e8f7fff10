import json
import sys
from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

VECTORS = json.loads((Path(__file__).parent / "vectors" / "vectors.json").read_text())


@pytest.fixture
def vectors():
    return VECTORS


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if module and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
