import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ltlprompt.lang import parse_model, parse_specs  # noqa: E402
from ltlprompt.planner import DATA_DIR  # noqa: E402

DATA = DATA_DIR
PLANS = DATA / "plans"
SPECS = DATA / "specs"


def read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def driving_env():
    return parse_model(read(SPECS / "driving_decls.smv")).variables


@pytest.fixture(scope="session")
def driving_specs(driving_env):
    return parse_specs(read(SPECS / "driving.ltl"), driving_env)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
