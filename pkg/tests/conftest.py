import os
import random
import sys
from importlib import resources

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from epmc import generators  # noqa: E402
from epmc.model import build_states, parse_model  # noqa: E402
from epmc.properties import parse_property  # noqa: E402

RUNNING_EXAMPLE_PATH = str(resources.files("epmc") / "data" / "running_example.pm")


@pytest.fixture(scope="session")
def running_generated():
    return generators.generate(generators.GeneratorSpec("running-example"))


@pytest.fixture(scope="session")
def annotated_src():
    with open(RUNNING_EXAMPLE_PATH, encoding="utf-8") as fh:
        return parse_model(fh.read(), RUNNING_EXAMPLE_PATH)


@pytest.fixture(scope="session")
def annotated_mc(annotated_src):
    return build_states(annotated_src)


@pytest.fixture(scope="session")
def mono_src(running_generated):
    return parse_model(running_generated.monolithic)


@pytest.fixture(scope="session")
def mono_mc(mono_src):
    """The 15-state monolithic running-example chain (states s0..s14)."""
    return build_states(mono_src)


@pytest.fixture(scope="session")
def running_queries(running_generated):
    return [parse_property(q) for q in running_generated.properties]


@pytest.fixture
def rng():
    return random.Random(1234)


VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines, which are otherwise captured."""
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
