import numpy as np
import pytest

from blueprint_reader.synth import demo_spec_path, generate_fixture, load_spec


@pytest.fixture(scope="session")
def demo_spec():
    return load_spec(demo_spec_path())


@pytest.fixture(scope="session")
def demo_fixture(demo_spec):
    return generate_fixture(demo_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
