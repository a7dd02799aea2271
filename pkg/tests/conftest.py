import sys
from pathlib import Path

import pytest

# make the oracle helpers importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def small_clean(tmp_path_factory):
    from rivetkey.phantom import generate_dataset
    out = tmp_path_factory.mktemp("clean16")
    return generate_dataset(16, "clean", 5, out)


@pytest.fixture(scope="session")
def small_noisy(tmp_path_factory):
    from rivetkey.phantom import generate_dataset
    out = tmp_path_factory.mktemp("noisy8")
    return generate_dataset(8, "noisy", 6, out)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
