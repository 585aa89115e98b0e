import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthdet.assets import load_catalog  # noqa: E402
from synthdet.parts import write_demo_catalog  # noqa: E402


@pytest.fixture(scope="session")
def catalog_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("catalog")
    write_demo_catalog(root)
    return root


@pytest.fixture(scope="session")
def catalog(catalog_dir):
    return load_catalog(catalog_dir)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
