from pathlib import Path

import pytest

VECTORS = Path(__file__).resolve().parent.parent / "vectors"
SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def load_vectors(name: str) -> dict[str, bytes]:
    out = {}
    for line in (VECTORS / name).read_text().splitlines():
        if line and not line.startswith("#"):
            key, value = line.split()
            out[key] = bytes.fromhex(value)
    return out


@pytest.fixture(scope="session")
def nas_vectors():
    return load_vectors("nas_golden.txt")


@pytest.fixture(scope="session")
def security_vectors():
    return load_vectors("security.txt")


@pytest.fixture(scope="session")
def smoke_path():
    return SCENARIOS / "smoke.json"


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
