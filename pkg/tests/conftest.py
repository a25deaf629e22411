import hashlib

import pytest

from apsd.nand import Geometry
from apsd.simulator import Simulator

SMALL = Geometry(blocks=16, pages_per_block=8, page_data_bytes=512, page_spare_bytes=16)


def page_bytes(tag, size=2048) -> bytes:
    """Deterministic filler that is never a single repeated byte."""
    out = b""
    i = 0
    while len(out) < size:
        out += hashlib.sha256(f"{tag}/{i}".encode()).digest()
        i += 1
    return out[:size]


@pytest.fixture
def small_geometry():
    return SMALL


@pytest.fixture
def small_sim():
    return Simulator(SMALL, seed=11, op_ratio=0.25)


@pytest.fixture
def sim():
    return Simulator(seed=3)


@pytest.fixture(scope="session")
def standard_run():
    from apsd.workload import run_standard

    return run_standard(seed=0)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
