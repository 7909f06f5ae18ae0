import socket
import sys

import numpy as np
import pytest

from illusion_agent.registry import Raster, Registry


@pytest.fixture
def white10():
    return Registry(Raster.solid(10, 10, (255, 255, 255)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_raster(rng, max_side=64, min_side=1):
    w = int(rng.integers(min_side, max_side + 1))
    h = int(rng.integers(min_side, max_side + 1))
    return Raster(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


class NetworkGuard:
    def __init__(self):
        self.attempts = []


@pytest.fixture
def no_network(monkeypatch):
    """Fail any socket connection attempt and record it."""
    guard = NetworkGuard()

    def refuse(self, address, *a, **k):
        guard.attempts.append(address)
        raise OSError(f"network access attempted: {address!r}")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    monkeypatch.setattr(socket, "create_connection", lambda address, *a, **k: refuse(None, address))
    return guard


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.TITLES):
        if n not in mod.RESULTS:
            terminalreporter.write_line(f"criterion {n} NOT RUN  {mod.TITLES[n]}")
            continue
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}  {mod.TITLES[n]} -- {detail}")
