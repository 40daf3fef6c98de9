from __future__ import annotations

import os
import threading
import uuid

import pytest

from mpklink.protection import EmulatedDomain, hardware_domain, hardware_supported

HW_OK, HW_REASON = hardware_supported()
requires_pkeys = pytest.mark.skipif(not HW_OK, reason=f"no pkey support on this host: {HW_REASON}")

BACKENDS = [
    pytest.param("emulated", id="emulated"),
    pytest.param("hardware", id="hardware", marks=requires_pkeys),
]


@pytest.fixture(params=BACKENDS)
def domain(request):
    """A protection domain per backend; fails the test if it leaks keys."""
    d = EmulatedDomain() if request.param == "emulated" else hardware_domain()
    before = d.live_keys
    yield d
    assert d.live_keys == before, "test leaked protection keys"


@pytest.fixture
def base(tmp_path):
    return str(tmp_path / f"ch-{uuid.uuid4().hex[:8]}")


@pytest.fixture
def shm_name():
    name = f"mpklink-test-{os.getpid()}-{uuid.uuid4().hex[:8]}"
    yield name
    for suffix in (".c2s.shm", ".s2c.shm"):
        try:
            os.unlink(f"/dev/shm/{name}{suffix}")
        except FileNotFoundError:
            pass


class Worker(threading.Thread):
    """Thread that keeps its target's return value or exception."""

    def __init__(self, fn, *args):
        super().__init__(daemon=True)
        self.fn, self.args = fn, args
        self.result = self.error = None

    def run(self):
        try:
            self.result = self.fn(*self.args)
        except BaseException as exc:  # re-raised by value()
            self.error = exc

    def value(self, timeout=30.0):
        self.join(timeout)
        assert not self.is_alive(), "worker thread hung"
        if self.error is not None:
            raise self.error
        return self.result


def in_thread(fn, *args, timeout=30.0):
    w = Worker(fn, *args)
    w.start()
    return w.value(timeout)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", help="run the 10^8-word corpus test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow: pass --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
