import struct

import numpy as np
import pytest

from notematrix import kernels

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    return kernels.available_backends()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smf_bytes(tracks, division=480, fmt=None):
    """Assemble an SMF from raw track bodies (bytes)."""
    if fmt is None:
        fmt = 0 if len(tracks) == 1 else 1
    out = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)
    for body in tracks:
        out += b"MTrk" + struct.pack(">I", len(body)) + body
    return out


EOT = b"\x00\xff\x2f\x00"
