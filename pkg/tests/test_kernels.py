import os
import subprocess
import sys

import numpy as np
import pytest

from notematrix import _pykernels, kernels
from notematrix.errors import MalformedVLQError, TruncationError

from oracles import naive_dft_magnitudes


@pytest.mark.parametrize("n", [2, 4, 8, 64, 512])
def test_fft_matches_naive_dft(backend, rng, n):
    frames = rng.uniform(-1, 1, size=(3, n))
    got = backend.fft_magnitudes(frames)
    want = np.array([naive_dft_magnitudes(f) for f in frames])
    assert got.shape == (3, n // 2 + 1)
    assert np.max(np.abs(got - want)) < 1e-9


def test_fft_empty_batch(backend):
    assert backend.fft_magnitudes(np.zeros((0, 16))).shape == (0, 9)


def test_backends_agree_on_all_kernels(rng):
    backends = kernels.available_backends()
    if len(backends) < 2:
        pytest.skip("compiled extension not built")
    py, cy = backends["python"], backends["cython"]
    frames = rng.normal(size=(7, 1024))
    np.testing.assert_allclose(py.fft_magnitudes(frames), cy.fft_magnitudes(frames), atol=1e-10)

    times = np.sort(rng.uniform(0, 10, 300))
    notes = rng.integers(0, 128, 40)
    on = rng.uniform(0, 10, 40)
    off = on + rng.uniform(0.01, 3, 40)
    a = np.zeros((300, 128), np.float32)
    b = np.zeros((300, 128), np.float32)
    py.fill_mnpm(times, notes, on, off, a)
    cy.fill_mnpm(times, notes, on, off, b)
    assert np.array_equal(a, b)

    for buf in (b"\x00", b"\x7f", b"\x81\x00", b"\xff\xff\xff\x7f", b"\x81\x80\x00"):
        assert py.decode_vlq(buf) == cy.decode_vlq(buf)


def test_decode_vlq_errors(backend):
    with pytest.raises(TruncationError):
        backend.decode_vlq(b"")
    with pytest.raises(TruncationError):
        backend.decode_vlq(b"\x81")
    with pytest.raises(MalformedVLQError):
        backend.decode_vlq(b"\x81\x81\x81\x81\x00")


def test_decode_vlq_offset(backend):
    assert backend.decode_vlq(b"\x00\x00\x81\x00", 2) == (128, 2)


def test_pure_backend_forced_by_env():
    env = dict(os.environ, NOTEMATRIX_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "import notematrix.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def test_python_backend_always_available():
    assert kernels.available_backends()["python"] is _pykernels
