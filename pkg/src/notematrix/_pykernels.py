"""Pure Python/numpy implementations of the hot kernels.

These are the reference fallbacks for ``_ckernels``; both modules expose the
same three functions with identical semantics.
"""

import numpy as np

from .errors import MalformedVLQError, TruncationError


def _bit_reverse_indices(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_magnitudes(frames):
    """Radix-2 decimation-in-time FFT magnitudes of each row of ``frames``.

    ``frames`` is a (count, N) float64 array with N a power of two; returns a
    (count, N // 2 + 1) array of ``|X_k|``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    count, n = frames.shape
    x = frames[:, _bit_reverse_indices(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = x.reshape(count, n // size, size)
        even = blocks[:, :, :half]
        odd = blocks[:, :, half:] * tw
        x = np.concatenate((even + odd, even - odd), axis=2).reshape(count, n)
        size *= 2
    return np.abs(x[:, : n // 2 + 1])


def fill_mnpm(times, notes, onsets, offsets, out):
    """Set ``out[i, note] = 1`` for every frame time ``onset <= t_i < offset``.

    ``times`` must be ascending; ``out`` is modified in place.
    """
    for n, b, e in zip(notes, onsets, offsets):
        lo = np.searchsorted(times, b, side="left")
        hi = np.searchsorted(times, e, side="left")
        if hi > lo:
            out[lo:hi, n] = 1.0


def decode_vlq(buf, pos=0):
    """Decode a MIDI variable-length quantity at ``buf[pos]``.

    Returns ``(value, consumed)``.
    """
    value = 0
    end = len(buf)
    for i in range(4):
        if pos + i >= end:
            raise TruncationError("variable-length quantity runs past end of data")
        byte = buf[pos + i]
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, i + 1
    raise MalformedVLQError("variable-length quantity longer than 4 bytes")
