# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contract as ``notematrix._pykernels``."""

import numpy as np
from libc.math cimport sqrt

from .errors import MalformedVLQError, TruncationError


cdef void _fft_row(double* re, double* im, const double* wr, const double* wi,
                   const Py_ssize_t* rev, const double* src, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j, k, size, half, step, start
    cdef double tr, ti, ur, ui, cr, ci
    for i in range(n):
        re[i] = src[rev[i]]
        im[i] = 0.0
    size = 2
    while size <= n:
        half = size >> 1
        step = n // size
        start = 0
        while start < n:
            for k in range(half):
                i = start + k
                j = i + half
                cr = wr[k * step]
                ci = wi[k * step]
                tr = re[j] * cr - im[j] * ci
                ti = re[j] * ci + im[j] * cr
                ur = re[i]
                ui = im[i]
                re[i] = ur + tr
                im[i] = ui + ti
                re[j] = ur - tr
                im[j] = ui - ti
            start += size
        size <<= 1


def fft_magnitudes(frames):
    x_np = np.ascontiguousarray(frames, dtype=np.float64)
    cdef const double[:, ::1] x = x_np
    cdef Py_ssize_t count = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t nb = n // 2 + 1
    cdef Py_ssize_t r, k
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev_np = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev_np |= ((idx >> b) & 1) << (bits - 1 - b)
    ang = -2.0 * np.pi * np.arange(max(n // 2, 1)) / n
    cdef double[::1] wr = np.ascontiguousarray(np.cos(ang))
    cdef double[::1] wi = np.ascontiguousarray(np.sin(ang))
    cdef Py_ssize_t[::1] rev = rev_np
    cdef double[::1] re = np.empty(n)
    cdef double[::1] im = np.empty(n)
    out_np = np.empty((count, nb))
    cdef double[:, ::1] out = out_np
    if count == 0:
        return out_np
    with nogil:
        for r in range(count):
            _fft_row(&re[0], &im[0], &wr[0], &wi[0], &rev[0], &x[r, 0], n)
            for k in range(nb):
                out[r, k] = sqrt(re[k] * re[k] + im[k] * im[k])
    return out_np


cdef Py_ssize_t _first_not_less(const double* t, Py_ssize_t m, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = m, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if t[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def fill_mnpm(times, notes, onsets, offsets, float[:, :] out):
    cdef const double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef const long long[::1] nn = np.ascontiguousarray(notes, dtype=np.int64)
    cdef const double[::1] bb = np.ascontiguousarray(onsets, dtype=np.float64)
    cdef const double[::1] ee = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef Py_ssize_t m = t.shape[0]
    cdef Py_ssize_t k = nn.shape[0]
    cdef Py_ssize_t q, i, lo, hi, col
    if m == 0 or k == 0:
        return
    with nogil:
        for q in range(k):
            lo = _first_not_less(&t[0], m, bb[q])
            hi = _first_not_less(&t[0], m, ee[q])
            col = nn[q]
            for i in range(lo, hi):
                out[i, col] = 1.0


def decode_vlq(const unsigned char[:] buf, Py_ssize_t pos=0):
    cdef Py_ssize_t i, end = buf.shape[0]
    cdef unsigned long value = 0
    cdef unsigned char byte
    for i in range(4):
        if pos + i >= end:
            raise TruncationError("variable-length quantity runs past end of data")
        byte = buf[pos + i]
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, i + 1
    raise MalformedVLQError("variable-length quantity longer than 4 bytes")
