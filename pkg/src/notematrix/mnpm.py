"""Musical note probability matrices: construction, postprocessing, file I/O.

Rows are spectrogram frames, columns the 128 MIDI notes. A frame counts as
covered by an interval when its center time ``t`` satisfies
``onset <= t < offset``.
"""

from dataclasses import dataclass, field
import struct

import numpy as np

from . import kernels
from .errors import FormatError, ShapeError
from .midi import NoteIntervalSet
from .spectrogram import SpectroConfig, write_gray_pgm

NUM_NOTES = 128
MAGIC = b"MNPM0001"
_CFG_MAGIC = b"CFG0"
_WINDOW_CODES = {"hann": 0, "rectangular": 1}


@dataclass(frozen=True, eq=False)
class Mnpm:
    data: np.ndarray
    frame_times: np.ndarray
    config: SpectroConfig | None = field(default=None)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        times = np.ascontiguousarray(self.frame_times, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != NUM_NOTES:
            raise ShapeError(f"MNPM must be rows x {NUM_NOTES}, got {data.shape}")
        if times.shape != (data.shape[0],):
            raise ShapeError("frame_times length must equal row count")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "frame_times", times)

    @property
    def num_frames(self):
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Mnpm):
            return NotImplemented
        return (
            np.array_equal(self.data, other.data)
            and np.array_equal(self.frame_times, other.frame_times)
            and self.config == other.config
        )

    __hash__ = None


def build_mnpm(intervals, num_frames, cfg):
    """Binary note matrix on the frame-center grid of ``cfg``."""
    times = cfg.frame_times(num_frames)
    out = np.zeros((num_frames, NUM_NOTES), dtype=np.float32)
    notes, onsets, offsets = intervals.arrays()
    if num_frames and len(notes):
        kernels.fill_mnpm(times, notes, onsets, offsets, out)
    return Mnpm(out, times, cfg)


def postprocess(probs, threshold=0.5, min_frames=2, frame_times=None, frame_duration=None):
    """Turn runs of frames at or above ``threshold`` into note intervals.

    A run of frames ``i..j`` in a column becomes the interval
    ``[t_i, t_{j+1})``; the time after the last frame extrapolates the grid.
    Runs shorter than ``min_frames`` are dropped.
    """
    if isinstance(probs, Mnpm):
        frame_times = probs.frame_times if frame_times is None else frame_times
        probs = probs.data
    probs = np.asarray(probs)
    m = probs.shape[0]
    if frame_times is None:
        frame_times = np.arange(m, dtype=np.float64)
    frame_times = np.asarray(frame_times, dtype=np.float64)
    if frame_duration is None:
        frame_duration = frame_times[1] - frame_times[0] if m > 1 else 1.0
    edges = np.append(frame_times, frame_times[-1] + frame_duration if m else 0.0)

    active = probs >= threshold
    padded = np.zeros((m + 2, probs.shape[1]), dtype=np.int8)
    padded[1:-1] = active
    diff = np.diff(padded, axis=0)
    intervals = []
    for note in np.flatnonzero(active.any(axis=0)):
        starts = np.flatnonzero(diff[:, note] == 1)
        stops = np.flatnonzero(diff[:, note] == -1)
        for s, e in zip(starts, stops):
            if e - s >= min_frames:
                intervals.append((int(note), float(edges[s]), float(edges[e])))
    return NoteIntervalSet(tuple(intervals))


def _pack_config(cfg):
    if cfg is None:
        return b""
    return _CFG_MAGIC + struct.pack(
        "<IIIBB",
        cfg.sample_rate,
        cfg.frame_length,
        cfg.hop,
        _WINDOW_CODES[cfg.window],
        int(cfg.log_scale),
    )


_CFG_SIZE = 4 + struct.calcsize("<IIIBB")


def encode_mnpm(m):
    rows, cols = m.data.shape
    return (
        MAGIC
        + struct.pack("<II", rows, cols)
        + m.frame_times.astype("<f8").tobytes()
        + m.data.astype("<f4").tobytes()
        + _pack_config(m.config)
    )


def decode_mnpm(raw):
    if raw[:8] != MAGIC:
        raise FormatError("bad MNPM magic or version")
    if len(raw) < 16:
        raise FormatError("MNPM header truncated")
    rows, cols = struct.unpack_from("<II", raw, 8)
    if cols != NUM_NOTES:
        raise FormatError(f"MNPM column count {cols} != {NUM_NOTES}")
    body = 16 + 8 * rows + 4 * rows * cols
    if len(raw) not in (body, body + _CFG_SIZE):
        raise FormatError(f"MNPM file size {len(raw)} does not match a {rows}x{cols} matrix")
    times = np.frombuffer(raw, "<f8", rows, 16).astype(np.float64)
    data = np.frombuffer(raw, "<f4", rows * cols, 16 + 8 * rows).reshape(rows, cols)
    cfg = None
    if len(raw) > body:
        if raw[body : body + 4] != _CFG_MAGIC:
            raise FormatError("bad MNPM config trailer")
        rate, flen, hop, win, logs = struct.unpack_from("<IIIBB", raw, body + 4)
        window = {v: k for k, v in _WINDOW_CODES.items()}.get(win)
        if window is None:
            raise FormatError(f"unknown window code {win}")
        cfg = SpectroConfig(flen, hop, window, bool(logs), rate)
    return Mnpm(data.astype(np.float32), times, cfg)


def save_mnpm(m, path):
    with open(path, "wb") as fh:
        fh.write(encode_mnpm(m))


def load_mnpm(path):
    with open(path, "rb") as fh:
        return decode_mnpm(fh.read())


def save_mnpm_csv(m, path):
    """Frame time followed by the 128 note values on each row."""
    with open(path, "w") as fh:
        fh.write("frame_time," + ",".join(f"n{j}" for j in range(NUM_NOTES)) + "\n")
        for t, row in zip(m.frame_times, m.data):
            fh.write(f"{float(t)!r}," + ",".join(f"{v:.9g}" for v in row) + "\n")


def render_mnpm_image(m, path):
    """PGM with one row per frame; probability 0 is white and 1 is black."""
    data = m.data if isinstance(m, Mnpm) else np.asarray(m)
    pixels = np.rint(255.0 * (1.0 - np.clip(data, 0.0, 1.0))).astype(np.uint8)
    write_gray_pgm(pixels, path)
