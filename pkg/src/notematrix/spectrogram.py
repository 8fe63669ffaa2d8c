"""Magnitude spectrograms and frame-context tensors."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .audio_io import DEFAULT_SAMPLE_RATE
from .errors import InvalidContextError, InvalidLengthError, ShapeError

WINDOWS = ("hann", "rectangular")


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpectroConfig:
    frame_length: int = 2048
    hop: int = 512
    window: str = "hann"
    log_scale: bool = True
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if not _is_pow2(self.frame_length):
            raise InvalidLengthError(
                f"frame_length must be a power of two >= 2, got {self.frame_length}"
            )
        if not 0 < self.hop <= self.frame_length:
            raise InvalidLengthError(f"hop must be in (0, frame_length], got {self.hop}")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def bins(self):
        return self.frame_length // 2 + 1

    def num_frames(self, signal_length):
        if signal_length < self.frame_length:
            return 0
        return (signal_length - self.frame_length) // self.hop + 1

    def frame_times(self, num_frames):
        """Center time in seconds of each frame."""
        i = np.arange(num_frames, dtype=np.float64)
        return (i * self.hop + self.frame_length / 2) / self.sample_rate

    def bin_of(self, freq):
        return int(round(freq * self.frame_length / self.sample_rate))


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Frames x bins magnitudes, or frames x bins x channels when stacked."""

    data: np.ndarray
    config: SpectroConfig = field(default_factory=SpectroConfig)

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def num_channels(self):
        return self.data.shape[2] if self.data.ndim == 3 else None


@dataclass(frozen=True, eq=False)
class ContextTensor:
    """Frames x context x bins (x channels) stack of neighbouring frames."""

    data: np.ndarray
    context: int
    config: SpectroConfig = field(default_factory=SpectroConfig)

    @property
    def num_frames(self):
        return self.data.shape[0]


def hann_window(n):
    """Symmetric Hann window ``0.5 * (1 - cos(2 pi i / (n - 1)))``."""
    if n < 2:
        raise InvalidLengthError("window length must be >= 2")
    i = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * i / (n - 1)))


def dft_magnitudes(frame):
    """``|X_k|`` for k = 0..N/2 of a power-of-two length real frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1 or not _is_pow2(frame.shape[0]):
        raise InvalidLengthError(f"frame length must be a power of two, got {frame.shape}")
    return kernels.fft_magnitudes(frame.reshape(1, -1))[0]


def frame_signal(x, cfg):
    """(frames, frame_length) view of ``x`` following the hop grid."""
    count = cfg.num_frames(len(x))
    if count == 0:
        return np.zeros((0, cfg.frame_length))
    full = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_length)
    return full[:: cfg.hop][:count]


def compute_spectrogram(clip, cfg=None):
    """Windowed radix-2 FFT magnitude spectrogram of a mono clip.

    Frame ``i`` covers samples ``[i * hop, i * hop + frame_length)``. Signals
    shorter than one frame give an empty (0, bins) spectrogram.
    """
    cfg = cfg or SpectroConfig(sample_rate=clip.sample_rate)
    if clip.num_channels != 1:
        raise ShapeError("compute_spectrogram needs a mono clip; use mixdown or stack_channels")
    frames = frame_signal(clip.samples, cfg)
    if cfg.window == "hann":
        frames = frames * hann_window(cfg.frame_length)
    if frames.shape[0]:
        mags = kernels.fft_magnitudes(np.ascontiguousarray(frames))
    else:
        mags = np.zeros((0, cfg.bins))
    if cfg.log_scale:
        mags = np.log1p(mags)
    return Spectrogram(mags, cfg)


def multichannel_spectrogram(clip, cfg=None):
    """Per-channel spectrograms of ``clip`` stacked along a trailing axis."""
    from .audio_io import AudioClip

    return stack_channels(
        [compute_spectrogram(AudioClip(ch[None, :], clip.sample_rate), cfg) for ch in clip.channels]
    )


def stack_channels(specs):
    """Stack per-channel spectrograms into one frames x bins x channels array."""
    if not specs:
        raise ShapeError("no spectrograms to stack")
    first = specs[0]
    for s in specs[1:]:
        if s.data.shape != first.data.shape or s.config != first.config:
            raise ShapeError("per-channel spectrograms differ in shape or config")
    return Spectrogram(np.stack([s.data for s in specs], axis=-1), first.config)


def context_windows(spec, context):
    """Window each frame with its neighbours, replicating edge frames.

    Entry ``i`` holds frames ``i - h .. i + h`` with ``h = (context - 1) // 2``.
    """
    if context < 1 or context % 2 == 0:
        raise InvalidContextError(f"context must be odd and >= 1, got {context}")
    data = spec.data if isinstance(spec, Spectrogram) else np.asarray(spec)
    config = spec.config if isinstance(spec, Spectrogram) else SpectroConfig()
    m = data.shape[0]
    h = (context - 1) // 2
    idx = np.clip(np.arange(m)[:, None] + np.arange(-h, h + 1)[None, :], 0, max(m - 1, 0))
    if m == 0:
        out = np.zeros((0, context) + data.shape[1:])
    else:
        out = data[idx]
    return ContextTensor(out, context, config)


def to_csv(spec, path):
    """One row per frame, bins as columns, 9 significant digits."""
    data = spec.data if spec.data.ndim == 2 else spec.data.reshape(spec.data.shape[0], -1)
    with open(path, "w") as fh:
        for row in data:
            fh.write(",".join(f"{v:.9g}" for v in row))
            fh.write("\n")


def write_pgm(matrix, path):
    """8-bit binary PGM of ``matrix`` (rows as image rows), min-max scaled."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        m = m.reshape(m.shape[0], -1)
    lo = m.min() if m.size else 0.0
    hi = m.max() if m.size else 0.0
    scaled = np.zeros_like(m) if hi <= lo else (m - lo) / (hi - lo)
    write_gray_pgm(np.rint(scaled * 255.0).astype(np.uint8), path)


def write_gray_pgm(pixels, path):
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(raw) and not raw[end : end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    cols, rows = int(tokens[1]), int(tokens[2])
    # exactly one whitespace byte separates the header from the pixels
    pixels = raw[pos + 1 :]
    return np.frombuffer(pixels, dtype=np.uint8, count=rows * cols).reshape(rows, cols)
