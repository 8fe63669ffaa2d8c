"""16-bit PCM WAV reading/writing and channel mixdown."""

from dataclasses import dataclass
import struct

import numpy as np

from .errors import (
    EmptyInputError,
    FormatError,
    ShapeError,
    TruncationError,
    UnsupportedEncodingError,
)

DEFAULT_SAMPLE_RATE = 44100


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Floating-point audio, one row per channel.

    ``channels`` is a read-only (num_channels, length) float64 array.
    """

    channels: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        data = np.array(self.channels, dtype=np.float64, ndmin=2, copy=True)
        if data.ndim != 2:
            raise ShapeError("channels must be a 2-D (channels, samples) array")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if data.size and (np.max(np.abs(data)) > 1.0 or not np.all(np.isfinite(data))):
            raise ValueError("samples must lie in [-1, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "channels", data)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @classmethod
    def mono(cls, samples, sample_rate=DEFAULT_SAMPLE_RATE):
        return cls(np.asarray(samples, dtype=np.float64).reshape(1, -1), sample_rate)

    @property
    def num_channels(self):
        return self.channels.shape[0]

    @property
    def length(self):
        return self.channels.shape[1]

    @property
    def duration(self):
        return self.length / self.sample_rate

    @property
    def samples(self):
        """The single channel of a mono clip."""
        if self.num_channels != 1:
            raise ShapeError(f"expected mono clip, got {self.num_channels} channels")
        return self.channels[0]

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(
            self.channels, other.channels
        )

    __hash__ = None


def read_wav(path):
    """Read a 16-bit PCM RIFF/WAVE file into an :class:`AudioClip`.

    Samples are scaled by 1/32768. Chunks other than ``fmt `` and ``data`` are
    skipped.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    return decode_wav(raw)


def decode_wav(raw):
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise TruncationError("fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif cid == b"data":
            if len(body) < size:
                raise TruncationError(
                    f"data chunk declares {size} bytes, only {len(body)} present"
                )
            data = body
            if fmt is not None:
                break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise FormatError("missing fmt chunk")
    if data is None:
        raise TruncationError("missing data chunk")
    audio_format, nch, rate, _, block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncodingError(f"audio format code {audio_format} is not PCM")
    if bits != 16:
        raise UnsupportedEncodingError(f"{bits}-bit samples are not supported")
    if nch < 1 or rate <= 0:
        raise FormatError("fmt chunk declares no channels or a zero sample rate")
    if len(data) % (2 * nch):
        raise TruncationError("data chunk ends mid-frame")
    ints = np.frombuffer(data, dtype="<i2").reshape(-1, nch).T
    return AudioClip(ints.astype(np.float64) / 32768.0, rate)


def encode_wav(clip):
    # scale matches the 1/32768 read scale; +1.0 saturates at 32767
    ints = np.clip(np.rint(np.clip(clip.channels, -1.0, 1.0) * 32768.0), -32768, 32767).astype("<i2")
    payload = ints.T.tobytes()
    nch = clip.num_channels
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, nch, clip.sample_rate, clip.sample_rate * nch * 2, nch * 2, 16
    )
    return header + fmt + b"data" + struct.pack("<I", len(payload)) + payload


def write_wav(clip, path):
    """Write ``clip`` as 16-bit PCM.

    Samples are clamped to [-1, 1], scaled by 32768, rounded and saturated to
    the int16 range, so 1.0 is stored as 32767.
    """
    with open(path, "wb") as fh:
        fh.write(encode_wav(clip))


def mixdown(clip):
    """Average all channels into a mono clip."""
    if clip.num_channels == 0:
        raise EmptyInputError("clip has no channels")
    if clip.num_channels == 1:
        return clip
    return AudioClip(clip.channels.mean(axis=0, keepdims=True), clip.sample_rate)
