"""Lossless and lossy augmentation of labelled spectrogram samples.

The lossless part is the dihedral group of a 2-D array (four rotations and
four reflections), time reversal and random time crops. Waveform noise is the
lossy part.

Transform indices::

    0 identity      4 flip rows (time reverse)
    1 rot90         5 flip columns (frequency flip)
    2 rot180        6 transpose
    3 rot270        7 anti-transpose
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .audio_io import AudioClip
from .errors import ConfigError, EmptyInputError, InvalidOpError, UndefinedSNRError
from .mnpm import Mnpm
from .spectrogram import compute_spectrogram, context_windows, multichannel_spectrogram

DIHEDRAL_NAMES = (
    "identity",
    "rot90",
    "rot180",
    "rot270",
    "flip_rows",
    "flip_cols",
    "transpose",
    "anti_transpose",
)
INVERSE = (0, 3, 2, 1, 4, 5, 6, 7)
AXIS_SWAPPING = frozenset({1, 3, 6, 7})
NOISE_KINDS = ("white", "pink")
OP_KINDS = ("identity", "dihedral", "time_reverse", "crop", "noise")
_CALIBRATION_STEPS = 20


def dihedral_transform(mat, index):
    """Apply transform ``index`` (0..7) to a 2-D array.

    rot90 maps ``in[i][j]`` to ``out[j][rows - 1 - i]``.
    """
    if index not in range(8):
        raise InvalidOpError(f"dihedral index must be 0..7, got {index}")
    m = np.asarray(mat)
    if m.ndim != 2:
        raise InvalidOpError("dihedral_transform works on 2-D arrays")
    out = (
        m,
        m[::-1].T,
        m[::-1, ::-1],
        m.T[::-1],
        m[::-1],
        m[:, ::-1],
        m.T,
        m[::-1, ::-1].T,
    )[index]
    return np.ascontiguousarray(out)


def _composition_table():
    probe = np.arange(6).reshape(2, 3)
    images = [dihedral_transform(probe, k) for k in range(8)]
    table = [[0] * 8 for _ in range(8)]
    for a in range(8):
        for b in range(8):
            composed = dihedral_transform(dihedral_transform(probe, b), a)
            table[a][b] = next(
                k for k, img in enumerate(images) if img.shape == composed.shape and np.array_equal(img, composed)
            )
    return tuple(tuple(r) for r in table)


COMPOSE = _composition_table()
"""``COMPOSE[a][b]`` is the single index equal to applying ``b`` then ``a``."""


@dataclass(frozen=True)
class AugmentOp:
    """Declarative augmentation step.

    ``crop`` with ``start``/``end`` is a fixed crop; with ``count``/``min_frames``
    it is crop bootstrapping. ``noise`` uses ``noise_kind`` and ``snr_db``.
    ``seed`` (optional) gives the op its own generator.
    """

    kind: str
    index: int | None = None
    start: int | None = None
    end: int | None = None
    count: int | None = None
    min_frames: int | None = None
    noise_kind: str | None = None
    snr_db: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise InvalidOpError(f"unknown op kind {self.kind!r}")
        if self.kind == "dihedral" and self.index not in range(8):
            raise InvalidOpError(f"dihedral index must be 0..7, got {self.index}")
        if self.kind == "crop":
            if self.count is None:
                if self.start is None or self.end is None or not 0 <= self.start < self.end:
                    raise InvalidOpError("crop needs 0 <= start < end")
            elif self.count < 0 or (self.min_frames or 0) < 1:
                raise InvalidOpError("crop bootstrap needs count >= 0 and min_frames >= 1")
        if self.kind == "noise":
            if self.noise_kind not in NOISE_KINDS:
                raise InvalidOpError(f"noise kind must be white or pink, got {self.noise_kind!r}")
            if self.snr_db is None:
                raise InvalidOpError("noise needs snr_db")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def dihedral(cls, index):
        return cls("dihedral", index=index)

    @classmethod
    def time_reverse(cls):
        return cls("time_reverse")

    @classmethod
    def crop(cls, start, end):
        return cls("crop", start=start, end=end)

    @classmethod
    def crop_bootstrap(cls, count, min_frames, seed=None):
        return cls("crop", count=count, min_frames=min_frames, seed=seed)

    @classmethod
    def noise(cls, kind, snr_db, seed=None):
        return cls("noise", noise_kind=kind, snr_db=float(snr_db), seed=seed)

    def to_line(self):
        parts = [f"op={self.kind}"]
        for name in ("index", "start", "end", "count", "min_frames"):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={value}")
        if self.noise_kind is not None:
            parts.append(f"kind={self.noise_kind}")
        if self.snr_db is not None:
            parts.append(f"snr_db={self.snr_db:g}")
        if self.seed is not None:
            parts.append(f"seed={self.seed}")
        return " ".join(parts)

    __str__ = to_line


def parse_plan(text):
    """Parse an augmentation plan: one ``op=<kind> key=value ...`` per line."""
    ops = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = {}
        for tok in line.split():
            if "=" not in tok:
                raise ConfigError(f"plan line {lineno}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            fields[k] = v
        kind = fields.pop("op", None)
        try:
            if kind == "identity":
                op = AugmentOp.identity()
            elif kind == "time_reverse":
                op = AugmentOp.time_reverse()
            elif kind == "dihedral":
                op = AugmentOp.dihedral(int(fields.pop("index")))
            elif kind == "crop" and "count" in fields:
                op = AugmentOp.crop_bootstrap(
                    int(fields.pop("count")),
                    int(fields.pop("min_frames", 1)),
                    _opt_int(fields.pop("seed", None)),
                )
            elif kind == "crop":
                op = AugmentOp.crop(int(fields.pop("start")), int(fields.pop("end")))
            elif kind == "noise":
                op = AugmentOp.noise(
                    fields.pop("kind"),
                    float(fields.pop("snr_db")),
                    _opt_int(fields.pop("seed", None)),
                )
            else:
                raise ConfigError(f"plan line {lineno}: unknown op {kind!r}")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"plan line {lineno}: {exc}") from exc
        if fields:
            raise ConfigError(f"plan line {lineno}: unknown keys {sorted(fields)}")
        ops.append(op)
    return ops


def _opt_int(v):
    return None if v is None else int(v)


def read_plan(path):
    with open(path) as fh:
        return parse_plan(fh.read())


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """A network input paired with its frame labels.

    ``input`` is frames x bins (``context`` is None) or frames x context x bins,
    optionally with a trailing channel axis. ``clip`` is the source audio,
    kept on original samples so waveform noise can be re-applied.
    """

    input: np.ndarray
    labels: Mnpm
    provenance: tuple = ()
    context: int | None = None
    clip: AudioClip | None = field(default=None, repr=False)
    source: str | None = None
    intervals: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.input.shape[0] != self.labels.num_frames:
            raise InvalidOpError(
                f"input has {self.input.shape[0]} frames but labels have {self.labels.num_frames} rows"
            )

    @property
    def num_frames(self):
        return self.input.shape[0]

    def derived(self, input, labels, op, **kw):
        return replace(
            self,
            input=np.ascontiguousarray(input),
            labels=labels,
            provenance=self.provenance + (op,),
            clip=kw.get("clip"),
            intervals=kw.get("intervals"),
        )


def _flip_time(sample):
    x = sample.input[::-1]
    if sample.context is not None:
        x = x[:, ::-1]
    labels = Mnpm(sample.labels.data[::-1], sample.labels.frame_times, sample.labels.config)
    return x, labels


def time_reverse(sample):
    """Reverse frame order of input and labels together.

    Context windows are reversed internally as well, so the result equals
    windowing the reversed spectrogram.
    """
    x, labels = _flip_time(sample)
    return sample.derived(x, labels, AugmentOp.time_reverse())


def sample_dihedral(sample, index, allow_experimental=False):
    """Apply dihedral ``index`` to a labelled sample.

    Only transforms that keep the time axis in place are defined here. Any
    frequency flip (indices 2 and 5) leaves labels unchanged and needs
    ``allow_experimental``; axis swaps always raise.
    """
    if index in AXIS_SWAPPING:
        raise InvalidOpError(
            f"dihedral {DIHEDRAL_NAMES[index]} swaps time and frequency; frame labels have no image"
        )
    op = AugmentOp.dihedral(index)
    freq_flip = index in (2, 5)
    if freq_flip and not allow_experimental:
        raise InvalidOpError(
            f"dihedral {DIHEDRAL_NAMES[index]} flips frequency; pass allow_experimental=True"
        )
    x, labels = sample.input, sample.labels
    if index in (2, 4):
        x, labels = _flip_time(sample)
    if freq_flip:
        x = np.flip(x, axis=1 if sample.context is None else 2)
    return sample.derived(x, labels, op)


def crop(sample, start, end):
    if not 0 <= start < end <= sample.num_frames:
        raise InvalidOpError(f"crop [{start}, {end}) outside 0..{sample.num_frames}")
    lab = sample.labels
    labels = Mnpm(lab.data[start:end], lab.frame_times[start:end], lab.config)
    return sample.derived(sample.input[start:end], labels, AugmentOp.crop(start, end))


def _draw_range(rng, m, min_frames):
    # pairs with length L: m - L + 1 starts; draw uniformly over all pairs
    total = (m - min_frames + 1) * (m - min_frames + 2) // 2
    r = int(rng.integers(total))
    for length in range(min_frames, m + 1):
        n = m - length + 1
        if r < n:
            return r, r + length
        r -= n
    raise AssertionError("unreachable")


def crop_bootstrap(sample, rng, count, min_frames):
    """``count`` random contiguous crops of at least ``min_frames`` frames."""
    if min_frames < 1:
        raise InvalidOpError("min_frames must be >= 1")
    m = sample.num_frames
    if m < min_frames:
        raise EmptyInputError(f"sample has {m} frames, fewer than min_frames={min_frames}")
    return [crop(sample, *_draw_range(rng, m, min_frames)) for _ in range(count)]


def _pink(white):
    n = white.shape[-1]
    spec = np.fft.rfft(white, axis=-1)
    f = np.arange(spec.shape[-1], dtype=np.float64)
    f[0] = np.inf
    return np.fft.irfft(spec / np.sqrt(f), n=n, axis=-1)


def add_noise(clip, kind, snr_db, rng):
    """Add white or pink Gaussian noise at ``snr_db`` and clamp to [-1, 1].

    Pink noise is white noise with its spectrum scaled by ``1/sqrt(f)``.
    """
    if kind not in NOISE_KINDS:
        raise InvalidOpError(f"unknown noise kind {kind!r}")
    if math.isinf(snr_db) and snr_db > 0:
        return clip
    x = clip.channels
    p_signal = float(np.mean(x**2)) if x.size else 0.0
    if p_signal == 0.0:
        raise UndefinedSNRError("cannot set a finite SNR on a silent clip")
    noise = rng.standard_normal(x.shape)
    if kind == "pink":
        noise = _pink(noise)
    target = p_signal / 10.0 ** (snr_db / 10.0)
    noise *= math.sqrt(target / float(np.mean(noise**2)))
    # clamping eats noise near full scale; re-scale until the delivered
    # noise power is on target
    gain = 1.0
    for _ in range(_CALIBRATION_STEPS):
        out = np.clip(x + gain * noise, -1.0, 1.0)
        delivered = float(np.mean((out - x) ** 2))
        if delivered == 0.0 or abs(10.0 * math.log10(delivered / target)) < 0.01:
            break
        gain *= math.sqrt(target / delivered)
    return AudioClip(out, clip.sample_rate)


def _noisy_sample(sample, op, rng):
    if sample.clip is None:
        raise InvalidOpError("noise op needs the sample's source audio")
    noisy = add_noise(sample.clip, op.noise_kind, op.snr_db, rng)
    cfg = sample.labels.config
    spec = compute_spectrogram(noisy, cfg) if noisy.num_channels == 1 else multichannel_spectrogram(noisy, cfg)
    x = spec.data if sample.context is None else context_windows(spec, sample.context).data
    if x.shape != sample.input.shape:
        raise InvalidOpError("noisy input shape differs from the original")
    return sample.derived(x, sample.labels, op)


def apply_op(sample, op, rng, allow_experimental=False):
    """Apply one op to one sample; returns a list of derived samples."""
    if op.kind == "identity":
        return [sample.derived(sample.input, sample.labels, op, clip=sample.clip, intervals=sample.intervals)]
    if op.kind == "time_reverse":
        return [time_reverse(sample)]
    if op.kind == "dihedral":
        return [sample_dihedral(sample, op.index, allow_experimental)]
    if op.kind == "crop":
        if op.count is None:
            return [crop(sample, op.start, op.end)]
        return crop_bootstrap(sample, rng, op.count, op.min_frames)
    return [_noisy_sample(sample, op, rng)]


def expand_dataset(samples, ops, rng=None, allow_experimental=False):
    """Originals followed by every (op, sample) application, op-major.

    Ops carrying a ``seed`` draw from their own generator; the rest share
    ``rng``. Inputs are never modified.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    out = list(samples)
    for op in ops:
        op_rng = np.random.default_rng(op.seed) if op.seed is not None else rng
        for s in samples:
            out.extend(apply_op(s, op, op_rng, allow_experimental))
    return out
