"""End-to-end orchestration: datasets, training, evaluation, transcription."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import os

import numpy as np

from . import augment, nn
from .audio_io import mixdown, read_wav
from .augment import LabeledSample
from .errors import ConfigError, EmptyInputError, FormatError, NoteMatrixError
from .midi import NoteIntervalSet, extract_intervals, read_smf, write_smf
from .mnpm import build_mnpm, postprocess
from .spectrogram import (
    SpectroConfig,
    compute_spectrogram,
    context_windows,
    multichannel_spectrogram,
)
from .synth import SynthConfig, render

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
ONSET_TOLERANCE = 0.05


# ---------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestEntry:
    split: str
    audio: str
    midi: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple = ()
    seed: int = 0

    def __post_init__(self):
        seen = {}
        for e in self.entries:
            if e.split not in SPLITS:
                raise ConfigError(f"unknown split {e.split!r}")
            key = (e.audio, e.midi)
            if seen.setdefault(key, e.split) != e.split:
                raise ConfigError(f"pair {key} appears in splits {seen[key]} and {e.split}")

    def split(self, name):
        return [e for e in self.entries if e.split == name]


def parse_manifest(text, base_dir="."):
    """Lines of ``train|val|test <wav> <mid>``; paths resolve against ``base_dir``."""
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ConfigError(f"manifest line {lineno}: expected '<split> <wav> <mid>'")
        split, wav, mid = parts
        entries.append(
            ManifestEntry(split, os.path.join(base_dir, wav), os.path.join(base_dir, mid))
        )
    return DatasetManifest(tuple(entries))


def read_manifest(path):
    with open(path) as fh:
        return parse_manifest(fh.read(), os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------- samples


def make_sample(clip, intervals, cfg, context=1, stack=False, source=None):
    """Spectrogram (or context tensor) of ``clip`` paired with its MNPM."""
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"audio sample rate {clip.sample_rate} Hz does not match configured {cfg.sample_rate} Hz"
        )
    if stack and clip.num_channels > 1:
        spec = multichannel_spectrogram(clip, cfg)
    else:
        clip = mixdown(clip)
        spec = compute_spectrogram(clip, cfg)
    x = spec.data if context == 1 else context_windows(spec, context).data
    labels = build_mnpm(intervals, spec.num_frames, cfg)
    return LabeledSample(
        np.ascontiguousarray(x, dtype=np.float32),
        labels,
        context=None if context == 1 else context,
        clip=clip,
        source=source,
        intervals=intervals,
    )


def _load_entry(entry, cfg, context, stack):
    try:
        clip = read_wav(entry.audio)
        intervals = extract_intervals(read_smf(entry.midi))
    except OSError as exc:
        raise FormatError(f"{entry.audio} / {entry.midi}: {exc}") from exc
    except NoteMatrixError as exc:
        raise type(exc)(f"{entry.audio} / {entry.midi}: {exc}") from exc
    return make_sample(clip, intervals, cfg, context, stack, source=entry.audio)


def build_dataset(
    manifest,
    spectro_cfg,
    augment_plan=(),
    context=1,
    stack=False,
    seed=0,
    jobs=1,
    allow_experimental=False,
):
    """Decode every manifest pair into labelled samples, grouped by split.

    Augmentation touches the training split only. Any unreadable entry fails
    the whole call.
    """
    entries = list(manifest.entries)
    load = lambda e: _load_entry(e, spectro_cfg, context, stack)  # noqa: E731
    if jobs > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(load, entries))
    else:
        samples = [load(e) for e in entries]
    out = {name: [] for name in SPLITS}
    for e, s in zip(entries, samples):
        out[e.split].append(s)
    if augment_plan:
        out["train"] = augment.expand_dataset(
            out["train"], list(augment_plan), np.random.default_rng(seed), allow_experimental
        )
    return out


def stack_samples(samples):
    """Concatenate sample frames into ``(inputs, targets)`` arrays."""
    if not samples:
        return np.zeros((0,)), np.zeros((0, 128), dtype=np.float32)
    x = np.concatenate([s.input for s in samples]).astype(np.float32, copy=False)
    y = np.concatenate([s.labels.data for s in samples]).astype(np.float32, copy=False)
    return x, y


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Metrics:
    """Frame- and note-level scores.

    When a precision or recall has a zero denominator it is reported as 0 and
    the matching ``*_defined`` flag is False.
    """

    frame_precision: float
    frame_recall: float
    frame_f1: float
    note_precision: float
    note_recall: float
    note_f1: float
    frame_precision_defined: bool = True
    frame_recall_defined: bool = True
    note_precision_defined: bool = True
    note_recall_defined: bool = True


def _prf(tp, fp, fn):
    p_def = tp + fp > 0
    r_def = tp + fn > 0
    p = tp / (tp + fp) if p_def else 0.0
    r = tp / (tp + fn) if r_def else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1, p_def, r_def


def match_notes(estimated, reference, tolerance=ONSET_TOLERANCE):
    """Count one-to-one matches with equal note and onsets within ``tolerance``."""
    used = set()
    matched = 0
    for ref in reference:
        best, best_d = None, None
        for k, est in enumerate(estimated):
            if k in used or est.note != ref.note:
                continue
            d = abs(est.onset - ref.onset)
            if d <= tolerance + 1e-12 and (best_d is None or d < best_d):
                best, best_d = k, d
        if best is not None:
            used.add(best)
            matched += 1
    return matched


def _frame_duration(sample):
    cfg = sample.labels.config
    if cfg is not None:
        return cfg.hop / cfg.sample_rate
    t = sample.labels.frame_times
    return t[1] - t[0] if len(t) > 1 else 1.0


def score_predictions(samples, probs_list, threshold=0.5, min_frames=2):
    """Metrics for precomputed per-sample probability matrices."""
    tp = fp = fn = 0
    n_match = n_est = n_ref = 0
    for s, probs in zip(samples, probs_list):
        pred = probs >= threshold
        truth = s.labels.data >= 0.5
        tp += int(np.sum(pred & truth))
        fp += int(np.sum(pred & ~truth))
        fn += int(np.sum(~pred & truth))
        times = s.labels.frame_times
        dur = _frame_duration(s)
        est = postprocess(probs, threshold, min_frames, times, dur)
        ref = s.intervals if s.intervals is not None else postprocess(s.labels.data, 0.5, 1, times, dur)
        n_match += match_notes(list(est), list(ref))
        n_est += len(est)
        n_ref += len(ref)
    fp_, fr_, ff_, fpd, frd = _prf(tp, fp, fn)
    np_, nr_, nf_, npd, nrd = _prf(n_match, n_est - n_match, n_ref - n_match)
    return Metrics(fp_, fr_, ff_, np_, nr_, nf_, fpd, frd, npd, nrd)


def evaluate(net, samples, threshold=0.5, min_frames=2):
    """Frame and note metrics of ``net`` on ``samples``."""
    if not samples:
        raise EmptyInputError("no samples to evaluate")
    probs = [nn.predict(net, s.input) for s in samples]
    return score_predictions(samples, probs, threshold, min_frames)


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class CurveRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_frame_f1: float


@dataclass
class LearningCurve:
    records: list = field(default_factory=list)

    def append(self, record):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def to_csv(self):
        lines = ["epoch,train_loss,val_loss,val_frame_f1"]
        for r in self.records:
            lines.append(f"{r.epoch},{r.train_loss:.6g},{r.val_loss:.6g},{r.val_frame_f1:.6g}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        if not lines or lines[0] != "epoch,train_loss,val_loss,val_frame_f1":
            raise FormatError("missing learning-curve header")
        curve = cls()
        for line in lines[1:]:
            if line:
                e, tl, vl, f1 = line.split(",")
                curve.append(CurveRecord(int(e), float(tl), float(vl), float(f1)))
        return curve

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_csv(fh.read())


def _split_validation(train, fraction, seed):
    n = len(train)
    if n < 2:
        return train, train
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    order = np.random.default_rng(seed).permutation(n)
    val_idx = set(order[:n_val].tolist())
    return (
        [s for i, s in enumerate(train) if i not in val_idx],
        [s for i, s in enumerate(train) if i in val_idx],
    )


def train_model(dataset, net_cfg, train_cfg, threshold=0.5, callback=None):
    """Train with momentum SGD, returning the best-validation-loss network.

    ``dataset`` maps split names to sample lists. Without a ``val`` split, a
    ``validation_fraction`` share of the training samples is held out.
    """
    train = list(dataset.get("train", []))
    val = list(dataset.get("val", []))
    if not train:
        raise EmptyInputError("training split is empty")
    if not val:
        train, val = _split_validation(train, train_cfg.validation_fraction, train_cfg.seed)
    x, y = stack_samples(train)
    xv, yv = stack_samples(val)
    net = nn.init_network(net_cfg, train_cfg.seed)
    opt = nn.MomentumSGD(net, train_cfg.learning_rate, train_cfg.momentum)
    rng = np.random.default_rng(train_cfg.seed)
    curve = LearningCurve()
    best, best_loss = net.copy(), np.inf
    for epoch in range(1, train_cfg.epochs + 1):
        stats = nn.train_epoch(net, (x, y), train_cfg, rng, opt)
        pv = nn.predict(net, xv)
        val_loss = nn.bce_loss(pv, yv)
        tp = np.sum((pv >= threshold) & (yv >= 0.5))
        f1 = _prf(tp, np.sum((pv >= threshold) & (yv < 0.5)), np.sum((pv < threshold) & (yv >= 0.5)))[2]
        record = CurveRecord(epoch, stats.mean_loss, val_loss, float(f1))
        curve.append(record)
        log.info("epoch %d train %.5f val %.5f f1 %.4f", epoch, stats.mean_loss, val_loss, f1)
        if callback is not None:
            callback(record)
        if val_loss < best_loss:
            best, best_loss = net.copy(), val_loss
    return best, curve


# ---------------------------------------------------------------- synthetic data


def render_sample(intervals, duration, spectro_cfg, synth_cfg=None, context=1, source=None):
    """Synthesize ``intervals`` and label the result."""
    synth_cfg = synth_cfg or SynthConfig(sample_rate=spectro_cfg.sample_rate)
    clip = render(intervals, synth_cfg, duration)
    return make_sample(clip, intervals, spectro_cfg, context, source=source)


def monophonic_pieces(count, notes=(48, 84), durations=(0.5, 2.0), seed=0, lead=(0.05, 0.25), tail=0.2):
    """``count`` single-note interval sets with their clip durations.

    Pitches cycle through ``notes[0]..notes[1]`` in shuffled order so every
    pitch occurs about equally often.
    """
    rng = np.random.default_rng(seed)
    pitches = rng.permutation(np.resize(np.arange(notes[0], notes[1] + 1), count))
    pieces = []
    for note in pitches.tolist():
        dur = float(rng.uniform(*durations))
        onset = float(rng.uniform(*lead))
        pieces.append((NoteIntervalSet(((note, onset, onset + dur),)), onset + dur + tail))
    return pieces


def synthetic_dataset(pieces, spectro_cfg, synth_cfg=None, context=1, val_fraction=0.2, seed=0):
    """Render pieces and split them into train/val by ``val_fraction``."""
    samples = [
        render_sample(p, d, spectro_cfg, synth_cfg, context, source=f"piece{i}")
        for i, (p, d) in enumerate(pieces)
    ]
    n_val = int(round(val_fraction * len(samples)))
    order = np.random.default_rng(seed).permutation(len(samples))
    val_idx = set(order[:n_val].tolist())
    return {
        "train": [s for i, s in enumerate(samples) if i not in val_idx],
        "val": [s for i, s in enumerate(samples) if i in val_idx],
        "test": [],
    }


# ---------------------------------------------------------------- unseen chords


@dataclass(frozen=True)
class StudyConfig:
    spectro: SpectroConfig = field(default_factory=SpectroConfig)
    synth: SynthConfig | None = None
    network: nn.NetworkConfig | None = None
    training: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(epochs=30))
    train_clips_per_chord: int = 3
    test_clips_per_chord: int = 1
    durations: tuple = (0.4, 0.8)
    threshold: float = 0.5
    min_frames: int = 2
    seed: int = 0


@dataclass(frozen=True)
class StudyReport:
    seen: Metrics
    unseen: Metrics
    train_chords: tuple
    test_chords: tuple
    curve: LearningCurve = field(repr=False, compare=False, default=None)

    @property
    def frame_f1_gap(self):
        return self.seen.frame_f1 - self.unseen.frame_f1

    @property
    def note_f1_gap(self):
        return self.seen.note_f1 - self.unseen.note_f1

    def _rows(self):
        cols = ("frame_precision", "frame_recall", "frame_f1", "note_f1")
        rows = [("seen", [getattr(self.seen, c) for c in cols]), ("unseen", [getattr(self.unseen, c) for c in cols])]
        rows.append(("gap", [a - b for a, b in zip(rows[0][1], rows[1][1])]))
        return cols, rows

    def to_csv(self):
        cols, rows = self._rows()
        lines = ["block," + ",".join(cols)]
        lines += [name + "," + ",".join(f"{v:.6g}" for v in vals) for name, vals in rows]
        return "\n".join(lines) + "\n"

    def to_text(self):
        cols, rows = self._rows()
        out = [
            f"train chords: {len(self.train_chords)}   test chords: {len(self.test_chords)}",
            f"{'block':<8}" + "".join(f"{c:>17}" for c in cols),
        ]
        out += [f"{name:<8}" + "".join(f"{v:>17.4f}" for v in vals) for name, vals in rows]
        return "\n".join(out) + "\n"


def _chord_samples(chords, clips, cfg, tag):
    samples = []
    for chord in chords:
        # per-chord generator so a chord renders identically in every role
        rng = np.random.default_rng([cfg.seed, tag, *chord])
        for k in range(clips):
            onset = float(rng.uniform(0.05, 0.15))
            dur = float(rng.uniform(*cfg.durations))
            ivs = NoteIntervalSet(tuple((n, onset, onset + dur) for n in chord))
            samples.append(
                render_sample(ivs, onset + dur + 0.15, cfg.spectro, cfg.synth,
                              cfg.network.context if cfg.network else 1,
                              source=f"{'-'.join(map(str, chord))}#{k}")
            )
    return samples


def unseen_combination_study(note_set, train_chords, test_chords, cfg=None, control=False):
    """Train on ``train_chords`` and score seen versus unseen chords.

    Chords are tuples of MIDI notes drawn from ``note_set``. The chord sets
    must be disjoint unless ``control`` is set. Nothing is asserted about the
    result; the report carries both metric blocks and their gap.
    """
    cfg = cfg or StudyConfig()
    notes = set(note_set)
    train_chords = [tuple(sorted(c)) for c in train_chords]
    test_chords = [tuple(sorted(c)) for c in test_chords]
    for c in train_chords + test_chords:
        if not set(c) <= notes:
            raise ConfigError(f"chord {c} uses notes outside the note set")
    if not control and set(train_chords) & set(test_chords):
        raise ConfigError("train and test chord sets overlap")
    if not train_chords or not test_chords:
        raise ConfigError("both chord sets must be non-empty")
    net_cfg = cfg.network or nn.NetworkConfig("A", cfg.spectro.bins, hidden=(256, 128))
    cfg = replace(cfg, network=net_cfg)
    train = _chord_samples(train_chords, cfg.train_clips_per_chord, cfg, 0)
    seen = _chord_samples(train_chords, cfg.test_clips_per_chord, cfg, 1)
    unseen = _chord_samples(test_chords, cfg.test_clips_per_chord, cfg, 1)
    net, curve = train_model({"train": train, "val": seen}, net_cfg, cfg.training, cfg.threshold)
    return StudyReport(
        evaluate(net, seen, cfg.threshold, cfg.min_frames),
        evaluate(net, unseen, cfg.threshold, cfg.min_frames),
        tuple(train_chords),
        tuple(test_chords),
        curve,
    )


def pick_chords(note_set, size, n_train, n_test, seed=0):
    """Random disjoint train/test chord lists of ``size`` notes each."""
    from itertools import combinations

    pool = list(combinations(sorted(note_set), size))
    if n_train + n_test > len(pool):
        raise ConfigError(f"only {len(pool)} distinct chords of size {size} available")
    order = np.random.default_rng(seed).permutation(len(pool))
    picked = [pool[i] for i in order[: n_train + n_test]]
    return picked[:n_train], picked[n_train:]


# ---------------------------------------------------------------- transcription


def transcribe_clip(net, clip, cfg, threshold=0.5, min_frames=2):
    """Note intervals predicted for ``clip``."""
    ncfg = net.config
    spec = compute_spectrogram(mixdown(clip), cfg)
    x = spec.data if ncfg.context == 1 else context_windows(spec, ncfg.context).data
    probs = nn.predict(net, x)
    return postprocess(probs, threshold, min_frames, cfg.frame_times(spec.num_frames), cfg.hop / cfg.sample_rate)


def transcribe(audio_path, checkpoint_path, midi_path, threshold=0.5, min_frames=2, cfg=None):
    """WAV in, MIDI out; returns the written intervals."""
    clip = read_wav(audio_path)
    cfg = cfg or SpectroConfig(sample_rate=clip.sample_rate)
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigError(f"audio sample rate {clip.sample_rate} Hz != configured {cfg.sample_rate} Hz")
    net = nn.load_checkpoint(checkpoint_path)
    if net.config.input_bins != cfg.bins:
        raise ConfigError(f"checkpoint expects {net.config.input_bins} bins, spectrogram has {cfg.bins}")
    intervals = transcribe_clip(net, clip, cfg, threshold, min_frames)
    write_smf(intervals, path=midi_path)
    return intervals

