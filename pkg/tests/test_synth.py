import numpy as np
import pytest

from notematrix.errors import RangeError
from notematrix.midi import NoteIntervalSet
from notematrix.mnpm import build_mnpm
from notematrix.spectrogram import SpectroConfig, compute_spectrogram
from notematrix.synth import SynthConfig, note_freq, render

CFG = SpectroConfig()


def fundamental_bin(note):
    return int(round(note_freq(note) * CFG.frame_length / CFG.sample_rate))


def test_note_freq_reference_points():
    assert note_freq(69) == 440.0
    assert note_freq(81) == 880.0
    assert note_freq(60) == pytest.approx(261.6256, abs=1e-4)
    assert 440 * 2 ** (-9 / 12) == pytest.approx(261.6256, abs=1e-4)


@pytest.mark.parametrize("n", [-1, 128])
def test_note_freq_range(n):
    with pytest.raises(RangeError):
        note_freq(n)


def test_empty_render():
    clip = render(NoteIntervalSet(), duration=0.5)
    assert clip.length == 22050 and not clip.samples.any()


def test_a440_argmax_bin():
    clip = render(NoteIntervalSet(((69, 0.0, 1.0),)), duration=1.0)
    spec = compute_spectrogram(clip, CFG)
    interior = spec.data[4:-4]
    assert fundamental_bin(69) == 20
    assert np.all(np.argmax(interior, axis=1) == 20)


def test_chord_has_both_fundamentals():
    clip = render(NoteIntervalSet(((60, 0.0, 1.0), (64, 0.0, 1.0))), duration=1.0)
    spec = compute_spectrogram(clip, CFG)
    row = spec.data[spec.num_frames // 2]
    for note in (60, 64):
        b = fundamental_bin(note)
        peak = b - 1 + int(np.argmax(row[b - 1 : b + 2]))
        assert row[peak] > row[peak - 1] and row[peak] > row[peak + 1]
        assert row[peak] > 0.5 * row.max()


def test_monophonic_label_consistency():
    rng = np.random.default_rng(4)
    t = 0.1
    spans = []
    for note in rng.integers(48, 85, 8):
        length = rng.uniform(0.2, 0.5)
        spans.append((int(note), t, t + length))
        t += length + 0.1
    ivs = NoteIntervalSet(tuple(spans))
    clip = render(ivs, duration=t + 0.1)
    spec = compute_spectrogram(clip, CFG)
    labels = build_mnpm(ivs, spec.num_frames, CFG).data
    hits = 0
    for i in range(spec.num_frames):
        active = np.flatnonzero(labels[i])
        if len(active) != 1:
            continue
        (note,) = active
        # frames straddling an onset or offset mix silence with the note
        center = CFG.frame_times(spec.num_frames)[i]
        half = CFG.frame_length / 2 / CFG.sample_rate
        if any(abs(center - edge) < half for _, b, e in spans for edge in (b, e)):
            continue
        lo = 5  # ignore DC neighbourhood
        assert abs(lo + int(np.argmax(spec.data[i, lo:])) - fundamental_bin(note)) <= 1
        hits += 1
    assert hits > 50


def test_disjoint_sets_concatenate():
    a = NoteIntervalSet(((60, 0.0, 0.8), (67, 0.2, 1.0)))
    b_local = NoteIntervalSet(((62, 0.1, 0.9),))
    b = NoteIntervalSet(((62, 1.1, 1.9),))
    cfg = SynthConfig(amplitude_per_note=0.2)
    joined = render(NoteIntervalSet(a.intervals + b.intervals), cfg, 2.0).samples
    parts = np.concatenate([render(a, cfg, 1.0).samples, render(b_local, cfg, 1.0).samples])
    np.testing.assert_allclose(joined, parts, atol=1e-9)


def test_peak_normalized():
    ivs = NoteIntervalSet(tuple((n, 0.0, 0.5) for n in range(60, 72)))
    clip = render(ivs, SynthConfig(amplitude_per_note=0.5))
    assert np.max(np.abs(clip.samples)) == pytest.approx(0.9)
    quiet = render(NoteIntervalSet(((60, 0.0, 0.5),)), SynthConfig(amplitude_per_note=0.1))
    assert np.max(np.abs(quiet.samples)) < 0.9


def test_deterministic_and_silent_outside_interval():
    ivs = NoteIntervalSet(((72, 0.25, 0.5),))
    a = render(ivs, duration=1.0).samples
    assert a.tobytes() == render(ivs, duration=1.0).samples.tobytes()
    assert not a[: int(0.25 * 44100)].any() and not a[int(0.5 * 44100) :].any()


def test_interval_beyond_duration():
    with pytest.raises(RangeError):
        render(NoteIntervalSet(((60, 0.5, 1.5),)), duration=1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(harmonics=0)
    with pytest.raises(ValueError):
        SynthConfig(attack_ms=-1)
