"""Additive sine rendering of note intervals (synthetic training audio)."""

from dataclasses import dataclass

import numpy as np

from .audio_io import DEFAULT_SAMPLE_RATE, AudioClip
from .errors import RangeError

PEAK_LIMIT = 0.9


@dataclass(frozen=True)
class SynthConfig:
    sample_rate: int = DEFAULT_SAMPLE_RATE
    amplitude_per_note: float = 0.2
    harmonics: int = 4
    attack_ms: float = 10.0
    release_ms: float = 50.0

    def __post_init__(self):
        if self.harmonics < 1:
            raise ValueError("harmonics must be >= 1")
        if self.attack_ms < 0 or self.release_ms < 0:
            raise ValueError("envelope ramps must be non-negative")
        if not 0 <= self.amplitude_per_note <= 1:
            raise ValueError("amplitude_per_note must be in [0, 1]")


def note_freq(n):
    """Equal-tempered frequency of MIDI note ``n`` (A4 = 69 = 440 Hz)."""
    if not 0 <= n <= 127:
        raise RangeError(f"note {n} outside 0..127")
    return 440.0 * 2.0 ** ((n - 69) / 12.0)


def _envelope(length, attack, release):
    env = np.ones(length)
    if attack > 0:
        a = min(attack, length)
        env[:a] = np.arange(a) / attack
    if release > 0:
        r = min(release, length)
        env[length - r :] *= np.arange(r, 0, -1) / release
    return env


def render(intervals, cfg=None, duration=None):
    """Sum of enveloped harmonic stacks, one per interval.

    Harmonic ``h`` has amplitude ``amplitude_per_note / h`` and is skipped at
    or above Nyquist. The release ramp sits inside the interval so nothing
    sounds after its offset. The mix is scaled down only when its peak
    exceeds 0.9.
    """
    cfg = cfg or SynthConfig()
    sr = cfg.sample_rate
    if duration is None:
        duration = intervals.end_time
    total = int(round(duration * sr))
    out = np.zeros(total)
    attack = int(round(cfg.attack_ms * sr / 1000.0))
    release = int(round(cfg.release_ms * sr / 1000.0))
    for note, onset, offset in sorted(intervals, key=lambda iv: (iv[1], iv[0])):
        if onset < 0 or offset > duration + 1e-9:
            raise RangeError(f"interval ({note}, {onset}, {offset}) outside [0, {duration}]")
        start = int(round(onset * sr))
        stop = min(int(round(offset * sr)), total)
        length = stop - start
        if length <= 0:
            continue
        t = np.arange(length) / sr
        f0 = note_freq(note)
        tone = np.zeros(length)
        for h in range(1, cfg.harmonics + 1):
            if h * f0 >= sr / 2:
                break
            tone += np.sin(2.0 * np.pi * h * f0 * t) / h
        out[start:stop] += cfg.amplitude_per_note * tone * _envelope(length, attack, release)
    peak = np.max(np.abs(out)) if total else 0.0
    if peak > PEAK_LIMIT:
        out *= PEAK_LIMIT / peak
    return AudioClip.mono(out, sr)
