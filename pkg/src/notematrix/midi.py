"""Standard MIDI File parsing/writing and note-interval extraction."""

from bisect import bisect_right
from collections import namedtuple
from dataclasses import dataclass, field
import logging
import struct

import numpy as np

from . import kernels
from .errors import (
    FormatError,
    RangeError,
    TruncationError,
    UnsupportedDivisionError,
    UnsupportedFormatError,
)

log = logging.getLogger(__name__)

DEFAULT_TEMPO = 500000
META_END_OF_TRACK = 0x2F
META_SET_TEMPO = 0x51

# data byte count per channel-message high nibble
_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}
_KINDS = {
    0x80: "note_off",
    0x90: "note_on",
    0xA0: "poly_aftertouch",
    0xB0: "control_change",
    0xC0: "program_change",
    0xD0: "channel_pressure",
    0xE0: "pitch_bend",
}


@dataclass(frozen=True)
class MidiEvent:
    """One track event.

    ``status`` is the full status byte (0xFF for meta events, 0xF0/0xF7 for
    sysex). For channel events ``data`` holds the data bytes; for meta and
    sysex it holds the raw payload.
    """

    delta: int
    status: int
    data: bytes = b""
    meta_type: int | None = None

    @property
    def kind(self):
        if self.status == 0xFF:
            return "meta"
        if self.status in (0xF0, 0xF7):
            return "sysex"
        return _KINDS[self.status & 0xF0]

    @property
    def channel(self):
        return self.status & 0x0F if self.status < 0xF0 else None

    def is_end_of_track(self):
        return self.status == 0xFF and self.meta_type == META_END_OF_TRACK


@dataclass(frozen=True)
class MidiFile:
    format: int
    division: int
    tracks: tuple = ()

    def __post_init__(self):
        if self.division <= 0:
            raise UnsupportedDivisionError("division must be positive ticks per quarter")


Interval = namedtuple("Interval", "note onset offset")


@dataclass(frozen=True)
class NoteIntervalSet:
    """Note intervals ``(note, onset_seconds, offset_seconds)``, kept sorted.

    ``unclosed`` counts note-ons that had no matching note-off and were
    closed at the end of the file; it does not take part in equality.
    """

    intervals: tuple = ()
    unclosed: int = field(default=0, compare=False)

    def __post_init__(self):
        ivs = tuple(sorted(Interval(int(n), float(b), float(e)) for n, b, e in self.intervals))
        for iv in ivs:
            if not 0 <= iv.note <= 127:
                raise RangeError(f"note {iv.note} outside 0..127")
            if not iv.onset < iv.offset:
                raise ValueError(f"interval {iv} has onset >= offset")
        object.__setattr__(self, "intervals", ivs)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @property
    def end_time(self):
        return max((iv.offset for iv in self.intervals), default=0.0)

    def arrays(self):
        """``(notes, onsets, offsets)`` as numpy arrays."""
        if not self.intervals:
            return np.zeros(0, np.int64), np.zeros(0), np.zeros(0)
        notes, onsets, offsets = zip(*self.intervals)
        return np.array(notes, np.int64), np.array(onsets), np.array(offsets)


def parse_vlq(buf, pos=0):
    """Decode a variable-length quantity; returns ``(value, consumed)``."""
    return kernels.decode_vlq(bytes(buf), pos)


def encode_vlq(value):
    if value < 0 or value >= 1 << 28:
        raise RangeError(f"{value} cannot be encoded as a 4-byte VLQ")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _parse_track(chunk):
    events = []
    pos = 0
    running = None
    end = len(chunk)
    while pos < end:
        delta, used = kernels.decode_vlq(chunk, pos)
        pos += used
        if pos >= end:
            raise TruncationError("track ends after a delta time")
        status = chunk[pos]
        if status == 0xFF:
            if pos + 2 > end:
                raise TruncationError("meta event header truncated")
            meta_type = chunk[pos + 1]
            length, used = kernels.decode_vlq(chunk, pos + 2)
            start = pos + 2 + used
            if start + length > end:
                raise TruncationError("meta event payload truncated")
            events.append(MidiEvent(delta, 0xFF, bytes(chunk[start : start + length]), meta_type))
            pos = start + length
            if meta_type == META_END_OF_TRACK:
                break
            continue
        if status in (0xF0, 0xF7):
            length, used = kernels.decode_vlq(chunk, pos + 1)
            start = pos + 1 + used
            if start + length > end:
                raise TruncationError("sysex payload truncated")
            events.append(MidiEvent(delta, status, bytes(chunk[start : start + length])))
            pos = start + length
            running = None
            continue
        if status & 0x80:
            if status >= 0xF0:
                raise FormatError(f"system message 0x{status:02X} not allowed in a file")
            running = status
            pos += 1
        elif running is None:
            raise FormatError("data byte without status (no running status in effect)")
        n = _DATA_LEN[running & 0xF0]
        if pos + n > end:
            raise TruncationError("channel event truncated")
        events.append(MidiEvent(delta, running, bytes(chunk[pos : pos + n])))
        pos += n
    if not events or not events[-1].is_end_of_track():
        events.append(MidiEvent(0, 0xFF, b"", META_END_OF_TRACK))
    return tuple(events)


def parse_smf(raw):
    """Parse Standard MIDI File bytes (formats 0 and 1, metrical division)."""
    raw = bytes(raw)
    if raw[:4] != b"MThd":
        raise FormatError("missing MThd header")
    if len(raw) < 14:
        raise TruncationError("MThd header truncated")
    (hlen,) = struct.unpack_from(">I", raw, 4)
    if hlen < 6:
        raise FormatError("MThd chunk shorter than 6 bytes")
    if 8 + hlen > len(raw):
        raise TruncationError("MThd chunk overruns buffer")
    fmt, ntracks, division = struct.unpack_from(">HHH", raw, 8)
    if fmt == 2:
        raise UnsupportedFormatError("SMF format 2 is not supported")
    if fmt not in (0, 1):
        raise FormatError(f"unknown SMF format {fmt}")
    if division & 0x8000:
        raise UnsupportedDivisionError("SMPTE time division is not supported")
    if division == 0:
        raise FormatError("division is zero")
    pos = 8 + hlen
    tracks = []
    for _ in range(ntracks):
        if pos + 8 > len(raw):
            raise TruncationError(f"expected {ntracks} tracks, found {len(tracks)}")
        if raw[pos : pos + 4] != b"MTrk":
            raise FormatError(f"bad track chunk magic {raw[pos:pos + 4]!r}")
        (length,) = struct.unpack_from(">I", raw, pos + 4)
        if pos + 8 + length > len(raw):
            raise TruncationError("MTrk chunk overruns buffer")
        tracks.append(_parse_track(raw[pos + 8 : pos + 8 + length]))
        pos += 8 + length
    return MidiFile(fmt, division, tuple(tracks))


def read_smf(path):
    with open(path, "rb") as fh:
        return parse_smf(fh.read())


class TempoMap:
    """Piecewise-constant tempo: ordered ``(tick, microseconds_per_quarter)``."""

    def __init__(self, entries, division):
        merged = {}
        for tick, tempo in sorted(entries, key=lambda e: e[0]):
            if tempo <= 0:
                raise ValueError("tempo must be positive")
            merged[tick] = tempo
        if 0 not in merged:
            merged[0] = DEFAULT_TEMPO
        self.entries = tuple(sorted(merged.items()))
        self.division = division
        self._ticks = [t for t, _ in self.entries]
        self._seconds = [0.0]
        for (t0, us), (t1, _) in zip(self.entries, self.entries[1:]):
            self._seconds.append(self._seconds[-1] + (t1 - t0) * us / (1e6 * division))

    @classmethod
    def from_midi(cls, midi):
        entries = []
        for track in midi.tracks:
            tick = 0
            for ev in track:
                tick += ev.delta
                if ev.status == 0xFF and ev.meta_type == META_SET_TEMPO and len(ev.data) == 3:
                    entries.append((tick, int.from_bytes(ev.data, "big")))
        return cls(entries, midi.division)

    def seconds(self, tick):
        k = bisect_right(self._ticks, tick) - 1
        t0, us = self.entries[k]
        return self._seconds[k] + (tick - t0) * us / (1e6 * self.division)


def extract_intervals(midi, exclude_channels=()):
    """Pair note-on/note-off events of all tracks into a :class:`NoteIntervalSet`.

    Note-on with velocity 0 counts as note-off. A note-on for an already
    sounding (channel, note) closes the old interval and opens a new one.
    Notes still open at the end are closed at the last event time.
    """
    tempo = TempoMap.from_midi(midi)
    events = []
    last_tick = 0
    for ti, track in enumerate(midi.tracks):
        tick = 0
        for seq, ev in enumerate(track):
            tick += ev.delta
            if ev.status < 0xF0 and ev.status & 0xE0 == 0x80:
                if ev.channel not in exclude_channels:
                    events.append((tick, ti, seq, ev))
        last_tick = max(last_tick, tick)
    events.sort(key=lambda e: e[:3])

    open_notes = {}
    spans = []
    for tick, _, _, ev in events:
        note, vel = ev.data[0], ev.data[1]
        key = (ev.channel, note)
        if key in open_notes:
            spans.append((note, open_notes.pop(key), tick))
        if ev.status & 0xF0 == 0x90 and vel > 0:
            open_notes[key] = tick
        # a note-off with nothing open is ignored
    for (_, note), start in open_notes.items():
        spans.append((note, start, last_tick))
    if open_notes:
        log.warning("%d note(s) left open at end of file", len(open_notes))

    intervals = []
    for note, b, e in spans:
        if e > b:
            intervals.append((note, tempo.seconds(b), tempo.seconds(e)))
    return NoteIntervalSet(tuple(intervals), unclosed=len(open_notes))


def _meta(delta, meta_type, payload):
    return encode_vlq(delta) + bytes([0xFF, meta_type]) + encode_vlq(len(payload)) + payload


def encode_smf(intervals, division=480, tempo=DEFAULT_TEMPO):
    """Format-0 SMF bytes for ``intervals`` at a fixed tempo, channel 0."""
    if not 0 < division < 0x8000:
        raise RangeError("division must be in 1..32767")
    per_sec = 1e6 / tempo * division
    timed = []
    for iv in intervals:
        note = int(iv[0])
        if not 0 <= note <= 127:
            raise RangeError(f"note {note} outside 0..127")
        on = int(round(iv[1] * per_sec))
        off = max(int(round(iv[2] * per_sec)), on + 1)
        timed.append((on, 1, note))
        timed.append((off, 0, note))
    # note-offs before note-ons at equal ticks so back-to-back notes survive
    timed.sort()
    body = bytearray(_meta(0, META_SET_TEMPO, tempo.to_bytes(3, "big")))
    tick = 0
    for t, is_on, note in timed:
        status = 0x90 if is_on else 0x80
        vel = 100 if is_on else 64
        body += encode_vlq(t - tick) + bytes([status, note, vel])
        tick = t
    body += _meta(0, META_END_OF_TRACK, b"")
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, division)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def write_smf(intervals, division=480, tempo=DEFAULT_TEMPO, path=None):
    data = encode_smf(intervals, division, tempo)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def intervals_to_csv(intervals, path):
    with open(path, "w") as fh:
        fh.write("note,onset_seconds,offset_seconds\n")
        for iv in intervals:
            fh.write(f"{iv.note},{iv.onset!r},{iv.offset!r}\n")


def intervals_from_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "note,onset_seconds,offset_seconds":
        raise FormatError("missing interval CSV header")
    rows = []
    for line in lines[1:]:
        if line.strip():
            n, b, e = line.split(",")
            rows.append((int(n), float(b), float(e)))
    return NoteIntervalSet(tuple(rows))

