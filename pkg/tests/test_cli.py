import subprocess
import sys

import numpy as np
import pytest

from notematrix import __version__
from notematrix.audio_io import AudioClip, write_wav
from notematrix.cli import main
from notematrix.config import parse_config
from notematrix.errors import ConfigError
from notematrix.midi import NoteIntervalSet, write_smf
from notematrix.mnpm import load_mnpm
from notematrix.pipeline import LearningCurve
from notematrix.spectrogram import read_pgm

import scenarios


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    # keep a stray ./mnpm.conf from leaking in
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def tone(tmp_path):
    path = tmp_path / "tone.wav"
    t = np.arange(8000) / 8000
    write_wav(AudioClip.mono(0.5 * np.sin(2 * np.pi * 440 * t), 8000), path)
    return path


def test_version(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == f"notematrix {__version__}"


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "notematrix", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_command_and_bad_flags(capsys):
    assert main([]) == 1
    assert main(["spectrogram"]) == 1
    assert main(["--jobs", "0", "spectrogram", "x.wav", "-o", "y"]) == 1


def test_spectrogram_happy_path(tmp_path, tone):
    code = main(["spectrogram", str(tone), "-o", "out.csv", "--pgm", "out.pgm",
                 "--sample-rate", "8000", "--frame-length", "512", "--hop", "128"])
    assert code == 0
    rows = (tmp_path / "out.csv").read_text().splitlines()
    assert len(rows) == (8000 - 512) // 128 + 1
    assert len(rows[0].split(",")) == 257
    assert read_pgm(tmp_path / "out.pgm").shape == (len(rows), 257)


def test_spectrogram_rate_mismatch_is_data_error(tone, capsys):
    assert main(["spectrogram", str(tone), "-o", "out.csv"]) == 2
    assert "sample rate" in capsys.readouterr().err


def test_missing_input_is_data_error(capsys):
    assert main(["spectrogram", "nope.wav", "-o", "out.csv"]) == 2


def test_midi2mnpm_frame_config_mismatch(tmp_path, tone, capsys):
    write_smf(NoteIntervalSet(((69, 0.0, 0.5),)), path=tmp_path / "n.mid")
    assert main(["midi2mnpm", "n.mid", "--frames-from", str(tone), "-o", "out.mnpm"]) == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "out.mnpm").exists()


def test_midi2mnpm_outputs(tmp_path, tone):
    write_smf(NoteIntervalSet(((69, 0.0, 0.5),)), path=tmp_path / "n.mid")
    code = main(["midi2mnpm", "n.mid", "--frames-from", str(tone), "-o", "out.mnpm",
                 "--sample-rate", "8000", "--frame-length", "512", "--hop", "128", "--csv", "m.csv"])
    assert code == 0
    m = load_mnpm(tmp_path / "out.mnpm")
    assert m.num_frames == (8000 - 512) // 128 + 1
    assert m.config.sample_rate == 8000
    active = np.flatnonzero(m.data[:, 69])
    assert m.frame_times[active].max() < 0.5 and m.data.sum() == len(active)


def test_midi2mnpm_num_frames_and_exclusion(tmp_path):
    write_smf(NoteIntervalSet(((60, 0.0, 1.0),)), path=tmp_path / "n.mid")
    assert main(["midi2mnpm", "n.mid", "--num-frames", "7", "-o", "a.mnpm"]) == 0
    assert load_mnpm(tmp_path / "a.mnpm").num_frames == 7
    assert main(["midi2mnpm", "n.mid", "--exclude-channel", "0", "-o", "b.mnpm"]) == 0
    assert load_mnpm(tmp_path / "b.mnpm").num_frames == 0


def test_config_unknown_key_line_number(tmp_path, tone, capsys):
    (tmp_path / "bad.conf").write_text("hop = 128\n\nwidth = 3\n")
    assert main(["--config", "bad.conf", "spectrogram", str(tone), "-o", "o.csv"]) == 2
    assert "bad.conf:3" in capsys.readouterr().err


def test_default_config_file_picked_up(tmp_path, tone):
    (tmp_path / "mnpm.conf").write_text("sample_rate = 8000\nframe_length = 256\nhop = 256\n")
    assert main(["spectrogram", str(tone), "-o", "o.csv"]) == 0
    assert len((tmp_path / "o.csv").read_text().splitlines()) == 8000 // 256


def test_flags_override_config(tmp_path, tone):
    (tmp_path / "mnpm.conf").write_text("sample_rate = 8000\nframe_length = 256\nhop = 256\n")
    assert main(["spectrogram", str(tone), "-o", "o.csv", "--hop", "128"]) == 0
    assert len((tmp_path / "o.csv").read_text().splitlines()) == (8000 - 256) // 128 + 1


def test_parse_config_values():
    assert parse_config("log_scale = off\nhidden = 8, 4\n") == {"log_scale": False, "hidden": (8, 4)}
    with pytest.raises(ConfigError, match=":1:"):
        parse_config("epochs = many\n")
    with pytest.raises(ConfigError, match=":2:"):
        parse_config("\njust words\n")


def test_full_scenario(tmp_path):
    outputs = scenarios.run_all(tmp_path / "w")
    w = tmp_path / "w"
    for name in ("curve.csv", "model.ckpt", "eval.txt", "out.mid", "study.csv", "aug/index.txt"):
        assert name in outputs
    assert len(LearningCurve.load(w / "curve.csv")) == 3
    index = (w / "aug" / "index.txt").read_text().splitlines()
    # original + reversed + 2 crops + noisy
    assert len(index) == 5 and index[0].endswith("original")
    assert (w / "eval.txt").read_text().startswith("frame_precision=")
    assert (w / "study.csv").read_text().splitlines()[0].startswith("block,")


def test_scenario_byte_identical(tmp_path):
    a = scenarios.run_all(tmp_path / "a")
    b = scenarios.run_all(tmp_path / "b")
    assert a == b
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
