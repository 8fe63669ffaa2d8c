"""Command-line entry point.

Exit status: 0 on success, 1 on usage errors, 2 on data/format errors.
Diagnostics go to stderr; data goes to files or stdout.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__, augment, nn, pipeline
from .audio_io import read_wav, write_wav
from .config import load_config
from .errors import ConfigError, NoteMatrixError
from .midi import extract_intervals, intervals_to_csv, read_smf
from .mnpm import build_mnpm, render_mnpm_image, save_mnpm, save_mnpm_csv
from .spectrogram import (
    SpectroConfig,
    compute_spectrogram,
    multichannel_spectrogram,
    to_csv,
    write_pgm,
)
from .synth import SynthConfig, render

log = logging.getLogger("notematrix")

DEFAULTS = {
    "sample_rate": 44100,
    "frame_length": 2048,
    "hop": 512,
    "window": "hann",
    "log_scale": True,
    "model": "A",
    "context": 1,
    "hidden": None,
    "frame_hidden": 256,
    "activation": "relu",
    "learning_rate": 0.05,
    "momentum": 0.9,
    "batch_size": 64,
    "epochs": 50,
    "seed": 0,
    "validation_fraction": 0.2,
    "threshold": 0.5,
    "min_frames": 2,
    "harmonics": 4,
    "amplitude_per_note": 0.2,
    "attack_ms": 10.0,
    "release_ms": 50.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _settings(args):
    merged = dict(DEFAULTS)
    merged.update(load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _spectro_cfg(s):
    return SpectroConfig(s["frame_length"], s["hop"], s["window"], s["log_scale"], s["sample_rate"])


def _synth_cfg(s):
    return SynthConfig(
        s["sample_rate"], s["amplitude_per_note"], s["harmonics"], s["attack_ms"], s["release_ms"]
    )


def _net_cfg(s, bins):
    context = s["context"]
    if s["model"] != "A" and context == 1:
        context = 3
    return nn.NetworkConfig(
        s["model"], bins, context, s["hidden"], s["activation"], s["frame_hidden"]
    )


def _train_cfg(s):
    return nn.TrainConfig(
        s["learning_rate"], s["momentum"], s["batch_size"], s["epochs"], s["seed"], s["validation_fraction"]
    )


def _check_rate(clip, cfg, path):
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"{path}: sample rate {clip.sample_rate} Hz does not match configured "
            f"{cfg.sample_rate} Hz (frame grid would differ)"
        )


# ---------------------------------------------------------------- commands


def cmd_spectrogram(args, s):
    cfg = _spectro_cfg(s)
    clip = read_wav(args.wav)
    _check_rate(clip, cfg, args.wav)
    if args.stereo:
        spec = multichannel_spectrogram(clip, cfg)
    else:
        from .audio_io import mixdown

        spec = compute_spectrogram(mixdown(clip), cfg)
    to_csv(spec, args.output)
    if args.pgm:
        write_pgm(spec.data, args.pgm)
    log.info("%d frames x %d bins", spec.num_frames, cfg.bins)


def cmd_midi2mnpm(args, s):
    cfg = _spectro_cfg(s)
    intervals = extract_intervals(read_smf(args.midi), exclude_channels=tuple(args.exclude_channel))
    if args.frames_from:
        clip = read_wav(args.frames_from)
        _check_rate(clip, cfg, args.frames_from)
        frames = cfg.num_frames(clip.length)
    elif args.num_frames is not None:
        frames = args.num_frames
    else:
        frames = cfg.num_frames(int(np.ceil(intervals.end_time * cfg.sample_rate)))
    m = build_mnpm(intervals, frames, cfg)
    save_mnpm(m, args.output)
    if args.csv:
        save_mnpm_csv(m, args.csv)
    if args.pgm:
        render_mnpm_image(m, args.pgm)
    if args.intervals:
        intervals_to_csv(intervals, args.intervals)


def cmd_synth(args, s):
    intervals = extract_intervals(read_smf(args.midi))
    duration = args.duration if args.duration is not None else intervals.end_time + args.tail
    write_wav(render(intervals, _synth_cfg(s), duration), args.output)


def cmd_augment(args, s):
    cfg = _spectro_cfg(s)
    clip = read_wav(args.wav)
    intervals = extract_intervals(read_smf(args.midi))
    sample = pipeline.make_sample(clip, intervals, cfg, s["context"])
    ops = augment.read_plan(args.plan)
    out = augment.expand_dataset(
        [sample], ops, np.random.default_rng(s["seed"]), args.allow_experimental
    )
    os.makedirs(args.output, exist_ok=True)
    index = []
    for k, smp in enumerate(out):
        stem = f"sample_{k:04d}"
        data = smp.input.reshape(smp.num_frames, -1)
        with open(os.path.join(args.output, stem + ".csv"), "w") as fh:
            for row in data:
                fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
        save_mnpm(smp.labels, os.path.join(args.output, stem + ".mnpm"))
        ops_text = " | ".join(op.to_line() for op in smp.provenance) or "original"
        index.append(f"{stem}\t{smp.num_frames}\t{ops_text}")
    with open(os.path.join(args.output, "index.txt"), "w") as fh:
        fh.write("\n".join(index) + "\n")
    print(f"{len(out)} samples written to {args.output}")


def _dataset(args, s, plan=()):
    cfg = _spectro_cfg(s)
    manifest = pipeline.read_manifest(args.manifest)
    net_ctx = _net_cfg(s, cfg.bins).context
    return pipeline.build_dataset(
        manifest, cfg, plan, context=net_ctx, seed=s["seed"], jobs=args.jobs
    ), cfg


def cmd_train(args, s):
    plan = augment.read_plan(args.plan) if args.plan else ()
    data, cfg = _dataset(args, s, plan)
    net_cfg = _net_cfg(s, cfg.bins)
    net, curve = pipeline.train_model(data, net_cfg, _train_cfg(s), s["threshold"])
    nn.save_checkpoint(net, args.output)
    if args.curve:
        curve.save(args.curve)
    last = curve.records[-1]
    log.info("trained %d epochs; final val loss %.6g, val frame F1 %.4f", len(curve), last.val_loss, last.val_frame_f1)


def _metrics_text(m):
    return "".join(f"{k}={v:.6g}\n" if isinstance(v, float) else f"{k}={v}\n" for k, v in vars(m).items())


def cmd_eval(args, s):
    data, cfg = _dataset(args, s)
    net = nn.load_checkpoint(args.checkpoint)
    metrics = pipeline.evaluate(net, data[args.split], s["threshold"], s["min_frames"])
    text = _metrics_text(metrics)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _parse_notes(spec):
    notes = set()
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            notes.update(range(int(lo), int(hi) + 1))
        elif part:
            notes.add(int(part))
    return sorted(notes)


def cmd_study(args, s):
    notes = _parse_notes(args.notes)
    train_chords, test_chords = pipeline.pick_chords(
        notes, args.chord_size, args.train_chords, args.test_chords, s["seed"]
    )
    cfg = _spectro_cfg(s)
    hidden = s["hidden"] or (256, 128)
    study_cfg = pipeline.StudyConfig(
        spectro=cfg,
        synth=_synth_cfg(s),
        network=nn.NetworkConfig("A", cfg.bins, hidden=hidden, activation=s["activation"]),
        training=_train_cfg(s),
        threshold=s["threshold"],
        min_frames=s["min_frames"],
        seed=s["seed"],
    )
    report = pipeline.unseen_combination_study(notes, train_chords, test_chords, study_cfg)
    with open(args.output, "w") as fh:
        fh.write(report.to_csv())
    if args.text:
        with open(args.text, "w") as fh:
            fh.write(report.to_text())
    sys.stdout.write(report.to_text())


def cmd_transcribe(args, s):
    cfg = _spectro_cfg(s)
    intervals = pipeline.transcribe(
        args.wav, args.checkpoint, args.output, s["threshold"], s["min_frames"], cfg
    )
    if args.csv:
        intervals_to_csv(intervals, args.csv)
    log.info("%d notes transcribed", len(intervals))


# ---------------------------------------------------------------- parser


def _add_spectro_flags(p):
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--frame-length", dest="frame_length", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--window", choices=("hann", "rectangular"))
    p.add_argument("--log-scale", dest="log_scale", action=argparse.BooleanOptionalAction, default=None)


def _add_train_flags(p):
    p.add_argument("--model", choices=nn.MODELS)
    p.add_argument("--context", type=int)
    p.add_argument("--hidden", type=lambda v: tuple(int(w) for w in v.split(",")))
    p.add_argument("--activation", choices=nn.ACTIVATIONS)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, help="training/augmentation seed (default 0)")


def build_parser():
    parser = _Parser(prog="notematrix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key = value config file (default ./mnpm.conf if present)")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap for parallel stages")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("spectrogram", help="WAV to spectrogram CSV (and PGM)")
    p.add_argument("wav")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--pgm")
    p.add_argument("--stereo", action="store_true", help="keep channels instead of mixing down")
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("midi2mnpm", help="MIDI to note probability matrix")
    p.add_argument("midi")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--frames-from", help="WAV whose frame grid the matrix should follow")
    p.add_argument("--num-frames", type=int)
    p.add_argument("--csv")
    p.add_argument("--pgm")
    p.add_argument("--intervals", help="also write the note-interval CSV")
    p.add_argument("--exclude-channel", type=int, action="append", default=[])
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_midi2mnpm)

    p = sub.add_parser("synth", help="render MIDI notes to WAV")
    p.add_argument("midi")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--duration", type=float)
    p.add_argument("--tail", type=float, default=0.2, help="silence after the last note (s)")
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--harmonics", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="apply an augmentation plan to one pair")
    p.add_argument("wav")
    p.add_argument("midi")
    p.add_argument("--plan", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--context", type=int)
    p.add_argument("--allow-experimental", action="store_true")
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a network from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("-o", "--output", required=True, help="checkpoint path")
    p.add_argument("--curve", help="learning-curve CSV")
    p.add_argument("--plan", help="augmentation plan for the training split")
    _add_train_flags(p)
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=pipeline.SPLITS, default="test")
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-frames", dest="min_frames", type=int)
    p.add_argument("-o", "--output")
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("study", help="seen vs unseen chord generalization report")
    p.add_argument("--notes", default="60-71", help="note set, e.g. 60-71 or 60,62,64")
    p.add_argument("--chord-size", type=int, default=2)
    p.add_argument("--train-chords", type=int, default=30)
    p.add_argument("--test-chords", type=int, default=10)
    p.add_argument("-o", "--output", required=True, help="report CSV")
    p.add_argument("--text", help="also write the text table here")
    _add_train_flags(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("transcribe", help="WAV to MIDI with a trained checkpoint")
    p.add_argument("wav")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--csv", help="also write the interval CSV")
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-frames", dest="min_frames", type=int)
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_transcribe)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    if args.jobs < 1:
        print("notematrix: error: --jobs must be >= 1", file=sys.stderr)
        return 1
    try:
        settings = _settings(args)
        args.func(args, settings)
    except (NoteMatrixError, OSError, ValueError) as exc:
        print(f"notematrix {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
