"""``key = value`` configuration files shared by all CLI commands."""

import os

from .errors import ConfigError

DEFAULT_PATH = "mnpm.conf"


def _bool(v):
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _widths(v):
    return tuple(int(w) for w in v.replace(",", " ").split())


KEYS = {
    "sample_rate": int,
    "frame_length": int,
    "hop": int,
    "window": str,
    "log_scale": _bool,
    "model": str,
    "context": int,
    "hidden": _widths,
    "frame_hidden": int,
    "activation": str,
    "learning_rate": float,
    "momentum": float,
    "batch_size": int,
    "epochs": int,
    "seed": int,
    "validation_fraction": float,
    "threshold": float,
    "min_frames": int,
    "harmonics": int,
    "amplitude_per_note": float,
    "attack_ms": float,
    "release_ms": float,
}


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Unknown keys and unparsable values raise :class:`ConfigError` naming the
    line.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def load_config(path=None):
    """Read ``path``, or ``./mnpm.conf`` if present; returns a dict."""
    if path is None:
        if not os.path.exists(DEFAULT_PATH):
            return {}
        path = DEFAULT_PATH
    try:
        with open(path) as fh:
            return parse_config(fh.read(), path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
