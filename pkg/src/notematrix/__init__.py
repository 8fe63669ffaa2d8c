"""Audio to musical-note probability matrices with small feedforward networks.

Submodules: ``audio_io``, ``spectrogram``, ``midi``, ``mnpm``, ``augment``,
``synth``, ``nn``, ``pipeline`` and ``cli``. The FFT, matrix-fill and VLQ
kernels come from a compiled extension when available (see ``kernels``).
"""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402,F401
