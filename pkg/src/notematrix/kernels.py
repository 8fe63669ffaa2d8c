"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementations in ``_pykernels`` are used. Setting the environment
variable ``NOTEMATRIX_PURE=1`` forces the fallback.
"""

import os

from . import _pykernels

try:
    if os.environ.get("NOTEMATRIX_PURE"):
        raise ImportError("pure backend forced")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

fft_magnitudes = _impl.fft_magnitudes
fill_mnpm = _impl.fill_mnpm
decode_vlq = _impl.decode_vlq


def available_backends():
    """Return the kernel modules that can be imported, keyed by name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
