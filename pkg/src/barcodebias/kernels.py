"""Kernel backend selection.

The compiled Cython module is used when importable; set
``BARCODEBIAS_BACKEND=python`` to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("BARCODEBIAS_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernels
    else:
        BACKEND = "cython"

cd_lasso = _impl.cd_lasso
kmer_incidence = _impl.kmer_incidence
mi_bits = _impl.mi_bits


def available_backends():
    """Return the kernel modules that can be imported, keyed by name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
