"""Backend selection for the hot kinematic/dynamic kernels.

The compiled extension (``_ckernels``) is used when it imports; otherwise
the pure-Python module is used. ``EXOBENCH_BACKEND=python`` forces the
fallback, ``EXOBENCH_BACKEND=compiled`` makes a missing extension an error.
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_choice = os.environ.get("EXOBENCH_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        log.debug("compiled kernels unavailable, using pure-Python fallback")
        _impl = _pykernels
        BACKEND = "python"

fk = _impl.fk
sweep = _impl.sweep
rnea = _impl.rnea
mass_matrix = _impl.mass_matrix


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["compiled"] = _ckernels
    except ImportError:
        pass
    return out
