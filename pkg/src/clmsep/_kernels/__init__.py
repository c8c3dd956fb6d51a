"""Batch kernel backend selection.

The compiled Cython kernel is used when available; otherwise the
pure-Python reference takes over. Both produce bit-identical output.
Override with CLMSEP_KERNEL=python|compiled (``compiled`` raises if the
extension is missing).
"""

import os

from .reference import (  # noqa: F401  (column constants are part of the API)
    COL_A1,
    COL_A2,
    COL_C_DIAG,
    COL_GAMMA2_PLUGIN,
    COL_L_HAT,
    COL_L_TRUE,
    COL_PRED_RATIO,
    COL_TERM1,
    COL_TERM2,
    COL_TERM3,
    NCOLS,
    TAIL_MACK,
    TAIL_RATIO,
    TAIL_USER,
)

_requested = os.environ.get("CLMSEP_KERNEL", "auto").lower()

if _requested == "python":
    from . import reference as _impl

    ACTIVE_BACKEND = "python"
elif _requested in ("auto", "compiled"):
    try:
        from . import _fast as _impl

        ACTIVE_BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import reference as _impl

        ACTIVE_BACKEND = "python"
else:
    raise ValueError(f"CLMSEP_KERNEL must be auto, python or compiled, got {_requested!r}")

chain_stats = _impl.chain_stats
year_stats = _impl.year_stats


def active_backend() -> str:
    """Name of the kernel backend selected at import: 'compiled' or 'python'."""
    return ACTIVE_BACKEND
