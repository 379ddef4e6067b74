"""Kernel backend selection.

Imports the compiled extension (``_core``) when it built successfully, else
falls back to the pure-numpy implementation.  Set DEXFORGE_PURE_PYTHON=1 to
force the fallback (useful for debugging and for benchmarking the two
backends against each other).
"""

from __future__ import annotations

import os

if os.environ.get("DEXFORGE_PURE_PYTHON"):
    from . import _pure as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _pure as _impl  # type: ignore[no-redef]

fk_frames = _impl.fk_frames
fk_tips_jac = _impl.fk_tips_jac
fps_select = _impl.fps_select


def backend() -> str:
    """Name of the active kernel backend: 'compiled' or 'pure'."""
    return _impl.backend_name()
