"""Sweep-kernel backend selection.

The compiled Gauss-Seidel core is preferred; the numpy Jacobi fallback is
used when the extension is missing or HJLAB_PURE_PYTHON=1 is set. Both
expose `semi_lagrangian_sweeps` and `upwind_fd_sweeps` with one signature.
"""

import os

from . import fallback

if os.environ.get("HJLAB_PURE_PYTHON", "0") == "1":
    _impl = fallback
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = fallback

BACKEND = _impl.BACKEND
semi_lagrangian_sweeps = _impl.semi_lagrangian_sweeps
upwind_fd_sweeps = _impl.upwind_fd_sweeps


def get_backend(name: str | None = None):
    """Return the kernel module for `name` in {"compiled", "python", None}."""
    if name in (None, BACKEND):
        return _impl
    if name == "python":
        return fallback
    if name == "compiled":
        from . import _core  # raises ImportError if not built

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
