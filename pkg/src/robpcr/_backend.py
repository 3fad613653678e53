"""Selection of the reversible-jump kernel implementation.

The compiled kernel is used when it imports; setting ``ROBPCR_PURE_PYTHON=1``
forces the pure-Python one.
"""
from __future__ import annotations

import os

from . import _pykernels

__all__ = ["BACKEND", "get_kernel", "available_backends"]

_compiled = None
if os.environ.get("ROBPCR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def available_backends():
    return ("cython", "python") if _compiled is not None else ("python",)


def get_kernel(name: str | None = None):
    """Kernel module for ``name`` (``"cython"``, ``"python"`` or the default)."""
    name = BACKEND if name is None else name
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("the compiled kernel is not available; rebuild the package")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
