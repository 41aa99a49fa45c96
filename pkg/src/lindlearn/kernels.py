"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``LINDLEARN_BACKEND=python`` is set, the NumPy reference
implementation is used. Both expose ``forward`` and ``backward`` with the same
signature.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

__all__ = ["BACKEND", "get_backend", "available_backends"]


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        name = BACKEND
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; reinstall the package")
        return _compiled
    if name == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {name!r}")


_requested = os.environ.get("LINDLEARN_BACKEND", "").strip().lower()
if _requested == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"
