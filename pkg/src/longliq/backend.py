"""Kernel backend selection.

The compiled core is used when it imports; ``LONGLIQ_BACKEND=python`` forces
the numpy fallback.  ``LIQUI_THREADS`` caps the worker count.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _fallback


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


compiled = _load_compiled()


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module: 'compiled', 'python', or None for the default."""
    name = name or os.environ.get("LONGLIQ_BACKEND", "auto")
    if name == "python":
        return _fallback
    if name in ("compiled", "cython"):
        if compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return compiled
    if name != "auto":
        raise ValueError(f"unknown backend {name!r}")
    return compiled if compiled is not None else _fallback


def backend_name(mod: ModuleType | None = None) -> str:
    mod = mod or get_backend()
    return "python" if mod is _fallback else "compiled"


def thread_count() -> int:
    n = os.cpu_count() or 1
    cap = os.environ.get("LIQUI_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"LIQUI_THREADS must be an integer, got {cap!r}") from None
    return n
