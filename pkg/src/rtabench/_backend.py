"""Kernel backend selection.

The hot kernels exist twice: a Cython extension (``rtabench._kernels``)
and a pure-numpy fallback (``rtabench._pykernels``) with the same
surface. The compiled backend is preferred at import; set
``RTA_BENCH_BACKEND=python`` (or ``compiled``) to force one, and pass
``backend="python"``/``"compiled"`` to filters and solvers to override
per object. ``rta-bench kernels`` benchmarks the two side by side.
"""

from __future__ import annotations

import os

from . import _pykernels

_FORCED = os.environ.get("RTA_BENCH_BACKEND", "auto").strip().lower() or "auto"

if _FORCED not in ("auto", "python", "compiled"):
    raise RuntimeError(f"unknown RTA_BENCH_BACKEND value: {_FORCED!r}")

_compiled = None
if _FORCED in ("auto", "compiled"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        if _FORCED == "compiled":
            raise
        _compiled = None

if _compiled is not None:
    DEFAULT_BACKEND = "compiled"
    _default = _compiled
else:
    DEFAULT_BACKEND = "python"
    _default = _pykernels


def get_backend(name=None):
    """Return a kernel module: None/'auto' for the default selection."""
    if name is None or name == "auto":
        return _default
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    if hasattr(name, "qp_solve"):
        return name
    raise ValueError(f"unknown backend: {name!r}")


def available_backends() -> tuple:
    """Names of the importable kernel backends."""
    return ("python", "compiled") if _compiled is not None else ("python",)
