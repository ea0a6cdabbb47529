"""Sweep kernel selection: compiled extension when available, else the
pure-Python fallback. The two produce bit-identical results; the compiled
one is just much faster. ``SODTA_KERNEL=python`` forces the fallback."""

from __future__ import annotations

import os

from . import fallback as _fallback

try:
    from . import _hildreth as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_default = "compiled" if _compiled is not None else "python"
if os.environ.get("SODTA_KERNEL") in _BACKENDS:
    _default = os.environ["SODTA_KERNEL"]
_active = _default


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def backend_name() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}")
    _active = name


def run_sweeps(*args):
    return _BACKENDS[_active].run_sweeps(*args)
