"""Backend selection for the stepping kernels.

The compiled extension is preferred when it imports cleanly; the numpy
fallback is always available.  Set ``INCLUSIONLAB_BACKEND=python`` or
``=compiled`` to force a choice before import, or call :func:`use` at
runtime.  Both backends produce bit-identical results.
"""

import os

from . import py_kernels

_BACKENDS = {"python": py_kernels}

try:
    from . import _core
except ImportError:
    _core = None
else:
    _BACKENDS["compiled"] = _core


def available():
    """Names of the importable backends."""
    return sorted(_BACKENDS)


def get(name):
    """Fetch a backend module by name without activating it."""
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}, have {available()}")
    return _BACKENDS[name]


def use(name):
    """Switch the active backend; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}, have {available()}")
    prev = _active.NAME
    _active = _BACKENDS[name]
    return prev


def active():
    """The active backend module."""
    return _active


def name():
    return _active.NAME


_requested = os.environ.get("INCLUSIONLAB_BACKEND")
if _requested:
    if _requested not in _BACKENDS:
        raise ImportError(
            f"INCLUSIONLAB_BACKEND={_requested!r} is not available; "
            f"have {available()}"
        )
    _active = _BACKENDS[_requested]
else:
    _active = _BACKENDS.get("compiled", py_kernels)
