"""Kernel backend selection.

The package ships two implementations of the dense kernels that dominate
the acceleration step: a Cython extension (``aamix._kernels``) and a NumPy
fallback (``aamix._kernels_py``). The compiled one is preferred when it
imported cleanly; ``AAMIX_KERNELS=python`` or ``AAMIX_KERNELS=compiled``
forces a choice, and tests/benchmarks can switch at runtime with
:func:`use_backend`.
"""

import os

from aamix import _kernels_py

try:
    from aamix import _kernels as _compiled
except ImportError:
    _compiled = None

_MODULES = {"python": _kernels_py}
if _compiled is not None:
    _MODULES["compiled"] = _compiled


def _initial_choice():
    forced = os.environ.get("AAMIX_KERNELS", "").strip().lower()
    if forced:
        if forced not in ("python", "compiled"):
            raise ValueError(f"AAMIX_KERNELS must be 'python' or 'compiled', got {forced!r}")
        if forced == "compiled" and _compiled is None:
            raise ImportError("AAMIX_KERNELS=compiled but the extension is not built")
        return forced
    return "compiled" if _compiled is not None else "python"


_active = _initial_choice()


def available_backends():
    return tuple(sorted(_MODULES))


def active_backend():
    """Name of the backend currently in use."""
    return _active


def use_backend(name):
    """Switch the active backend; returns the previously active name."""
    global _active
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    previous = _active
    _active = name
    return previous


def kernels():
    """The module implementing the active backend."""
    return _MODULES[_active]
