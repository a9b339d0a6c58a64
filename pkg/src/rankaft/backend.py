"""Kernel backend selection.

The estimating-function inner loop has two interchangeable
implementations: a compiled Cython extension (``rankaft._kernel``) and a
pure-numpy twin (``rankaft._kernel_py``).  The compiled one is preferred
when importable; set ``RANKAFT_KERNEL=python`` or ``RANKAFT_KERNEL=compiled``
to force a choice.  Selection happens once at import.
"""
import os

from . import _kernel_py

_FORCED = os.environ.get("RANKAFT_KERNEL", "").strip().lower()

try:
    from . import _kernel as _compiled
except ImportError:
    _compiled = None

if _FORCED == "python":
    _active = _kernel_py
elif _FORCED == "compiled":
    if _compiled is None:
        raise ImportError(
            "RANKAFT_KERNEL=compiled but the extension rankaft._kernel is "
            "not built; install with the C extension or unset the variable")
    _active = _compiled
elif _FORCED == "":
    _active = _compiled if _compiled is not None else _kernel_py
else:
    raise ImportError(
        f"RANKAFT_KERNEL={_FORCED!r} not understood; "
        "use 'compiled' or 'python'")

estfun_core = _active.estfun_core


def kernel_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return _active.KERNEL_NAME


def available_kernels() -> tuple[str, ...]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return tuple(names)


def get_kernel(name: str):
    """Fetch a specific kernel module by name, for tests and benchmarks."""
    if name == "python":
        return _kernel_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernel is not available")
        return _compiled
    raise ValueError(f"unknown kernel {name!r}")


def use_kernel(name: str):
    """Switch the active kernel in place, for tests and benchmarks.

    Returns the previously active name so callers can restore it.
    """
    global _active, estfun_core
    previous = _active.KERNEL_NAME
    _active = get_kernel(name)
    estfun_core = _active.estfun_core
    return previous
