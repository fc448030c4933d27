"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python
fallback is behaviorally identical (same results under a node budget,
just slower). Set ``QUATRO_KERNELS=python`` or ``QUATRO_KERNELS=native``
to force a backend; the default is ``auto``.
"""

import os

_choice = os.environ.get("QUATRO_KERNELS", "auto").lower()

if _choice not in ("auto", "native", "python"):
    raise RuntimeError(f"QUATRO_KERNELS must be auto, native or python, got {_choice!r}")

if _choice == "python":
    from . import _python as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "native":
            raise
        from . import _python as _impl

BACKEND = _impl.BACKEND_NAME
max_clique = _impl.max_clique
spfh_bin_counts = _impl.spfh_bin_counts


def available_backends():
    names = ["python"]
    try:
        from . import _native  # noqa: F401
        names.insert(0, "native")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the kernel module for an explicit backend name."""
    if name == "python":
        from . import _python
        return _python
    if name == "native":
        from . import _native
        return _native
    raise ValueError(f"unknown kernel backend {name!r}")
