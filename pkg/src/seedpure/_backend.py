"""Select the compiled kernel module, falling back to numpy.

Set ``SEEDPURE_BACKEND=python`` to force the fallback.
"""
import os

from seedpure import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("SEEDPURE_BACKEND", "").lower() not in ("python", "py", "numpy"):
    try:
        from seedpure import _core as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        pass


def thread_count() -> int:
    """Worker cap from SEEDPURE_THREADS (0 or unset means one per CPU)."""
    raw = os.environ.get("SEEDPURE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n
