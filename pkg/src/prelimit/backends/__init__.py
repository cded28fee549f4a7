"""Hot-loop kernels with a numba fast path and a pure-numpy fallback.

Selection is controlled by the ``STEIN_PRELIMIT_BACKEND`` environment
variable: ``numba`` (require the JIT path), ``numpy`` (force the fallback),
or ``auto`` (default: numba when importable).  Both implementations consume
identical pre-generated random pools and perform the same arithmetic per
replication, so results match bit for bit across backends.

``STEIN_PRELIMIT_THREADS`` caps the JIT path's parallelism.
"""

from __future__ import annotations

import importlib
import os

BACKEND_ENV = "STEIN_PRELIMIT_BACKEND"
THREADS_ENV = "STEIN_PRELIMIT_THREADS"

STATUS_DONE = 0
STATUS_EXHAUSTED = 1
STATUS_OOB = 2

_loaded: dict[str, object] = {}


def requested_backend() -> str:
    return os.environ.get(BACKEND_ENV, "auto").lower()


def _cap_threads() -> None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return
    import numba

    cap = max(1, int(raw))
    numba.set_num_threads(min(cap, numba.config.NUMBA_NUM_THREADS))


def get_kernels(name: str | None = None):
    """Return the kernel module for the requested backend."""
    choice = (name or requested_backend()).lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}")
    if choice in _loaded:
        return _loaded[choice]
    mod = None
    if choice in ("auto", "numba"):
        try:
            mod = importlib.import_module(".numba_kernels", __name__)
            _cap_threads()
        except ImportError:
            if choice == "numba":
                raise
    if mod is None:
        mod = importlib.import_module(".numpy_kernels", __name__)
    _loaded[choice] = mod
    return mod


def active_backend_name(name: str | None = None) -> str:
    return get_kernels(name).BACKEND_NAME
