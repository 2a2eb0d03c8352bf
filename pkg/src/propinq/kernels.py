"""Selects the compiled kernel when it was built, else the numpy fallback.

Set ``PROPINQ_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by the equivalence tests).
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PROPINQ_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

FOUND = _kernels_py.FOUND
EXHAUSTED = _kernels_py.EXHAUSTED
BUDGET = _kernels_py.BUDGET

pair_defect = _impl.pair_defect
search_pair = _impl.search_pair


@contextmanager
def use(backend: str):
    """Temporarily route the kernels through ``"python"`` or ``"cython"``."""
    global pair_defect, search_pair, BACKEND
    if backend == "python":
        impl = _kernels_py
    elif backend == "cython":
        from . import _kernels as impl
    else:
        raise ValueError(f"unknown kernel backend {backend!r}")
    saved = pair_defect, search_pair, BACKEND
    pair_defect, search_pair, BACKEND = impl.pair_defect, impl.search_pair, backend
    try:
        yield
    finally:
        pair_defect, search_pair, BACKEND = saved
