"""Kernel backend selection.

The compiled core is used when it imports; otherwise the numpy fallback.
Setting ``NSLAB_PURE_PYTHON=1`` forces the fallback. Both backends return
bit-identical results.
"""
from __future__ import annotations

import os
from types import ModuleType

from nslab import _core_py

MODE_MAX = _core_py.MODE_MAX
MODE_MIN = _core_py.MODE_MIN
MODE_CLOSEST = _core_py.MODE_CLOSEST


def _load_compiled() -> ModuleType | None:
    try:
        from nslab import _core
    except ImportError:
        return None
    return _core


_compiled = _load_compiled()

if _compiled is not None and not os.environ.get("NSLAB_PURE_PYTHON"):
    _impl: ModuleType = _compiled
    BACKEND = "cython"
else:
    _impl = _core_py
    BACKEND = "numpy"


def available_backends() -> dict[str, ModuleType]:
    backends = {"numpy": _core_py}
    if _compiled is not None:
        backends["cython"] = _compiled
    return backends


ordered_matmul = _impl.ordered_matmul
segment_mean = _impl.segment_mean
scatter_add_rows = _impl.scatter_add_rows
row_select = _impl.row_select
mean_max_scores = _impl.mean_max_scores
mean_max_backward = _impl.mean_max_backward
relevant_ranks = _impl.relevant_ranks
