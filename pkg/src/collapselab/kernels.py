"""Backend selection for the sampling kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is. Set ``COLLAPSELAB_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("COLLAPSELAB_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
mix64 = _impl.mix64
to_unit = _impl.to_unit
trajectory_seeds = _impl.trajectory_seeds
stream_draws = _impl.stream_draws
sample_branch = _impl.sample_branch
run_batch = _impl.run_batch


def backends() -> dict:
    """All importable kernel modules keyed by name (used by tests and the benchmark)."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        found["cython"] = _kernels
    return found
