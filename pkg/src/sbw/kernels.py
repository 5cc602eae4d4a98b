"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels`` is used. Set ``SBW_PURE_PYTHON=1`` to
force the fallback.
"""

from __future__ import annotations

import os

if os.environ.get("SBW_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        from . import _pykernels as _impl

        BACKEND = "python"

optimal_total = _impl.optimal_total
fill_greedy = _impl.fill_greedy
best_response = _impl.best_response
node_utility = _impl.node_utility
gauss_seidel_sweep = _impl.gauss_seidel_sweep
grid_argmax = _impl.grid_argmax
draw_indices = _impl.draw_indices

__all__ = [
    "BACKEND",
    "optimal_total",
    "fill_greedy",
    "best_response",
    "node_utility",
    "gauss_seidel_sweep",
    "grid_argmax",
    "draw_indices",
]
