"""Backend selection for the hot kernels.

The compiled extension is used when importable; ``ADAPTW_PURE_PYTHON=1``
forces the pure-Python fallback (same algorithms, same results).
"""
import os

if os.environ.get("ADAPTW_PURE_PYTHON", "") not in ("", "0"):
    from adaptw import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from adaptw import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from adaptw import _kernels_py as _impl
        BACKEND = "python"

OPTIMAL = _impl.OPTIMAL
ITERATION_LIMIT = _impl.ITERATION_LIMIT
transport_simplex = _impl.transport_simplex
w1_sorted_cdf = _impl.w1_sorted_cdf
w1_pairs = _impl.w1_pairs
dp_level = _impl.dp_level

__all__ = [
    "BACKEND",
    "OPTIMAL",
    "ITERATION_LIMIT",
    "transport_simplex",
    "w1_sorted_cdf",
    "w1_pairs",
    "dp_level",
]
