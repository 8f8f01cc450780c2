"""Kernel selection: compiled extension when built, numpy/Python otherwise.

Set ``RETROGRAPH_PURE=1`` to force the fallback.
"""

import os

BACKEND = "python"
if os.environ.get("RETROGRAPH_PURE", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import refine_ranks, scatter_add_rows  # noqa: F401

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass
if BACKEND == "python":
    from ._kernels_py import refine_ranks, scatter_add_rows  # noqa: F401
