"""Kernel selection.

The compiled ``_kernels`` extension is used when it was built; otherwise the
pure-Python fallback.  Set ``MV3C_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("MV3C_PURE_PYTHON"):
    from mv3c._kernels_py import row_matches, scan_chains, visible_value

    COMPILED = False
else:
    try:
        from mv3c._kernels import row_matches, scan_chains, visible_value

        COMPILED = True
    except ImportError:
        from mv3c._kernels_py import row_matches, scan_chains, visible_value

        COMPILED = False

__all__ = ["COMPILED", "row_matches", "scan_chains", "visible_value"]
