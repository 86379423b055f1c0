"""Pick the compiled kernels when importable, else the pure-Python loops.

Set ``RNNET_PURE_PYTHON=1`` to force the fallback.
"""

import os

from rnnet.reservoir import _fallback

if os.environ.get("RNNET_PURE_PYTHON") == "1":
    kernels = _fallback
    NAME = "python"
else:
    try:
        from rnnet.reservoir import _kernels as kernels
        NAME = "cython"
    except ImportError:
        kernels = _fallback
        NAME = "python"

BACKENDS = {"python": _fallback}
if NAME == "cython":
    BACKENDS["cython"] = kernels
