"""Pick the compiled kernel when available, else the NumPy one.

Set ``SOMPNS_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("SOMPNS_PURE_PYTHON") == "1":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        kernels = _kernels_py

NAME = "compiled" if kernels is not _kernels_py else "python"
