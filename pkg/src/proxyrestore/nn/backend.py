"""Kernel backend chosen at import: compiled extension if built, else numpy.

Set ``PROXYRESTORE_BACKEND=python`` to force the numpy kernels.
"""

import os

from . import _core_py

NAME = "python"
mlp_forward = _core_py.mlp_forward
mlp_backward = _core_py.mlp_backward

if os.environ.get("PROXYRESTORE_BACKEND", "").lower() not in ("python", "py", "numpy"):
    try:
        from . import _core
    except ImportError:  # extension not built
        pass
    else:
        NAME = "compiled"
        mlp_forward = _core.mlp_forward
        mlp_backward = _core.mlp_backward
