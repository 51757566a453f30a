"""Selects the iteration kernel at import time.

Prefers the compiled extension and falls back to the pure-NumPy kernel
when the extension is unavailable or when ``MCOT_FORCE_NUMPY`` is set in
the environment.  Both kernels implement the same ``run_block`` contract;
they agree up to floating-point reassociation.
"""

from __future__ import annotations

import os

if os.environ.get("MCOT_FORCE_NUMPY"):
    from . import _kernel_np as _impl
    USING_COMPILED = False
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
        USING_COMPILED = True
    except ImportError:
        from . import _kernel_np as _impl
        USING_COMPILED = False

run_block = _impl.run_block
BACKEND_NAME = "compiled" if USING_COMPILED else "numpy"
