"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the NumPy
fallback is used. ``MATGARCH_BACKEND=python`` forces the fallback.
"""

import logging
import os

logger = logging.getLogger(__name__)

from . import _kernels_py as python_kernels

compiled_kernels = None
if os.environ.get("MATGARCH_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as compiled_kernels
    except ImportError:  # pragma: no cover - depends on the build
        logger.info("compiled kernels unavailable, using NumPy fallback")

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"
