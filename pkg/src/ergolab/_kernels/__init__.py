"""Kernel backend selection.

The compiled extension is used when it imports; setting
``ERGOLAB_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("ERGOLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _fallback

sturm_count = _impl.sturm_count
em_paths = _impl.em_paths
uniforms = _impl.uniforms

__all__ = ["BACKEND", "sturm_count", "em_paths", "uniforms"]
