"""Backend selection for the inner-loop kernels.

The compiled extension is used when it imports; otherwise the pure-Python
module is used. Set ``KINN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("KINN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

css_filter = _impl.css_filter
css_value = _impl.css_value
durbin_levinson = _impl.durbin_levinson

__all__ = ["BACKEND", "css_filter", "css_value", "durbin_levinson"]
