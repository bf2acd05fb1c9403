"""Backend selection for the hot kernels.

The compiled extension ``specmarkov._kernels`` is used when it imports
cleanly; otherwise the NumPy fallback in ``specmarkov._kernels_py`` is
used. Setting ``SPECMARKOV_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("SPECMARKOV_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND

window_codes = _impl.window_codes
run_lengths = _impl.run_lengths
count_transitions = _impl.count_transitions
hamming_ties = _impl.hamming_ties
propagate_csr = _impl.propagate_csr
active_curves = _impl.active_curves


def available_backends():
    """Map of backend name to kernel module, for benchmarks and tests."""
    backends = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        backends["cython"] = _kernels
    return backends
