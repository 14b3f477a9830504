"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. ``TRIMSGD_BACKEND=python`` forces the fallback and
``TRIMSGD_BACKEND=compiled`` makes a missing extension an import error.
Both backends produce bit-identical results.
"""

import os

from trimsgd import _pykernels

_choice = os.environ.get("TRIMSGD_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _pykernels
elif _choice in ("auto", "compiled"):
    try:
        from trimsgd import _ckernels as _impl
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _pykernels
else:
    raise ImportError(f"TRIMSGD_BACKEND must be auto, compiled or python, got {_choice!r}")

BACKEND = _impl.BACKEND

matmul = _impl.matmul
matmul_tn = _impl.matmul_tn
colsum = _impl.colsum
im2col = _impl.im2col
col2im = _impl.col2im
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward
next_u64 = _impl.next_u64
fill_uniform = _impl.fill_uniform
bounded_ints = _impl.bounded_ints
permutation = _impl.permutation
label_noise = _impl.label_noise
argsort_stable = _impl.argsort_stable


def available_backends():
    """Return ``{name: module}`` for every backend importable in this process."""
    found = {"python": _pykernels}
    try:
        from trimsgd import _ckernels

        found["compiled"] = _ckernels
    except ImportError:
        pass
    return found
