"""Kernel backend selection.

Imports the compiled extension when it is available and silently falls back
to the pure-numpy implementation otherwise. Both backends expose the same
``conv_pool_forward`` / ``conv_pool_backward`` pair with identical semantics
(results agree to floating-point accumulation order).
"""

try:
    from . import _ckernels as _impl
except ImportError:  # extension not built; use the reference implementation
    from . import _pykernels as _impl

BACKEND: str = _impl.BACKEND
conv_pool_forward = _impl.conv_pool_forward
conv_pool_backward = _impl.conv_pool_backward
