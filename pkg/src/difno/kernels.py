"""Backend selection for the fused activation kernels.

The compiled extension is preferred when available; setting the environment
variable ``DIFNO_PURE_PYTHON`` (to any non-empty value) forces the numpy
fallback.  Both backends expose ``sigma_eval(kind, x, a1, a2, order)`` and
agree to rounding; see tests and benchmarks/bench_kernels.py.
"""

import os

if os.environ.get("DIFNO_PURE_PYTHON"):
    from . import _kernels_np as _impl
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_np as _impl

BACKEND = _impl.BACKEND
sigma_eval = _impl.sigma_eval

KIND_NORMAL = 0
KIND_LOGISTIC = 1
KIND_TANH_CUBIC = 2
