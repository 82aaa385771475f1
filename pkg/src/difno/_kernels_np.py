"""Pure-numpy activation kernels (fallback backend).

Evaluates a GELU-like activation sigma(x) = x * Phi(x) together with its
first and, optionally, second derivative in a single call.  The compiled
backend in ``_ckernels`` implements the same contract; ``kernels`` picks one
at import time.

Sigmoid kinds:
  0  standard normal CDF
  1  logistic
  2  tanh-of-cubic, Phi(x) = (1 + tanh(a1*(x + a2*x^3))) / 2
"""

import numpy as np
from scipy.special import expit, ndtr

BACKEND = "numpy"

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def sigma_eval(kind, x, a1, a2, order=1):
    """Evaluate sigma(x) and derivatives up to ``order`` (0, 1 or 2).

    Returns a tuple of ``order + 1`` float64 arrays shaped like ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if kind == 0:
        phi = ndtr(x)
        dens = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        val = x * phi
        if order == 0:
            return (val,)
        d1 = phi + x * dens
        if order == 1:
            return val, d1
        d2 = (2.0 - x * x) * dens
        return val, d1, d2
    if kind == 1:
        s = expit(x)
        val = x * s
        if order == 0:
            return (val,)
        sp = s * (1.0 - s)
        d1 = s + x * sp
        if order == 1:
            return val, d1
        d2 = 2.0 * sp + x * sp * (1.0 - 2.0 * s)
        return val, d1, d2
    if kind == 2:
        g = a1 * (x + a2 * x * x * x)
        t = np.tanh(g)
        phi = 0.5 * (1.0 + t)
        val = x * phi
        if order == 0:
            return (val,)
        sech2 = 1.0 - t * t
        gp = a1 * (1.0 + 3.0 * a2 * x * x)
        phi1 = 0.5 * sech2 * gp
        d1 = phi + x * phi1
        if order == 1:
            return val, d1
        gpp = 6.0 * a1 * a2 * x
        phi2 = 0.5 * sech2 * (gpp - 2.0 * t * gp * gp)
        d2 = 2.0 * phi1 + x * phi2
        return val, d1, d2
    raise ValueError(f"unknown sigmoid kind {kind}")
