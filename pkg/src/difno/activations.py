"""GELU-like activations and the calibrated function constructions.

An activation here is sigma(x) = x * Phi(x) for a sigmoid Phi with
Phi(x) + Phi(-x) = 1, which gives the exact identity
sigma(x) - sigma(-x) = x used by several constructions below:

* ``clip_eval``      smooth clipping to [-b/2, b/2] scale, exact zero at 0;
* ``cutoff_eval``    smooth transition 1 -> 0 across [b, b+1];
* ``absval_eval``    smooth |x| with a closed-form error 2*sigma(-theta|x|)/theta;
* ``identity_eval``  odd rescaled difference reproducing x as theta -> 0;
* ``cutoff_functional``  a smooth function-space cutoff built from the two.

Each construction ships with a calibration routine that searches the scale
parameter (doubling, or halving for the identity) until a dense-grid
certification passes, and records the global bound constants.  Suprema
"over the line" are taken on a wide scan grid [-1e3, 1e3] with a dense core;
the error curves are exponentially flat in the tails, which the scan checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import spectral as sp

_KINDS = {
    "normal": kernels.KIND_NORMAL,
    "logistic": kernels.KIND_LOGISTIC,
    "tanh-cubic": kernels.KIND_TANH_CUBIC,
}

TANH_CUBIC_A1 = float(np.sqrt(2.0 / np.pi))
TANH_CUBIC_A2 = 0.044715


@dataclass(frozen=True)
class GeluLike:
    """sigma(x) = x * Phi(x) for one of three admissible sigmoids."""

    sigmoid: str = "normal"
    a1: float = TANH_CUBIC_A1
    a2: float = TANH_CUBIC_A2

    def __post_init__(self):
        if self.sigmoid not in _KINDS:
            raise ValueError(
                f"sigmoid must be one of {sorted(_KINDS)}, got {self.sigmoid!r}"
            )

    @property
    def _kind(self):
        return _KINDS[self.sigmoid]

    def phi(self, x):
        x = np.asarray(x, dtype=np.float64)
        val = kernels.sigma_eval(self._kind, x, self.a1, self.a2, 0)[0]
        out = np.where(x != 0.0, val / np.where(x == 0.0, 1.0, x), 0.5)
        return out

    def sigma(self, x):
        return kernels.sigma_eval(self._kind, x, self.a1, self.a2, 0)[0]

    def sigma_and_deriv(self, x):
        return kernels.sigma_eval(self._kind, x, self.a1, self.a2, 1)

    def sigma_derivs(self, x):
        """(sigma, sigma', sigma'') in one pass."""
        return kernels.sigma_eval(self._kind, x, self.a1, self.a2, 2)


class IdentityActivation:
    """Linearization seam for derivative oracles: sigma(x) = x.

    Test-only.  Run configurations can only name GeluLike sigmoids, so a
    trained model never uses this.
    """

    def sigma(self, x):
        return np.asarray(x, dtype=np.float64).copy()

    def sigma_and_deriv(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x.copy(), np.ones_like(x)

    def sigma_derivs(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x.copy(), np.ones_like(x), np.zeros_like(x)


# ---------------------------------------------------------------------------
# scan helpers

def _wide_grid():
    """[-1e3, 1e3]: dense core where the curvature lives, coarse flat tails."""
    core = np.arange(-32.0, 32.0, 1e-3)
    tail = np.arange(32.0, 1000.0, 0.25)
    return np.concatenate([-tail[::-1], core, tail, [1000.0]])


def sup_sigma_prime(act: GeluLike) -> float:
    _, d1 = act.sigma_and_deriv(_wide_grid())
    return float(np.max(np.abs(d1)))


def sup_sigma_neg(act: GeluLike) -> float:
    """sup over t <= 0 of |sigma(t)|; sigma vanishes at -inf, so a scan
    of [-32, 0] brackets the interior maximum."""
    t = np.arange(-32.0, 0.0, 1e-4)
    return float(np.max(np.abs(act.sigma(t))))


def activation_report(act: GeluLike) -> dict:
    """Numerical check of the defining limits, for the verify command."""
    big = 30.0
    v_pos, d_pos = act.sigma_and_deriv(np.array([big]))
    v_neg, d_neg = act.sigma_and_deriv(np.array([-big]))
    return {
        "sup_sigma_prime": sup_sigma_prime(act),
        "sup_sigma_neg": sup_sigma_neg(act),
        "pos_limit_value_gap": float(abs(v_pos[0] - big)),
        "pos_limit_deriv_gap": float(abs(d_pos[0] - 1.0)),
        "neg_limit_value": float(abs(v_neg[0])),
        "neg_limit_deriv": float(abs(d_neg[0])),
    }


# ---------------------------------------------------------------------------
# constructions

def clip_eval(act, x, theta: float, b: float):
    """[sigma(theta(x+b)) - sigma(theta(x-b))] / theta - b.

    Odd, exactly zero at 0, tends to +-b in the tails; with b = 2R it
    reproduces x on [-R, R] once theta is large enough.
    """
    x = np.asarray(x, dtype=np.float64)
    return (act.sigma(theta * (x + b)) - act.sigma(theta * (x - b))) / theta - b


def clip_deriv(act, x, theta: float, b: float):
    x = np.asarray(x, dtype=np.float64)
    d_hi = act.sigma_and_deriv(theta * (x + b))[1]
    d_lo = act.sigma_and_deriv(theta * (x - b))[1]
    return d_hi - d_lo


def cutoff_eval(act, x, theta: float, b: float):
    """[sigma(theta(x-b-1)) - sigma(theta(x-b))] / theta + 1.

    Close to 1 for x <= b, close to 0 for x >= b + 1 (the shifted pair sits
    at b and b+1; the transition happens on that unit interval).
    """
    x = np.asarray(x, dtype=np.float64)
    return (act.sigma(theta * (x - b - 1.0)) - act.sigma(theta * (x - b))) / theta + 1.0


def cutoff_deriv(act, x, theta: float, b: float):
    x = np.asarray(x, dtype=np.float64)
    d_hi = act.sigma_and_deriv(theta * (x - b - 1.0))[1]
    d_lo = act.sigma_and_deriv(theta * (x - b))[1]
    return d_hi - d_lo


def absval_eval(act, x, theta: float):
    """[sigma(theta x) + sigma(-theta x)] / theta.

    Equals |x| + 2 sigma(-theta|x|)/theta with sigma <= 0 on the negative
    axis, so the construction sits in [|x| - 2 sup_{t<=0}|sigma(t)|/theta,
    |x|] everywhere on the line and is nonnegative.
    """
    x = np.asarray(x, dtype=np.float64)
    u = theta * x
    return (act.sigma(u) + act.sigma(-u)) / theta


def absval_deriv(act, x, theta: float):
    x = np.asarray(x, dtype=np.float64)
    u = theta * x
    return act.sigma_and_deriv(u)[1] - act.sigma_and_deriv(-u)[1]


def identity_eval(act, x, theta: float, x0: float = 1.0):
    """[sigma(x0 + theta x) - sigma(x0 - theta x)] / (2 theta sigma'(x0)).

    Reproduces x as theta -> 0; the error on [-R, R] is bounded by
    theta * M0 with M0 from ``identity_bound_constant``.
    """
    x = np.asarray(x, dtype=np.float64)
    d0 = act.sigma_and_deriv(np.array([x0]))[1][0]
    if abs(d0) < 1e-12:
        raise ValueError(f"sigma'({x0}) too small for the identity construction")
    return (act.sigma(x0 + theta * x) - act.sigma(x0 - theta * x)) / (2.0 * theta * d0)


def identity_deriv(act, x, theta: float, x0: float = 1.0):
    """d/dx of identity_eval: [sigma'(x0+theta x) + sigma'(x0-theta x)] / (2 sigma'(x0))."""
    x = np.asarray(x, dtype=np.float64)
    d0 = act.sigma_and_deriv(np.array([x0]))[1][0]
    if abs(d0) < 1e-12:
        raise ValueError(f"sigma'({x0}) too small for the identity construction")
    d_hi = act.sigma_and_deriv(x0 + theta * x)[1]
    d_lo = act.sigma_and_deriv(x0 - theta * x)[1]
    return (d_hi + d_lo) / (2.0 * d0)


def identity_bound_constant(act, radius: float, x0: float = 1.0) -> float:
    """M0 = (R^2/2) * sup_xi |sigma''(x0+xi) - sigma''(x0-xi)| / (2 |sigma'(x0)|).

    The sup is taken over the wide scan grid, an upper bound for the proof's
    range |xi| <= theta R.
    """
    xi = _wide_grid()
    d0 = act.sigma_and_deriv(np.array([x0]))[1][0]
    d2p = act.sigma_derivs(x0 + xi)[2]
    d2m = act.sigma_derivs(x0 - xi)[2]
    sup = float(np.max(np.abs(d2p - d2m)))
    return radius**2 / 2.0 * sup / (2.0 * abs(d0))


# ---------------------------------------------------------------------------
# calibration

@dataclass(frozen=True)
class CalibrationResult:
    theta: float
    b: float
    achieved: float      # certified sup error on the scan grids
    bound: float         # recorded global bound constant
    iterations: int


THETA_LIMIT = 1e8


def _core_grid(lo, hi, eps):
    step = min(1e-3, eps / 10.0)
    return np.arange(lo, hi + step, step)


def calibrate_clip(act, radius: float, eps: float) -> CalibrationResult:
    """Find theta so that clip_eval matches x on [-R, R] within eps (b = 2R).

    Doubles theta from 1; fails above 1e8.  Also certifies the global bound
    |clip| <= b + eps on the wide grid.
    """
    b = 2.0 * radius
    core = _core_grid(-radius, radius, eps)
    wide = _wide_grid()
    theta, it = 1.0, 0
    while theta <= THETA_LIMIT:
        it += 1
        err = float(np.max(np.abs(clip_eval(act, core, theta, b) - core)))
        if err <= eps:
            g = float(np.max(np.abs(clip_eval(act, wide, theta, b))))
            if g <= b + eps:
                return CalibrationResult(theta, b, max(err, 0.0), b + eps, it)
        theta *= 2.0
    raise RuntimeError(f"clip calibration failed below theta = {THETA_LIMIT}")


def calibrate_cutoff(act, b: float, eps: float) -> CalibrationResult:
    """Find theta with |cutoff - 1| <= eps for x <= b and |cutoff| <= eps for
    x >= b + 1; records the global bound M = 2 sup|sigma'| + 1."""
    lo = np.concatenate([_core_grid(b - 10.0, b, eps), b - 10.0 - np.arange(0, 990, 0.25)])
    hi = np.concatenate([_core_grid(b + 1.0, b + 11.0, eps), b + 11.0 + np.arange(0, 990, 0.25)])
    wide = _wide_grid()
    m_cut = 2.0 * sup_sigma_prime(act) + 1.0
    theta, it = 1.0, 0
    while theta <= THETA_LIMIT:
        it += 1
        e_lo = float(np.max(np.abs(cutoff_eval(act, lo, theta, b) - 1.0)))
        e_hi = float(np.max(np.abs(cutoff_eval(act, hi, theta, b))))
        err = max(e_lo, e_hi)
        if err <= eps:
            g = float(np.max(np.abs(cutoff_eval(act, wide, theta, b))))
            if g <= m_cut:
                return CalibrationResult(theta, b, err, m_cut, it)
        theta *= 2.0
    raise RuntimeError(f"cutoff calibration failed below theta = {THETA_LIMIT}")


def calibrate_absval(act, eps: float) -> CalibrationResult:
    """theta = 2 sup_{t<=0}|sigma(t)| / eps (closed form), then certify the
    scan; the recorded bound is the derivative bound 2 sup|sigma'|."""
    s_neg = sup_sigma_neg(act)
    theta = max(2.0 * s_neg / eps, 1.0)
    core = _core_grid(-2.0, 2.0, eps)
    wide = _wide_grid()
    grid = np.concatenate([core, wide])
    vals = absval_eval(act, grid, theta)
    err_grid = vals - np.abs(grid)
    slop = 1e-12 * (1.0 + np.abs(grid))
    if np.any(err_grid > slop) or np.any(vals < -slop):
        raise RuntimeError("absval construction left the [0, |x|] envelope")
    err = float(np.max(np.abs(err_grid)))
    if err > eps:
        raise RuntimeError(f"absval certification failed: {err} > {eps}")
    return CalibrationResult(theta, 0.0, err, 2.0 * sup_sigma_prime(act), 1)


def calibrate_identity(act, radius: float, eps: float, x0: float = 1.0) -> CalibrationResult:
    """Halve theta from 1 until the C1 error of Id_theta on [-R, R] is <= eps.

    Certifies both |Id_theta(x) - x| and |Id_theta'(x) - 1| on the scan grid;
    the construction sharpens as theta shrinks (mirror image of the doubling
    searches) and fails below 1e-8.  Records the proof bound M0*theta, which
    the achieved error must not exceed.
    """
    core = _core_grid(-radius, radius, eps)
    m0 = identity_bound_constant(act, radius, x0)
    theta, it = 1.0, 0
    while theta >= 1e-8:
        it += 1
        e_val = float(np.max(np.abs(identity_eval(act, core, theta, x0) - core)))
        e_der = float(np.max(np.abs(identity_deriv(act, core, theta, x0) - 1.0)))
        err = max(e_val, e_der)
        bound = m0 * theta
        if err <= eps and err <= bound:
            return CalibrationResult(theta, x0, err, bound, it)
        theta *= 0.5
    raise RuntimeError("identity calibration failed above theta = 1e-8")


# ---------------------------------------------------------------------------
# norm equivalence constants on the band-limited space and the functional

def l1_l2_constants(dim: int, cutoff: int, iters: int = 200):
    """(C12, C21) with ||v||_1 <= C12 ||v||_2 and ||v||_2 <= C21 ||v||_1 on
    the space of modes |k|_inf <= cutoff.

    C12 = (2 pi)^{d/2}, attained by constants (checked by maximization).
    C21 is estimated by projected subgradient descent minimizing the L1 norm
    on the L2 sphere, started from the concentrated Dirichlet kernel; the
    analytic bracket sqrt(K)/(2 pi)^{d/2} >= C21 >= Dirichlet ratio is
    asserted in tests.
    """
    n = 8
    while n < 4 * (cutoff + 1):
        n *= 2
    grid = sp.GridSpec(dim, n)
    cell = grid.cell_measure

    def l1(v):
        return cell * np.sum(np.abs(v))

    def l2(v):
        return np.sqrt(cell * np.sum(v * v))

    def proj(v):
        return sp.project_modes(sp.GridFunction(v[None], grid), cutoff).values[0]

    # C12 by fixed point v <- normalize_2(P sign(v)) from a positive start
    v = np.ones(grid.shape)
    for _ in range(20):
        w = proj(np.sign(v))
        v = w / l2(w)
    c12 = l1(v)

    # C21: minimize the L1 norm on the L2 sphere
    modes = sp.mode_list(cutoff, dim)
    dirichlet = sp.scatter_modes(
        np.ones((1, len(modes)), dtype=np.complex128), grid, modes
    )
    v = sp.ifft_values(dirichlet, dim).real[0]
    v = v / l2(v)
    best = 1.0 / l1(v)
    step = 0.2
    for _ in range(iters):
        g = proj(np.sign(v))
        w = v - step * g * cell
        w = proj(w)
        nrm = l2(w)
        if nrm < 1e-12:
            break
        w = w / nrm
        if 1.0 / l1(w) >= best:
            v, best = w, 1.0 / l1(w)
        else:
            step *= 0.5
    return float(c12), float(best)


@dataclass(frozen=True)
class CutoffFunctionalParams:
    """Calibrated smooth cutoff on the channel-summed L1 mass of a field."""

    theta_abs: float
    theta_cut: float
    b: float
    c12: float
    c21: float
    curly_c: float   # 6 C12 / C21 + 1/2
    m_abs: float     # 2 sup |sigma'|
    m_cut: float     # 2 sup |sigma'| + 1
    m: float         # m_cut * max(1, m_abs * c12)


def cutoff_functional_params(
    act, dim: int, cutoff: int, b: float, eps: float
) -> CutoffFunctionalParams:
    cal_abs = calibrate_absval(act, eps)
    cal_cut = calibrate_cutoff(act, b, eps)
    c12, c21 = l1_l2_constants(dim, cutoff)
    m_abs = 2.0 * sup_sigma_prime(act)
    m_cut = m_abs + 1.0
    return CutoffFunctionalParams(
        theta_abs=cal_abs.theta,
        theta_cut=cal_cut.theta,
        b=b,
        c12=c12,
        c21=c21,
        curly_c=6.0 * c12 / c21 + 0.5,
        m_abs=m_abs,
        m_cut=m_cut,
        m=m_cut * max(1.0, m_abs * c12),
    )


def _l1_mass(act, v: sp.GridFunction, params) -> float:
    vals = absval_eval(act, v.values, params.theta_abs)
    return float(v.grid.cell_measure * np.sum(vals))


def cutoff_functional(act, v: sp.GridFunction, params: CutoffFunctionalParams) -> float:
    """f_cutoff of the smoothed channel-summed L1 mass of v."""
    return float(cutoff_eval(act, _l1_mass(act, v, params), params.theta_cut, params.b))


def cutoff_functional_deriv(
    act, v: sp.GridFunction, params: CutoffFunctionalParams
) -> sp.GridFunction:
    """L2-Riesz representative of the derivative.

    DF(v) w = f_cutoff'(S(v)) * \\int sum_i f_abs'(v_i(x)) w_i(x) dx, so the
    representative field is the outer scalar times f_abs'(v).
    """
    s = _l1_mass(act, v, params)
    outer = float(cutoff_deriv(act, s, params.theta_cut, params.b))
    inner = absval_deriv(act, v.values, params.theta_abs)
    return sp.GridFunction(outer * inner, v.grid)
