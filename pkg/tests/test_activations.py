"""Activations: sigmoid identities, derivative oracles, calibrations.

Derivative values are checked against central finite differences; the
constructed functions are checked against their defining algebraic
identities (sigma(x) - sigma(-x) = x and the closed-form absval error)
before any calibration is trusted.
"""

import numpy as np
import pytest

from difno import activations as ac
from difno import kernels
from difno import spectral as sp
from difno._kernels_np import sigma_eval as sigma_np

ACTS = [
    ac.GeluLike("normal"),
    ac.GeluLike("logistic"),
    ac.GeluLike("tanh-cubic"),
]

GRID = np.linspace(-6.0, 6.0, 241)


class TestKernels:
    def test_backend_registered(self):
        assert kernels.BACKEND in ("numpy", "cython")

    @pytest.mark.parametrize("kind", [0, 1, 2])
    def test_backends_agree(self, kind):
        x = np.linspace(-8, 8, 1001)
        a = kernels.sigma_eval(kind, x, ac.TANH_CUBIC_A1, ac.TANH_CUBIC_A2, 2)
        b = sigma_np(kind, x, ac.TANH_CUBIC_A1, ac.TANH_CUBIC_A2, 2)
        for u, v in zip(a, b):
            assert np.max(np.abs(u - v)) < 1e-13

    def test_shape_preserved(self):
        x = np.ones((3, 4, 5))
        (v,) = kernels.sigma_eval(0, x, 0, 0, 0)
        assert v.shape == (3, 4, 5)


class TestGeluLike:
    @pytest.mark.parametrize("act", ACTS)
    def test_sigmoid_point_symmetry(self, act):
        # Phi(x) + Phi(-x) = 1 on a sample grid
        assert np.max(np.abs(act.phi(GRID) + act.phi(-GRID) - 1.0)) < 1e-12

    @pytest.mark.parametrize("act", ACTS)
    def test_shift_identity(self, act):
        # sigma(x) - sigma(-x) = x, consequence of the point symmetry
        s = act.sigma(GRID)
        s_neg = act.sigma(-GRID)
        assert np.max(np.abs(s - s_neg - GRID)) < 1e-12

    @pytest.mark.parametrize("act", ACTS)
    def test_first_derivative_fd(self, act):
        h = 1e-5
        fd = (act.sigma(GRID + h) - act.sigma(GRID - h)) / (2 * h)
        d1 = act.sigma_and_deriv(GRID)[1]
        assert np.max(np.abs(d1 - fd)) < 1e-8

    @pytest.mark.parametrize("act", ACTS)
    def test_second_derivative_fd(self, act):
        h = 1e-4
        fd = (act.sigma(GRID + h) - 2 * act.sigma(GRID) + act.sigma(GRID - h)) / h**2
        d2 = act.sigma_derivs(GRID)[2]
        assert np.max(np.abs(d2 - fd)) < 1e-6

    @pytest.mark.parametrize("act", ACTS)
    def test_limits(self, act):
        rep = ac.activation_report(act)
        assert rep["pos_limit_value_gap"] < 1e-10
        assert rep["pos_limit_deriv_gap"] < 1e-10
        assert rep["neg_limit_value"] < 1e-10
        assert rep["neg_limit_deriv"] < 1e-10

    def test_normal_sup_sigma_prime(self):
        # interior max at x = sqrt(2): Phi(sqrt(2)) + sqrt(2) phi(sqrt(2))
        from scipy.special import ndtr

        x = np.sqrt(2.0)
        expect = ndtr(x) + x * np.exp(-1.0) / np.sqrt(2 * np.pi)
        assert np.isclose(ac.sup_sigma_prime(ac.GeluLike("normal")), expect, atol=1e-6)

    def test_unknown_sigmoid(self):
        with pytest.raises(ValueError):
            ac.GeluLike("relu")


class TestIdentityActivation:
    def test_passthrough(self):
        act = ac.IdentityActivation()
        v, d1, d2 = act.sigma_derivs(GRID)
        assert np.array_equal(v, GRID)
        assert np.all(d1 == 1.0)
        assert np.all(d2 == 0.0)


class TestClip:
    @pytest.mark.parametrize("act", ACTS)
    def test_odd_and_zero_at_origin(self, act):
        y = ac.clip_eval(act, GRID, 3.0, 2.0)
        y_neg = ac.clip_eval(act, -GRID, 3.0, 2.0)
        assert np.max(np.abs(y + y_neg)) < 1e-12
        assert abs(ac.clip_eval(act, np.array([0.0]), 3.0, 2.0)[0]) < 1e-14

    @pytest.mark.parametrize("act", ACTS)
    def test_calibration(self, act):
        eps, radius = 1e-3, 2.0
        res = ac.calibrate_clip(act, radius, eps)
        assert res.b == 2 * radius
        assert res.achieved <= eps
        # independent spot check off the calibration grid
        x = np.linspace(-radius, radius, 1237)
        assert np.max(np.abs(ac.clip_eval(act, x, res.theta, res.b) - x)) <= 1.1 * eps
        # global bound
        far = np.array([-500.0, -7.0, 7.0, 500.0])
        assert np.max(np.abs(ac.clip_eval(act, far, res.theta, res.b))) <= res.bound

    def test_deriv_fd(self):
        act = ACTS[0]
        h = 1e-6
        fd = (
            ac.clip_eval(act, GRID + h, 4.0, 2.0) - ac.clip_eval(act, GRID - h, 4.0, 2.0)
        ) / (2 * h)
        assert np.max(np.abs(ac.clip_deriv(act, GRID, 4.0, 2.0) - fd)) < 1e-7


class TestCutoff:
    @pytest.mark.parametrize("act", ACTS)
    def test_calibration(self, act):
        eps, b = 1e-2, 1.0
        res = ac.calibrate_cutoff(act, b, eps)
        assert res.achieved <= eps
        x_lo = np.linspace(b - 50.0, b, 517)
        x_hi = np.linspace(b + 1.0, b + 50.0, 517)
        assert np.max(np.abs(ac.cutoff_eval(act, x_lo, res.theta, b) - 1.0)) <= 1.1 * eps
        assert np.max(np.abs(ac.cutoff_eval(act, x_hi, res.theta, b))) <= 1.1 * eps
        mid = np.linspace(b, b + 1.0, 101)
        assert np.max(np.abs(ac.cutoff_eval(act, mid, res.theta, b))) <= res.bound

    def test_limits(self):
        act = ACTS[0]
        assert np.isclose(ac.cutoff_eval(act, np.array([-800.0]), 8.0, 1.0)[0], 1.0)
        assert np.isclose(ac.cutoff_eval(act, np.array([800.0]), 8.0, 1.0)[0], 0.0)


class TestAbsval:
    @pytest.mark.parametrize("act", ACTS)
    def test_closed_form_error(self, act):
        # f_abs(x) - |x| = 2 sigma(-theta |x|) / theta <= 0, algebraically
        theta = 7.0
        err = ac.absval_eval(act, GRID, theta) - np.abs(GRID)
        expect = 2.0 * act.sigma(-theta * np.abs(GRID)) / theta
        assert np.max(np.abs(err - expect)) < 1e-11
        assert np.max(err) < 1e-12

    @pytest.mark.parametrize("act", ACTS)
    def test_calibration(self, act):
        eps = 1e-3
        res = ac.calibrate_absval(act, eps)
        assert res.theta >= 2.0 * ac.sup_sigma_neg(act) / eps
        x = np.linspace(-3, 3, 1093)
        vals = ac.absval_eval(act, x, res.theta)
        err = vals - np.abs(x)
        assert np.max(np.abs(err)) <= eps
        assert np.min(vals) >= -1e-12  # never negative

    def test_deriv_bound(self):
        act = ACTS[0]
        d = ac.absval_deriv(act, GRID, 11.0)
        assert np.max(np.abs(d)) <= 2.0 * ac.sup_sigma_prime(act) + 1e-12


class TestIdentityApprox:
    def test_exact_at_symmetric_center(self):
        # x0 = 0 makes the construction exactly x by the shift identity
        act = ACTS[0]
        y = ac.identity_eval(act, GRID, 0.25, x0=0.0)
        assert np.max(np.abs(y - GRID)) < 1e-12

    @pytest.mark.parametrize("act", ACTS)
    def test_calibration(self, act):
        eps, radius = 1e-3, 2.0
        res = ac.calibrate_identity(act, radius, eps)
        assert res.achieved <= eps
        assert res.achieved <= res.bound  # proof bound M0 * theta holds
        x = np.linspace(-radius, radius, 1531)
        err = np.max(np.abs(ac.identity_eval(act, x, res.theta, res.b) - x))
        assert err <= 1.1 * eps

    def test_rejects_flat_center(self):
        act = ACTS[0]
        # sigma'(x0) ~ 0 near the negative minimum region has magnitude > tol,
        # so use a contrived tiny-theta... the guard trips only for near-zero
        # sigma'; construct via the logistic at its root if one exists.  The
        # normal sigma' has a root near x = -0.752; locate it and check.
        from scipy.optimize import brentq

        root = brentq(lambda t: act.sigma_and_deriv(np.array([t]))[1][0], -1.5, -0.5)
        with pytest.raises(ValueError):
            ac.identity_eval(act, GRID, 0.1, x0=root)


class TestNormConstants:
    def test_c12_matches_analytic(self):
        for dim in (1, 2):
            c12, _ = ac.l1_l2_constants(dim, 2, iters=40)
            assert np.isclose(c12, (2 * np.pi) ** (dim / 2), rtol=1e-10)

    def test_c21_bracket(self):
        dim, cutoff = 1, 2
        _, c21 = ac.l1_l2_constants(dim, cutoff, iters=150)
        k = (2 * cutoff + 1) ** dim
        upper = np.sqrt(k) / (2 * np.pi) ** (dim / 2)
        # Dirichlet-kernel test function gives a lower bound for the sup
        g = sp.GridSpec(dim, 64)
        x = g.axis_coords()
        d = np.ones_like(x)
        for kk in range(1, cutoff + 1):
            d += 2 * np.cos(kk * x)
        lower = np.sqrt(g.cell_measure * np.sum(d * d)) / (
            g.cell_measure * np.sum(np.abs(d))
        )
        assert lower - 1e-9 <= c21 <= upper + 1e-9


@pytest.fixture(scope="module")
def setup():
    act = ac.GeluLike("normal")
    grid = sp.GridSpec(2, 16)
    params = ac.cutoff_functional_params(act, dim=2, cutoff=3, b=5.0, eps=1e-2)
    return act, grid, params


class TestCutoffFunctional:
    def _draw(self, grid, seed, channels=2):
        rng = np.random.default_rng(seed)
        f = sp.GridFunction(rng.standard_normal((channels,) + grid.shape), grid)
        return sp.project_modes(f, 3)

    def test_indicator_behaviour(self, setup):
        act, grid, params = setup
        eps = 1e-2
        for seed in range(8):
            v = self._draw(grid, seed)
            mass = grid.cell_measure * np.sum(np.abs(v.values))
            lo = sp.GridFunction(v.values * (0.5 * params.b / mass), grid)
            hi = sp.GridFunction(v.values * (1.5 * (params.b + 1.0) / mass), grid)
            assert abs(ac.cutoff_functional(act, lo, params) - 1.0) <= eps
            assert abs(ac.cutoff_functional(act, hi, params)) <= eps

    def test_derivative_fd(self, setup):
        act, grid, params = setup
        v = self._draw(grid, 99)
        w = self._draw(grid, 100)
        dfield = ac.cutoff_functional_deriv(act, v, params)
        pairing = grid.cell_measure * np.sum(dfield.values * w.values)
        h = 1e-6
        vp = sp.GridFunction(v.values + h * w.values, grid)
        vm = sp.GridFunction(v.values - h * w.values, grid)
        fd = (ac.cutoff_functional(act, vp, params) - ac.cutoff_functional(act, vm, params)) / (2 * h)
        assert np.isclose(pairing, fd, rtol=1e-5, atol=1e-10)

    def test_derivative_bound(self, setup):
        act, grid, params = setup
        for seed in range(5):
            v = self._draw(grid, 200 + seed)
            w = self._draw(grid, 300 + seed)
            dfield = ac.cutoff_functional_deriv(act, v, params)
            pairing = abs(grid.cell_measure * np.sum(dfield.values * w.values))
            l2_w = np.sqrt(grid.cell_measure * np.sum(w.values**2))
            assert pairing <= params.m * l2_w

    def test_constants_recorded(self, setup):
        _, _, params = setup
        assert params.curly_c == 6.0 * params.c12 / params.c21 + 0.5
        assert params.m_cut == params.m_abs + 1.0
        assert params.m >= params.m_cut
