"""Weighted output losses, Jacobian mismatch penalties, error reporting."""

import numpy as np
import pytest

from difno import losses
from difno import spectral as sp


@pytest.fixture(scope="module")
def grid():
    return sp.GridSpec(2, 16)


def rand(grid, seed, channels=1):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((channels,) + grid.shape)


class TestWeightingTensor:
    def test_lumped_equals_spectral_order_zero(self, grid):
        u = rand(grid, 0)
        lump = losses.WeightingTensor(grid, "lumped")
        spec = losses.WeightingTensor(grid, "spectral", order=0.0)
        assert np.max(np.abs(lump.apply(u) - spec.apply(u))) < 1e-14
        assert np.isclose(lump.quadratic(u), spec.quadratic(u), rtol=1e-13)

    def test_spectral_matches_sobolev_norm(self, grid):
        u = rand(grid, 1)
        w = losses.WeightingTensor(grid, "spectral", order=1.5)
        f = sp.GridFunction(u, grid)
        assert np.isclose(
            w.quadratic(u), sp.sobolev_norm(f, sp.SobolevSpec(1.5)) ** 2, rtol=1e-12
        )

    def test_fd_h1_converges_to_spectral(self):
        # second-order consistency of the difference stencil: the ratio of
        # the two H1 quadratic forms tends to 1 like h^2 on a smooth field
        errs = []
        for n in (16, 32, 64):
            g = sp.GridSpec(2, n)
            x, y = g.coords()
            u = (np.cos(x) * np.sin(2 * y))[None]
            fd = losses.WeightingTensor(g, "fd-h1").quadratic(u)
            ex = losses.WeightingTensor(g, "spectral", order=1.0).quadratic(u)
            errs.append(abs(fd / ex - 1.0))
        assert errs[0] / errs[1] > 3.0
        assert errs[1] / errs[2] > 3.0

    def test_fd_h1_symmetric_positive(self):
        g = sp.GridSpec(1, 16)
        w = losses.WeightingTensor(g, "fd-h1")
        rng = np.random.default_rng(2)
        u = rng.standard_normal((1,) + g.shape)
        v = rng.standard_normal((1,) + g.shape)
        assert np.isclose(np.sum(w.apply(u) * v), np.sum(w.apply(v) * u), rtol=1e-12)
        assert w.quadratic(u) > 0

    def test_unknown_variant(self, grid):
        with pytest.raises(ValueError):
            losses.WeightingTensor(grid, "banded")


class TestOutputLoss:
    def test_zero_at_target(self, grid):
        u = rand(grid, 3)
        w = losses.WeightingTensor(grid, "lumped")
        assert losses.output_loss(u[None], u[None], w) == 0.0

    def test_grad_fd(self, grid):
        w = losses.WeightingTensor(grid, "spectral", order=1.0)
        u = rand(grid, 4)[None]
        t = rand(grid, 5)[None]
        g = losses.output_loss_grad(u, t, w)
        rng = np.random.default_rng(6)
        d = rng.standard_normal(u.shape)
        h = 1e-6
        fd = (
            losses.output_loss(u + h * d, t, w) - losses.output_loss(u - h * d, t, w)
        ) / (2 * h)
        assert np.isclose(np.sum(g * d), fd, rtol=1e-7)

    def test_batch_mean(self, grid):
        w = losses.WeightingTensor(grid, "lumped")
        u = np.stack([rand(grid, 7), rand(grid, 8)])
        t = np.zeros_like(u)
        per = [losses.output_loss(u[i : i + 1], t[i : i + 1], w) for i in range(2)]
        assert np.isclose(losses.output_loss(u, t, w), np.mean(per), rtol=1e-13)


class TestJacobianMatrix:
    def test_frobenius(self):
        v = np.arange(6.0).reshape(2, 3)
        J = losses.JacobianMatrix(v, "in", "out")
        assert np.isclose(J.frobenius(), np.linalg.norm(v))

    def test_derivative_loss_and_grad(self):
        rng = np.random.default_rng(9)
        pred = [losses.JacobianMatrix(rng.standard_normal((3, 4)), "a", "b")
                for _ in range(2)]
        tgt = [losses.JacobianMatrix(rng.standard_normal((3, 4)), "a", "b")
               for _ in range(2)]
        val = losses.derivative_loss(pred, tgt)
        expect = np.mean(
            [np.sum((p.values - t.values) ** 2) for p, t in zip(pred, tgt)]
        )
        assert np.isclose(val, expect, rtol=1e-13)

    def test_tag_mismatch_raises(self):
        a = losses.JacobianMatrix(np.zeros((2, 2)), "x", "y")
        b = losses.JacobianMatrix(np.zeros((2, 2)), "x", "z")
        with pytest.raises(ValueError):
            losses.derivative_loss([a], [b])
        c = losses.JacobianMatrix(np.zeros((3, 2)), "x", "y")
        with pytest.raises(ValueError):
            losses.derivative_loss([a], [c])

    def test_reduced_block(self):
        rng = np.random.default_rng(10)
        full = losses.JacobianMatrix(rng.standard_normal((6, 5)), "in", "out")
        sub = losses.reduced_block(full, rows=3, cols=2)
        assert sub.values.shape == (3, 2)
        assert np.array_equal(sub.values, full.values[:3, :2])
        assert sub.in_label == "in[subset:2]"
        assert sub.out_label == "out[subset:3]"


class TestErrorReporting:
    def test_relative_output_error(self, grid):
        w = losses.WeightingTensor(grid, "lumped")
        t = rand(grid, 11)
        assert losses.relative_output_error(t, t, w) == 0.0
        e = losses.relative_output_error(2 * t, t, w)
        assert np.isclose(e, 1.0, rtol=1e-12)
        assert np.isnan(losses.relative_output_error(t, np.zeros_like(t), w))

    def test_relative_derivative_error(self):
        t = losses.JacobianMatrix(np.eye(3), "a", "b")
        p = losses.JacobianMatrix(np.eye(3) * 1.5, "a", "b")
        assert np.isclose(losses.relative_derivative_error(p, t), 0.5)

    def test_error_summary_excludes_nan(self):
        s = losses.error_summary([0.1, np.nan, 0.3])
        assert s["count"] == 2
        assert s["excluded"] == 1
        assert np.isclose(s["mean"], 0.2)
        assert np.isclose(s["max"], 0.3)
