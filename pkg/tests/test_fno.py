"""Operator network: forward, tangent/adjoint sweeps, parameter gradients.

Every derivative path is checked against central finite differences of the
forward pass (the independent oracle), the adjoint against the L2 pairing
identity, and the linearized network against the exact affine property
obtained by swapping in the identity activation.
"""

import numpy as np
import pytest

from difno import activations as ac
from difno import bases, fno
from difno import spectral as sp

ACT = ac.GeluLike("normal")


def small_cfg(dim=2, n=8, modes=2, width=3, depth=2, cin=2, cout=2):
    return fno.FnoConfig(
        dim=dim, in_channels=cin, out_channels=cout,
        width=width, depth=depth, modes=modes, grid_n=n,
    )


def band_input(cfg, seed=0, channels=None, grid=None, cutoff=None):
    grid = grid or cfg.grid
    channels = channels or cfg.in_channels
    rng = np.random.default_rng(seed)
    f = sp.GridFunction(rng.standard_normal((channels,) + grid.shape), grid)
    return sp.project_modes(f, cutoff if cutoff is not None else grid.max_band)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_cfg(n=4, modes=2)  # 2*2+1 > 4
        with pytest.raises(ValueError):
            small_cfg(depth=0)

    def test_mode_tables(self):
        idx, neg = fno._mode_tables(2, 1, 8)
        ml = sp.mode_list(1, 2)
        for i, k in enumerate(ml):
            assert tuple(ml[neg[i]]) == tuple(-k)


class TestParams:
    def test_flat_round_trip(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, seed=3)
        q = fno.params_from_flat(cfg, p.to_flat())
        for a, b in zip(p.arrays(), q.arrays()):
            assert np.array_equal(a, b)

    def test_init_hermitian(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, seed=4)
        _, neg = fno._mode_tables(cfg.dim, cfg.modes, cfg.grid_n)
        assert np.max(np.abs(p.kernel - np.conj(p.kernel[:, neg]))) < 1e-15

    def test_init_scales(self):
        cfg = small_cfg(width=8)
        p = fno.init_params(cfg, seed=5)
        assert np.max(np.abs(p.lift)) <= 1.0 / np.sqrt(cfg.in_channels)
        assert np.max(np.abs(p.w)) <= 1.0 / np.sqrt(cfg.width)
        assert np.all(p.bias_hat == 0)


class TestForward:
    def test_zero_params_zero_output(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, 0).scale(0.0)
        _, u = fno.forward(p, cfg, band_input(cfg, 1), ACT)
        assert np.max(np.abs(u.values)) == 0.0

    def test_real_output_with_residue(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, 6)
        tape, u = fno.forward(p, cfg, band_input(cfg, 7), ACT)
        assert u.values.dtype == np.float64
        assert tape.imag_residue < 1e-12

    def test_batch_matches_loop(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, 8)
        rng = np.random.default_rng(9)
        batch = rng.standard_normal((4, cfg.in_channels) + cfg.grid.shape)
        _, u = fno.forward_values(p, cfg, batch, ACT)
        for b in range(4):
            _, ub = fno.forward_values(p, cfg, batch[b : b + 1], ACT)
            assert np.max(np.abs(u[b] - ub[0])) < 1e-13

    def test_resolution_transfer(self):
        # band-limited input evaluated on 16 vs 32 grids agrees after
        # projection: the canonical-grid semantics make this exact
        cfg = small_cfg(n=16, modes=4)
        p = fno.init_params(cfg, 10)
        coarse = sp.GridSpec(2, 16)
        fine = sp.GridSpec(2, 32)
        a_c = band_input(cfg, 11, grid=coarse)
        a_f = sp.resample(a_c, fine)
        _, u_c = fno.forward(p, cfg, a_c, ACT)
        _, u_f = fno.forward(p, cfg, a_f, ACT)
        down = sp.resample(u_f, coarse)
        assert np.max(np.abs(down.values - u_c.values)) < 1e-10

    def test_hermitian_violation_breaks_realness(self):
        # sanity that the symmetry actually carries the realness property
        cfg = small_cfg(depth=1)
        p = fno.init_params(cfg, 12)
        p.kernel[0, 0, 0, 0] += 0.3 + 0.7j  # break one +-k pair
        tape, _ = fno.forward(p, cfg, band_input(cfg, 13), ACT)
        assert tape.imag_residue > 1e-6


class TestLinearization:
    """Identity activation turns the network affine; derivatives collapse."""

    def test_affine_difference_equals_jvp(self):
        cfg = small_cfg(depth=3)
        p = fno.init_params(cfg, 14)
        p.bias_hat += 0.1  # nonzero bias: affine, not linear
        p = fno.symmetrize(p, cfg)
        ident = ac.IdentityActivation()
        a = band_input(cfg, 15)
        da = band_input(cfg, 16)
        tape, ua = fno.forward(p, cfg, a, ident)
        _, uad = fno.forward(
            p, cfg, sp.GridFunction(a.values + da.values, a.grid), ident
        )
        dv = fno.jvp(p, cfg, a, da, ident, tape=tape)
        assert np.max(np.abs((uad.values - ua.values) - dv.values)) < 1e-11

    def test_single_mode_multiplier(self):
        # depth 1, width 1, identity activation, W = 0, bias = 0: the network
        # is q * P(k) * r on each retained mode; check cos response exactly
        cfg = fno.FnoConfig(dim=1, in_channels=1, out_channels=1,
                            width=1, depth=1, modes=2, grid_n=16)
        p = fno.init_params(cfg, 0).scale(0.0)
        p.lift[0, 0] = 1.0
        p.proj[0, 0] = 1.0
        idx, _ = fno._mode_tables(1, 2, 16)
        ml = sp.mode_list(2, 1)
        for i, k in enumerate(ml):
            p.kernel[0, i, 0, 0] = 2.0  # real, Hermitian
        ident = ac.IdentityActivation()
        g = cfg.grid
        x = g.axis_coords()
        a = sp.GridFunction(np.cos(2 * x)[None], g)
        _, u = fno.forward(p, cfg, a, ident)
        assert np.max(np.abs(u.values[0] - 2.0 * np.cos(2 * x))) < 1e-12


class TestJvp:
    @pytest.mark.parametrize("seed", range(3))
    def test_fd_oracle(self, seed):
        cfg = small_cfg()
        p = fno.init_params(cfg, 20 + seed)
        a = band_input(cfg, 30 + seed)
        da = band_input(cfg, 40 + seed)
        tape, _ = fno.forward(p, cfg, a, ACT)
        dv = fno.jvp(p, cfg, a, da, ACT, tape=tape)
        h = 1e-5
        _, up = fno.forward(p, cfg, sp.GridFunction(a.values + h * da.values, a.grid), ACT)
        _, um = fno.forward(p, cfg, sp.GridFunction(a.values - h * da.values, a.grid), ACT)
        fd = (up.values - um.values) / (2 * h)
        denom = np.max(np.abs(fd)) + 1e-12
        assert np.max(np.abs(dv.values - fd)) / denom < 1e-6

    def test_fd_oracle_cross_grid(self):
        # input and tangent living on a finer grid than the canonical one
        cfg = small_cfg(n=8, modes=2)
        fine = sp.GridSpec(2, 16)
        p = fno.init_params(cfg, 50)
        a = band_input(cfg, 51, grid=fine)
        da = band_input(cfg, 52, grid=fine)
        dv = fno.jvp(p, cfg, a, da, ACT)
        h = 1e-5
        _, up = fno.forward(p, cfg, sp.GridFunction(a.values + h * da.values, fine), ACT)
        _, um = fno.forward(p, cfg, sp.GridFunction(a.values - h * da.values, fine), ACT)
        fd = (up.values - um.values) / (2 * h)
        denom = np.max(np.abs(fd)) + 1e-12
        assert np.max(np.abs(dv.values - fd)) / denom < 1e-6

    def test_linear_in_direction(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, 60)
        a = band_input(cfg, 61)
        tape, _ = fno.forward(p, cfg, a, ACT)
        d1 = band_input(cfg, 62)
        d2 = band_input(cfg, 63)
        both = sp.GridFunction(2.0 * d1.values - 3.0 * d2.values, a.grid)
        v = fno.jvp(p, cfg, a, both, ACT, tape=tape).values
        v1 = fno.jvp(p, cfg, a, d1, ACT, tape=tape).values
        v2 = fno.jvp(p, cfg, a, d2, ACT, tape=tape).values
        assert np.max(np.abs(v - 2 * v1 + 3 * v2)) < 1e-11


class TestVjp:
    def test_adjoint_identity_same_grid(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, 70)
        a = band_input(cfg, 71)
        da = band_input(cfg, 72)
        ub = band_input(cfg, 73, channels=cfg.out_channels)
        tape, _ = fno.forward(p, cfg, a, ACT)
        cell = cfg.grid.cell_measure
        lhs = cell * np.sum(ub.values * fno.jvp(p, cfg, a, da, ACT, tape=tape).values)
        rhs = cell * np.sum(fno.vjp(p, cfg, a, ub, ACT, tape=tape).values * da.values)
        assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))

    def test_adjoint_identity_cross_grid(self):
        # tangent on a fine grid, cotangent on a coarse one
        cfg = small_cfg(n=16, modes=3)
        p = fno.init_params(cfg, 80)
        fine = sp.GridSpec(2, 32)
        coarse = sp.GridSpec(2, 8)
        a = band_input(cfg, 81)
        da = band_input(cfg, 82, grid=fine)
        ub = band_input(cfg, 83, channels=cfg.out_channels, grid=coarse)
        tape, _ = fno.forward(p, cfg, a, ACT)
        du = fno.jvp(p, cfg, a, da, ACT, out_grid=coarse, tape=tape)
        back = fno.vjp(p, cfg, a, ub, ACT, in_grid=fine, tape=tape)
        lhs = coarse.cell_measure * np.sum(ub.values * du.values)
        rhs = fine.cell_measure * np.sum(back.values * da.values)
        assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


class TestParamGrad:
    def _loss_and_grad(self, cfg, p, a_vals, w):
        tape, u = fno.forward_values(p, cfg, a_vals, ACT)
        loss = float(np.sum(w * u))
        g = fno.param_grad(p, cfg, tape, w)
        return loss, g

    @pytest.mark.parametrize("seed", range(3))
    def test_fd_directional(self, seed):
        cfg = small_cfg()
        p = fno.init_params(cfg, 90 + seed)
        rng = np.random.default_rng(100 + seed)
        a_vals = rng.standard_normal((2, cfg.in_channels) + cfg.grid.shape)
        w = rng.standard_normal((2, cfg.out_channels) + cfg.grid.shape)
        _, g = self._loss_and_grad(cfg, p, a_vals, w)
        flat = p.to_flat()
        direction = rng.standard_normal(flat.size)
        h = 1e-6
        lp, _ = self._loss_and_grad(cfg, fno.params_from_flat(cfg, flat + h * direction), a_vals, w)
        lm, _ = self._loss_and_grad(cfg, fno.params_from_flat(cfg, flat - h * direction), a_vals, w)
        fd = (lp - lm) / (2 * h)
        an = float(g.to_flat() @ direction)
        assert abs(an - fd) <= 1e-5 * (1 + abs(fd))

    def test_grad_hermitian(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, 110)
        rng = np.random.default_rng(111)
        a_vals = rng.standard_normal((1, cfg.in_channels) + cfg.grid.shape)
        w = rng.standard_normal((1, cfg.out_channels) + cfg.grid.shape)
        tape, _ = fno.forward_values(p, cfg, a_vals, ACT)
        g = fno.param_grad(p, cfg, tape, w)
        _, neg = fno._mode_tables(cfg.dim, cfg.modes, cfg.grid_n)
        assert np.max(np.abs(g.kernel - np.conj(g.kernel[:, neg]))) < 1e-10
        assert np.max(np.abs(g.bias_hat - np.conj(g.bias_hat[:, :, neg]))) < 1e-10

    def test_proj_grad_closed_form(self):
        # dL/dQ = sum_x u_bar outer final hidden state (u_bar Nyquist-free)
        cfg = small_cfg()
        p = fno.init_params(cfg, 120)
        rng = np.random.default_rng(121)
        a_vals = rng.standard_normal((1, cfg.in_channels) + cfg.grid.shape)
        w = fno._nyquist_project(
            rng.standard_normal((1, cfg.out_channels) + cfg.grid.shape), cfg.dim
        )
        tape, _ = fno.forward_values(p, cfg, a_vals, ACT)
        g = fno.param_grad(p, cfg, tape, w)
        expect = np.einsum("buxy,bvxy->uv", w, tape.v[-1])
        assert np.max(np.abs(g.proj - expect)) < 1e-12


class TestBilinearGrad:
    """Second-order pass: gradient of a functional of the Jacobian."""

    @pytest.mark.parametrize("seed", range(2))
    def test_fd_directional(self, seed):
        cfg = small_cfg(width=3, depth=2)
        p = fno.init_params(cfg, 130 + seed)
        rng = np.random.default_rng(140 + seed)
        a_vals = rng.standard_normal((2, cfg.in_channels) + cfg.grid.shape)
        t = rng.standard_normal((2, 3, cfg.in_channels) + cfg.grid.shape)
        c = rng.standard_normal((2, 3, cfg.out_channels) + cfg.grid.shape)

        def scalar(pp):
            tape, _ = fno.forward_values(pp, cfg, a_vals, ACT)
            du = fno.jvp_values(pp, cfg, tape, t)
            return float(np.sum(c * du))

        tape, _ = fno.forward_values(p, cfg, a_vals, ACT, second_order=True)
        g, du = fno.bilinear_grad(p, cfg, tape, ACT, t, c)
        assert np.isclose(float(np.sum(c * du)), scalar(p), rtol=1e-12)

        flat = p.to_flat()
        direction = rng.standard_normal(flat.size)
        h = 1e-6
        fd = (
            scalar(fno.params_from_flat(cfg, flat + h * direction))
            - scalar(fno.params_from_flat(cfg, flat - h * direction))
        ) / (2 * h)
        an = float(g.to_flat() @ direction)
        assert abs(an - fd) <= 2e-5 * (1 + abs(fd))

    def test_combined_with_output_loss(self):
        # u_bar folded into the same sweep equals the sum of separate grads
        cfg = small_cfg(width=2, depth=2)
        p = fno.init_params(cfg, 150)
        rng = np.random.default_rng(151)
        a_vals = rng.standard_normal((1, cfg.in_channels) + cfg.grid.shape)
        t = rng.standard_normal((1, 2, cfg.in_channels) + cfg.grid.shape)
        c = rng.standard_normal((1, 2, cfg.out_channels) + cfg.grid.shape)
        ub = rng.standard_normal((1, cfg.out_channels) + cfg.grid.shape)
        tape, _ = fno.forward_values(p, cfg, a_vals, ACT, second_order=True)
        g_all, _ = fno.bilinear_grad(p, cfg, tape, ACT, t, c, u_bar=ub)
        g_sep, _ = fno.bilinear_grad(p, cfg, tape, ACT, t, c)
        g_out = fno.param_grad(p, cfg, tape, ub)
        for x, y, z in zip(g_all.arrays(), g_sep.arrays(), g_out.arrays()):
            assert np.max(np.abs(x - (y + z))) < 1e-10


class TestJacobianDense:
    def _bases(self, cfg, cutoff=2):
        ip_in = sp.InnerProduct("sobolev", order=1.0)
        ip_out = sp.InnerProduct("l2")
        bin_ = bases.sinusoid_channel_basis(cfg.grid, cutoff, cfg.in_channels, ip_in)
        bout = bases.sinusoid_channel_basis(cfg.grid, cutoff, cfg.out_channels, ip_out)
        return bin_, bout

    def test_forward_reverse_agree(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, 160)
        a = band_input(cfg, 161)
        bin_, bout = self._bases(cfg)
        jf = fno.jacobian_dense(p, cfg, a, ACT, bin_, bout, mode="forward")
        jr = fno.jacobian_dense(p, cfg, a, ACT, bin_, bout, mode="reverse")
        assert np.max(np.abs(jf.values - jr.values)) < 1e-9

    def test_entries_match_pairings(self):
        cfg = small_cfg(cin=1, cout=1, n=8, modes=2)
        p = fno.init_params(cfg, 170)
        a = band_input(cfg, 171)
        bin_, bout = self._bases(cfg, cutoff=1)
        J = fno.jacobian_dense(p, cfg, a, ACT, bin_, bout)
        tape, _ = fno.forward(p, cfg, a, ACT)
        for k in (0, 3, 7):
            psi = sp.GridFunction(bin_.fields[k], cfg.grid)
            du = fno.jvp(p, cfg, a, psi, ACT, tape=tape)
            coeffs = bout.coefficients(du.values[None])[0]
            assert np.max(np.abs(J.values[:, k] - coeffs)) < 1e-11

    def test_isometry_against_hs_sweep(self):
        # Frobenius norm == sqrt(sum_k ||D N psi_k||_Y^2) with the Y norms
        # computed directly (not entrywise), output content restricted to
        # the declared band
        cfg = small_cfg(cin=1, cout=1)
        p = fno.init_params(cfg, 180)
        a = band_input(cfg, 181)
        cutoff = 2
        bin_, bout = self._bases(cfg, cutoff=cutoff)
        J = fno.jacobian_dense(p, cfg, a, ACT, bin_, bout)
        tape, _ = fno.forward(p, cfg, a, ACT)
        total = 0.0
        for k in range(bin_.rank):
            psi = sp.GridFunction(bin_.fields[k], cfg.grid)
            du = fno.jvp(p, cfg, a, psi, ACT, tape=tape)
            band = sp.project_modes(du, cutoff)
            total += sp.sobolev_inner(band, band, sp.SobolevSpec(0.0))
        assert np.isclose(J.frobenius(), np.sqrt(total), rtol=1e-10)

    def test_rejects_non_orthonormal(self):
        cfg = small_cfg()
        p = fno.init_params(cfg, 190)
        a = band_input(cfg, 191)
        bin_, bout = self._bases(cfg)
        bad = bases.ReducedBasis(
            bin_.fields * 1.01, bin_.grid, bin_.inner, "bad-scale"
        )
        with pytest.raises(ValueError):
            fno.jacobian_dense(p, cfg, a, ACT, bad, bout)

    def test_coarse_basis_grid(self):
        # bases declared on a coarser grid than the canonical one
        cfg = small_cfg(n=16, modes=3)
        p = fno.init_params(cfg, 200)
        a = band_input(cfg, 201)
        coarse = sp.GridSpec(2, 8)
        ip = sp.InnerProduct("l2")
        bin_ = bases.sinusoid_channel_basis(coarse, 2, cfg.in_channels, ip)
        bout = bases.sinusoid_channel_basis(coarse, 2, cfg.out_channels, ip)
        jf = fno.jacobian_dense(p, cfg, a, ACT, bin_, bout, mode="forward")
        jr = fno.jacobian_dense(p, cfg, a, ACT, bin_, bout, mode="reverse")
        assert np.max(np.abs(jf.values - jr.values)) < 1e-9
