"""Fourier neural operator with hand-rolled first and second order transport.

Architecture: lift R, ``depth`` spectral layers, projection Q.  One layer is

    v  ->  sigma( W v + b + IF( P(k) . F v ) ),

with the multiplier P supported on |k|_inf <= modes and Hermitian across
+-k so the convolution of a real field stays real, and the bias band-limited
to the same modes (stored as its retained Fourier coefficients).

The network owns a canonical computation grid (``grid_n`` points per axis):
inputs on any grid are transported onto the canonical band spectrally, all
layers run there, and the output is sampled back on the requested grid.
Evaluation therefore commutes exactly with grid refinement for band-limited
inputs; there is no resolution-dependent aliasing in the operator itself.

Derivative transport is written out by hand:

* ``jvp`` / ``vjp``        directional derivative and its L2 adjoint;
* ``param_grad``           gradient of a nodal objective via the tape;
* ``bilinear_grad``        parameter gradient of sum_b <C_b, D N(a) T_b>,
                           the second-order pass needed when a loss touches
                           the Jacobian (uses sigma'' through the tape).

Tangent/cotangent arrays carry a leading (batch, directions) pair so whole
Jacobian panels move through the network in one sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import bases
from . import losses as ls
from . import spectral as sp


@dataclass(frozen=True)
class FnoConfig:
    dim: int
    in_channels: int
    out_channels: int
    width: int
    depth: int
    modes: int
    grid_n: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.width < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.modes < 0:
            raise ValueError("modes must be >= 0")
        grid = sp.GridSpec(self.dim, self.grid_n)  # validates dim / power of two
        if 2 * self.modes + 1 > self.grid_n:
            raise ValueError(
                f"canonical grid n={self.grid_n} cannot hold modes <= {self.modes}"
            )
        object.__setattr__(self, "_grid", grid)

    @property
    def grid(self) -> sp.GridSpec:
        return self._grid

    @property
    def mode_k(self) -> int:
        return sp.mode_count(self.modes, self.dim)


@lru_cache(maxsize=64)
def _mode_tables(dim: int, modes: int, n: int):
    """(flat indices into the fft grid, permutation sending k -> -k)."""
    ml = sp.mode_list(modes, dim)
    idx = np.zeros(len(ml), dtype=np.int64)
    for ax in range(dim):
        idx = idx * n + (ml[:, ax] % n)
    lookup = {tuple(k): i for i, k in enumerate(ml)}
    neg = np.array([lookup[tuple(-k)] for k in ml], dtype=np.int64)
    idx.setflags(write=False)
    neg.setflags(write=False)
    return idx, neg


@dataclass
class FnoParams:
    """lift (w, in), blocks W (L, w, w), bias_hat (L, w, K), kernel
    (L, K, w, w), proj (out, w); complex arrays Hermitian across +-k."""

    lift: np.ndarray
    w: np.ndarray
    bias_hat: np.ndarray
    kernel: np.ndarray
    proj: np.ndarray

    def copy(self) -> "FnoParams":
        return FnoParams(
            self.lift.copy(), self.w.copy(), self.bias_hat.copy(),
            self.kernel.copy(), self.proj.copy(),
        )

    def arrays(self):
        return [self.lift, self.w, self.bias_hat, self.kernel, self.proj]

    def to_flat(self) -> np.ndarray:
        parts = []
        for a in self.arrays():
            parts.append(a.view(np.float64).ravel() if np.iscomplexobj(a) else a.ravel())
        return np.concatenate(parts)

    def scale(self, factor: float) -> "FnoParams":
        return FnoParams(*[a * factor for a in self.arrays()])

    def add_scaled(self, other: "FnoParams", factor: float) -> "FnoParams":
        return FnoParams(
            *[a + factor * b for a, b in zip(self.arrays(), other.arrays())]
        )


def params_shapes(cfg: FnoConfig):
    k = cfg.mode_k
    return [
        ((cfg.width, cfg.in_channels), np.float64),
        ((cfg.depth, cfg.width, cfg.width), np.float64),
        ((cfg.depth, cfg.width, k), np.complex128),
        ((cfg.depth, k, cfg.width, cfg.width), np.complex128),
        ((cfg.out_channels, cfg.width), np.float64),
    ]


def params_from_flat(cfg: FnoConfig, flat: np.ndarray) -> FnoParams:
    flat = np.asarray(flat, dtype=np.float64)
    out = []
    pos = 0
    for shape, dtype in params_shapes(cfg):
        count = int(np.prod(shape)) * (2 if dtype == np.complex128 else 1)
        chunk = flat[pos : pos + count]
        pos += count
        if dtype == np.complex128:
            out.append(chunk.copy().view(np.complex128).reshape(shape))
        else:
            out.append(chunk.copy().reshape(shape))
    if pos != flat.size:
        raise ValueError(f"flat vector length {flat.size} != expected {pos}")
    return FnoParams(*out)


def symmetrize(params: FnoParams, cfg: FnoConfig) -> FnoParams:
    """Project kernels and biases onto the Hermitian subspace P(-k) = conj(P(k)).

    Applied at construction and after every optimizer update.
    """
    _, neg = _mode_tables(cfg.dim, cfg.modes, cfg.grid_n)
    kernel = 0.5 * (params.kernel + np.conj(params.kernel[:, neg]))
    bias = 0.5 * (params.bias_hat + np.conj(params.bias_hat[:, :, neg]))
    return FnoParams(params.lift.copy(), params.w.copy(), bias, kernel, params.proj.copy())


def init_params(cfg: FnoConfig, seed: int = 0) -> FnoParams:
    """Uniform 1/sqrt(fan-in) for the pointwise maps, centered complex
    Gaussians of scale 1/(width * K) for the multipliers, zero biases."""
    rng = np.random.default_rng(seed)
    k = cfg.mode_k

    def unif(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    lift = unif((cfg.width, cfg.in_channels), cfg.in_channels)
    w = unif((cfg.depth, cfg.width, cfg.width), cfg.width)
    proj = unif((cfg.out_channels, cfg.width), cfg.width)
    scale = 1.0 / (cfg.width * k)
    kern = scale * (
        rng.standard_normal((cfg.depth, k, cfg.width, cfg.width))
        + 1j * rng.standard_normal((cfg.depth, k, cfg.width, cfg.width))
    )
    bias = np.zeros((cfg.depth, cfg.width, k), dtype=np.complex128)
    return symmetrize(FnoParams(lift, w, bias, kern, proj), cfg)


@dataclass
class Tape:
    """Forward states on the canonical grid for one batch.

    v[0] is the lifted input, v[l] the post-activation of layer l; z, sp and
    (optionally) spp are the pre-activations and activation derivatives;
    vhat[l] caches the retained-mode coefficients of v[l] feeding layer l+1.
    """

    a: np.ndarray
    v: list
    z: list
    sp_: list
    vhat: list
    spp: list | None = None
    imag_residue: float = 0.0
    batch: int = field(default=0)


def _gather(coeffs, idx, dim):
    flat = coeffs.reshape(coeffs.shape[:-dim] + (-1,))
    return flat[..., idx]


def _scatter(vals, idx, n, dim):
    out = np.zeros(vals.shape[:-1] + (n**dim,), dtype=np.complex128)
    out[..., idx] = vals
    return out.reshape(vals.shape[:-1] + (n,) * dim)


def _conv_values(kern_l, vhat_modes, idx, n, dim):
    """IF(P . F v) given gathered coefficients; returns (values, imag residue)."""
    out_modes = np.einsum("kij,...jk->...ik", kern_l, vhat_modes)
    full = _scatter(out_modes, idx, n, dim)
    vals = sp.ifft_values(full, dim)
    residue = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    return vals.real, residue


def _nyquist_project(values, dim):
    """Zero the unpaired Nyquist rows of canonical-grid values.

    The discrete network is defined as band projection, layers, band
    projection; with the sign-ambiguous Nyquist rows removed its inputs and
    outputs transport exactly between grids, which is what makes the
    resolution-invariance contract hold to round-off rather than to
    aliasing level.
    """
    values = np.asarray(values, dtype=np.float64)
    axes = tuple(range(values.ndim - dim, values.ndim))
    vhat = np.fft.fftn(values, axes=axes)
    nyq = values.shape[-1] // 2
    for ax in axes:
        sl = [slice(None)] * values.ndim
        sl[ax] = nyq
        vhat[tuple(sl)] = 0.0
    return np.fft.ifftn(vhat, axes=axes).real


def forward_values(params: FnoParams, cfg: FnoConfig, a_values, act, second_order=False):
    """Run the network on canonical-grid values (B, in, *shape) -> Tape, u."""
    dim, n = cfg.dim, cfg.grid_n
    idx, _ = _mode_tables(dim, cfg.modes, n)
    a_values = _nyquist_project(a_values, dim)
    v = np.einsum("vc,bc...->bv...", params.lift, a_values)
    tape = Tape(a=a_values, v=[v], z=[], sp_=[], vhat=[],
                spp=[] if second_order else None, batch=a_values.shape[0])
    residue = 0.0
    for layer in range(cfg.depth):
        vhat = _gather(sp.fft_coeffs(v, dim), idx, dim)
        tape.vhat.append(vhat)
        conv, res = _conv_values(params.kernel[layer], vhat, idx, n, dim)
        residue = max(residue, res)
        bias = sp.ifft_values(_scatter(params.bias_hat[layer], idx, n, dim), dim).real
        z = np.einsum("vw,bw...->bv...", params.w[layer], v) + conv + bias
        if second_order:
            sig, d1, d2 = act.sigma_derivs(z)
            tape.spp.append(d2)
        else:
            sig, d1 = act.sigma_and_deriv(z)
        tape.z.append(z)
        tape.sp_.append(d1)
        v = sig
        tape.v.append(v)
    tape.imag_residue = residue
    u = _nyquist_project(np.einsum("uv,bv...->bu...", params.proj, v), dim)
    return tape, u


def forward(
    params: FnoParams,
    cfg: FnoConfig,
    a: sp.GridFunction,
    act,
    out_grid: sp.GridSpec | None = None,
    second_order: bool = False,
):
    """Evaluate on a GridFunction; returns (Tape, u GridFunction).

    The input is transported onto the canonical grid (its modes above the
    shared band are discarded by construction), the output is sampled on
    ``out_grid`` (default: the input's grid).
    """
    if a.channels != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels} input channels, got {a.channels}")
    out_grid = out_grid or a.grid
    a_c = sp.resample(a, cfg.grid)
    tape, u = forward_values(params, cfg, a_c.values[None], act, second_order)
    u_f = sp.GridFunction(u[0], cfg.grid)
    return tape, sp.resample(u_f, out_grid)


def jvp_values(params: FnoParams, cfg: FnoConfig, tape: Tape, t_values, keep_stack=False):
    """Tangent sweep (B, M, in, *shape) -> (B, M, out, *shape).

    With ``keep_stack`` the per-layer tangent states needed by
    ``bilinear_grad`` are returned as well.
    """
    dim, n = cfg.dim, cfg.grid_n
    idx, _ = _mode_tables(dim, cfg.modes, n)
    t = np.einsum("vc,bmc...->bmv...", params.lift, _nyquist_project(t_values, dim))
    t_list, y_list = [t], []
    for layer in range(cfg.depth):
        that = _gather(sp.fft_coeffs(t, dim), idx, dim)
        conv, _ = _conv_values(params.kernel[layer], that, idx, n, dim)
        y = np.einsum("vw,bmw...->bmv...", params.w[layer], t) + conv
        t = tape.sp_[layer][:, None] * y
        if keep_stack:
            y_list.append(y)
            t_list.append(t)
    du = _nyquist_project(np.einsum("uv,bmv...->bmu...", params.proj, t), dim)
    if keep_stack:
        return du, t_list, y_list
    return du


def vjp_values(params: FnoParams, cfg: FnoConfig, tape: Tape, c_values):
    """Adjoint sweep (B, M, out, *shape) -> (B, M, in, *shape) (Euclidean)."""
    dim, n = cfg.dim, cfg.grid_n
    idx, _ = _mode_tables(dim, cfg.modes, n)
    s = np.einsum("uv,bmu...->bmv...", params.proj, _nyquist_project(c_values, dim))
    for layer in reversed(range(cfg.depth)):
        g = tape.sp_[layer][:, None] * s
        ghat = _gather(sp.fft_coeffs(g, dim), idx, dim)
        conv_t = np.einsum("kji,bmjk->bmik", np.conj(params.kernel[layer]), ghat)
        conv = sp.ifft_values(_scatter(conv_t, idx, n, dim), dim).real
        s = np.einsum("vw,bmv...->bmw...", params.w[layer], g) + conv
    return _nyquist_project(np.einsum("vc,bmv...->bmc...", params.lift, s), dim)


def jvp(params, cfg, a: sp.GridFunction, da: sp.GridFunction, act,
        out_grid: sp.GridSpec | None = None, tape: Tape | None = None):
    """Directional derivative at a in direction da, as a GridFunction."""
    out_grid = out_grid or da.grid
    if tape is None:
        tape, _ = forward(params, cfg, a, act)
    da_c = sp.resample(da, cfg.grid)
    du = jvp_values(params, cfg, tape, da_c.values[None, None])
    return sp.resample(sp.GridFunction(du[0, 0], cfg.grid), out_grid)


def vjp(params, cfg, a: sp.GridFunction, du_bar: sp.GridFunction, act,
        in_grid: sp.GridSpec | None = None, tape: Tape | None = None):
    """L2 adjoint of jvp: <du_bar, jvp(da)>_{L2} = <vjp(du_bar), da>_{L2}.

    Spectral transport is its own L2 adjoint on the shared band, so the
    cotangent moves with plain resamples on both ends.
    """
    in_grid = in_grid or du_bar.grid
    if tape is None:
        tape, _ = forward(params, cfg, a, act)
    c = sp.resample(du_bar, cfg.grid)
    da_bar = vjp_values(params, cfg, tape, c.values[None, None])
    return sp.resample(sp.GridFunction(da_bar[0, 0], cfg.grid), in_grid)


def _zero_grads(params: FnoParams) -> FnoParams:
    return FnoParams(*[np.zeros_like(a) for a in params.arrays()])


def _outer_contract(x, y, dim, lead):
    """sum over leading and spatial axes of x[.., p, *s] y[.., q, *s] -> (p, q)."""
    spat = "xyz"[:dim]
    head = "bm"[:lead]
    return np.einsum(f"{head}p{spat},{head}q{spat}->pq", x, y)


def param_grad(params: FnoParams, cfg: FnoConfig, tape: Tape, u_bar) -> FnoParams:
    """Gradient of a scalar objective given u_bar = dL/du on the canonical
    grid (B, out, *shape); complex entries package d/dRe + i d/dIm."""
    g = _zero_grads(params)
    _accumulate_primal(params, cfg, tape, _nyquist_project(u_bar, cfg.dim), None, g)
    return g


def _accumulate_primal(params, cfg, tape, u_bar, z_extra, g: FnoParams):
    """Reverse pass through the primal chain.

    z_extra, when given, is a list of additional dL/dz_l contributions
    (from the sigma'' coupling of a tangent pass); u_bar may be None when
    only those are present.
    """
    dim, n = cfg.dim, cfg.grid_n
    idx, _ = _mode_tables(dim, cfg.modes, n)
    nd = float(n**dim)
    if u_bar is not None:
        g.proj += _outer_contract(u_bar, tape.v[-1], dim, 1)
        w_bar = np.einsum("uv,bu...->bv...", params.proj, u_bar)
    else:
        w_bar = np.zeros_like(tape.v[-1])
    for layer in reversed(range(cfg.depth)):
        z_bar = tape.sp_[layer] * w_bar
        if z_extra is not None and z_extra[layer] is not None:
            z_bar = z_bar + z_extra[layer]
        v_in = tape.v[layer]
        g.w[layer] += _outer_contract(z_bar, v_in, dim, 1)
        zhat = _gather(sp.fft_coeffs(z_bar, dim), idx, dim)
        g.bias_hat[layer] += nd * np.einsum("bvk->vk", zhat)
        g.kernel[layer] += nd * np.einsum(
            "bpk,bqk->kpq", zhat, np.conj(tape.vhat[layer])
        )
        conv = sp.ifft_values(
            _scatter(np.einsum("kji,bjk->bik", np.conj(params.kernel[layer]), zhat),
                     idx, n, dim), dim,
        ).real
        w_bar = np.einsum("vw,bv...->bw...", params.w[layer], z_bar) + conv
    g.lift += _outer_contract(w_bar, tape.a, dim, 1)


def bilinear_grad(
    params: FnoParams,
    cfg: FnoConfig,
    tape: Tape,
    act,
    t_values,
    c_values,
    u_bar=None,
    g: FnoParams | None = None,
):
    """Accumulate the parameter gradient of

        S = sum_{b,m} <C_{bm}, D N(a_b) T_{bm}>_E  (+ <u_bar, N(a)>_E)

    for tangents T (B, M, in, *shape) and cotangents C (B, M, out, *shape)
    on the canonical grid.  This is the second-order pass: the dependence of
    sigma'(z) on the parameters enters through sigma''(z) on the tape.
    Returns (grads, du) where du are the tangent outputs (the Jacobian
    panel), so callers assemble values and gradient in one sweep.
    """
    if tape.spp is None:
        tape.spp = [act.sigma_derivs(z)[2] for z in tape.z]
    dim, n = cfg.dim, cfg.grid_n
    idx, _ = _mode_tables(dim, cfg.modes, n)
    nd = float(n**dim)
    if g is None:
        g = _zero_grads(params)

    du, t_list, y_list = jvp_values(params, cfg, tape, t_values, keep_stack=True)
    c = _nyquist_project(c_values, dim)

    g.proj += _outer_contract(c, t_list[-1], dim, 2)
    t_bar = np.einsum("uv,bmu...->bmv...", params.proj, c)
    z_extra = [None] * cfg.depth
    for layer in reversed(range(cfg.depth)):
        y_bar = tape.sp_[layer][:, None] * t_bar
        # sigma''(z) couples the tangent cotangent back into the primal chain
        z_extra[layer] = tape.spp[layer] * np.einsum(
            "bmv...,bmv...->bv...", t_bar, y_list[layer]
        )
        t_in = t_list[layer]
        g.w[layer] += _outer_contract(y_bar, t_in, dim, 2)
        yhat = _gather(sp.fft_coeffs(y_bar, dim), idx, dim)
        that = _gather(sp.fft_coeffs(t_in, dim), idx, dim)
        g.kernel[layer] += nd * np.einsum("bmpk,bmqk->kpq", yhat, np.conj(that))
        conv = sp.ifft_values(
            _scatter(np.einsum("kji,bmjk->bmik", np.conj(params.kernel[layer]), yhat),
                     idx, n, dim), dim,
        ).real
        t_bar = np.einsum("vw,bmv...->bmw...", params.w[layer], y_bar) + conv
    g.lift += _outer_contract(t_bar, _nyquist_project(t_values, dim), dim, 2)

    if u_bar is not None:
        u_bar = _nyquist_project(u_bar, dim)
    _accumulate_primal(params, cfg, tape, u_bar, z_extra, g)
    return g, du


# ---------------------------------------------------------------------------
# dense Jacobians in declared bases

def _basis_to_canonical(basis: bases.ReducedBasis, cfg: FnoConfig):
    """Basis fields transported to the canonical grid (exact: band-limited)."""
    if basis.grid == cfg.grid:
        return basis.fields
    out = np.empty((basis.rank, basis.channels) + cfg.grid.shape)
    for i in range(basis.rank):
        out[i] = sp.resample(
            sp.GridFunction(basis.fields[i], basis.grid), cfg.grid
        ).values
    return out


def _cotangents_to_canonical(basis: bases.ReducedBasis, cfg: FnoConfig, weights):
    """Euclidean cotangents on the canonical grid for given row weights.

    weights (..., r) combine the rows W phi_j of the out basis; the result
    is the adjoint transport of that combination from the basis grid.
    """
    w = basis.weighted_flat()  # (r, ch*size)
    combo = np.asarray(weights) @ w
    combo = combo.reshape(np.asarray(weights).shape[:-1] + (basis.channels,) + basis.grid.shape)
    if basis.grid == cfg.grid:
        return combo
    lead = combo.shape[: -1 - basis.grid.dim]
    flat = combo.reshape((-1,) + combo.shape[-1 - basis.grid.dim :])
    out = np.empty((flat.shape[0], basis.channels) + cfg.grid.shape)
    for i in range(flat.shape[0]):
        out[i] = sp.resample_adjoint(
            sp.GridFunction(flat[i], basis.grid), cfg.grid
        ).values
    return out.reshape(lead + (basis.channels,) + cfg.grid.shape)


def jacobian_dense(
    params: FnoParams,
    cfg: FnoConfig,
    a: sp.GridFunction,
    act,
    in_basis: bases.ReducedBasis,
    out_basis: bases.ReducedBasis,
    mode: str = "auto",
    check: bool = True,
    tape: Tape | None = None,
) -> ls.JacobianMatrix:
    """J[j, k] = <phi_j, D N(a) psi_k>_Y in the declared bases.

    mode "forward" sweeps tangents over the input basis (preferred when
    r_in <= r_out), "reverse" sweeps cotangents over the output basis;
    both agree to rounding.  ``check`` verifies basis orthonormality
    (Gram defect <= 1e-8) before assembling.
    """
    if check:
        bases.check_orthonormal(in_basis)
        bases.check_orthonormal(out_basis)
    if in_basis.channels != cfg.in_channels or out_basis.channels != cfg.out_channels:
        raise ValueError("basis channel counts do not match the network")
    if mode == "auto":
        mode = "forward" if in_basis.rank <= out_basis.rank else "reverse"
    if tape is None:
        tape, _ = forward(params, cfg, a, act)
    if mode == "forward":
        t = _basis_to_canonical(in_basis, cfg)[None]
        du = jvp_values(params, cfg, tape, t)[0]  # (r_in, out, *shape)
        du_on_out = np.empty((in_basis.rank, out_basis.channels) + out_basis.grid.shape)
        for i in range(in_basis.rank):
            du_on_out[i] = sp.resample(
                sp.GridFunction(du[i], cfg.grid), out_basis.grid
            ).values
        vals = out_basis.coefficients(du_on_out).T  # (r_out, r_in)
    elif mode == "reverse":
        c = _cotangents_to_canonical(out_basis, cfg, np.eye(out_basis.rank))[None]
        q = vjp_values(params, cfg, tape, c)[0]  # (r_out, in, *shape)
        q_on_in = np.empty((out_basis.rank, in_basis.channels) + in_basis.grid.shape)
        for j in range(out_basis.rank):
            q_on_in[j] = sp.resample_adjoint(
                sp.GridFunction(q[j], cfg.grid), in_basis.grid
            ).values
        psi = in_basis.fields.reshape(in_basis.rank, -1)
        vals = q_on_in.reshape(out_basis.rank, -1) @ psi.T
    else:
        raise ValueError(f"mode must be auto/forward/reverse, got {mode!r}")
    return ls.JacobianMatrix(vals, in_basis.label, out_basis.label)
