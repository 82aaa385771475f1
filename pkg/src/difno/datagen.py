"""Training-data generation: Matern-type random fields, a periodic
nonlinear diffusion-reaction solver, forward/adjoint sensitivity solves,
and a closed-form toy operator for fast oracle tests.

The PDE is -div(e^a grad u) + u^3 = f on the torus, solved by damped Newton
with spectral differentiation; the inner linear systems use conjugate
gradients preconditioned by (mean(e^a) (-Lap) + eps)^{-1} in Fourier space.
The cubic reaction term makes the operator strictly monotone, so no
zero-mean compatibility constraint is needed.  Very negative a slows the
iteration; the cap is 50 steps with half-step damping on residual increase.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import spectral as sp
from .bases import ReducedBasis
from .losses import JacobianMatrix


# ---------------------------------------------------------------------------
# random field sampling

@dataclass(frozen=True)
class GrfSpec:
    """Centered Gaussian with covariance (omega I - rho Lap)^{-tau}."""

    omega: float = 10.0 / 3.0
    rho: float = 1.0 / 30.0
    tau: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.omega <= 0 or self.rho <= 0:
            raise ValueError("omega and rho must be positive")
        if self.tau < 2:
            raise ValueError("tau must be at least 2")

    def inner(self) -> sp.InnerProduct:
        """Cameron-Martin inner product of the field."""
        return sp.InnerProduct("cm", omega=self.omega, rho=self.rho, tau=self.tau)

    def eigenvalues(self, cutoff: int, dim: int):
        """Covariance eigenvalue per sinusoid, canonical enumeration order."""
        entries = sp.sinusoid_modes(cutoff, dim)
        ksq = np.array([float(sum(c * c for c in k)) for k, _ in entries])
        return (self.omega + self.rho * ksq) ** (-self.tau)


def sample_grf(spec: GrfSpec, grid: sp.GridSpec, count: int, cutoff: int | None = None):
    """Draw fields a = sum_k lam_k^{1/2} xi_k psi_k, xi_k iid standard normal.

    Each sample uses its own derived stream (spec.seed, index), so sample i
    does not depend on count and generation parallelizes deterministically.
    """
    cutoff = grid.max_band if cutoff is None else cutoff
    lam_half = np.sqrt(spec.eigenvalues(cutoff, grid.dim))
    basis_flat = sp.sinusoid_basis(grid, cutoff).reshape(lam_half.size, -1)
    out = []
    for i in range(count):
        rng = np.random.default_rng([spec.seed, i])
        xi = rng.standard_normal(lam_half.size)
        vals = (xi * lam_half) @ basis_flat
        out.append(sp.GridFunction(vals.reshape((1,) + grid.shape), grid))
    return out


# ---------------------------------------------------------------------------
# spectral calculus helpers (values without channel axes)

def _grad(values, grid: sp.GridSpec):
    """Per-axis spectral derivatives, Nyquist rows dropped (odd operator)."""
    vhat = np.fft.fftn(values)
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    k[grid.n // 2] = 0.0
    out = np.empty((grid.dim,) + grid.shape)
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = grid.n
        out[ax] = np.fft.ifftn(1j * k.reshape(shape) * vhat).real
    return out


def _div(vec_values, grid: sp.GridSpec):
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    k[grid.n // 2] = 0.0
    out = np.zeros(grid.shape)
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = grid.n
        out += np.fft.ifftn(1j * k.reshape(shape) * np.fft.fftn(vec_values[ax])).real
    return out


def _l2_norm(values, grid: sp.GridSpec) -> float:
    return float(np.sqrt(grid.cell_measure * np.sum(values**2)))


@dataclass
class PdeSpec:
    """Forcing and solver tolerances for the diffusion-reaction problem."""

    forcing: sp.GridFunction
    newton_tol: float = 1e-10
    max_newton: int = 50
    lin_tol: float = 1e-12

    def __post_init__(self):
        if self.newton_tol <= 0 or self.lin_tol <= 0:
            raise ValueError("tolerances must be positive")


def bump_forcing(grid: sp.GridSpec, centers=None, width=np.pi / 8, amplitude=1.0):
    """Sum of periodized Gaussian bumps; the default four sit on a 2x2
    pattern at the quarter points."""
    if centers is None:
        q = (np.pi / 2, 3 * np.pi / 2)
        if grid.dim == 2:
            centers = [(a, b) for a in q for b in q]
        else:
            centers = [tuple([c] + [np.pi] * (grid.dim - 1)) for c in q]
    coords = grid.coords()
    vals = np.zeros(grid.shape)
    for c in centers:
        dsq = np.zeros(grid.shape)
        for ax in range(grid.dim):
            d = np.abs(coords[ax] - c[ax])
            d = np.minimum(d, 2 * np.pi - d)
            dsq += d * d
        vals += amplitude * np.exp(-dsq / (2 * width**2))
    return sp.GridFunction(vals[None], grid)


class LinearizedPde:
    """Frozen linearization -div(e^a grad .) + 3u^2 . at a state (a, u).

    Holds the coefficient fields and the Fourier preconditioner so repeated
    right-hand sides reuse the same operators; ``solves`` counts CG calls.
    """

    def __init__(self, grid: sp.GridSpec, a_values, u_values, lin_tol=1e-12):
        self.grid = grid
        self.lin_tol = lin_tol
        self.ea = np.exp(np.asarray(a_values).reshape(grid.shape))
        u = np.asarray(u_values).reshape(grid.shape)
        self.grad_u = np.stack([self.ea * g for g in _grad(u, grid)])
        self.react = 3.0 * u * u
        eps = max(float(np.mean(self.react)), 1e-6)
        self._pinv = 1.0 / (float(np.mean(self.ea)) * sp.ksq_grid(grid) + eps)
        self.solves = 0

    def apply(self, du):
        du = du.reshape(self.grid.shape)
        flux = self.ea * _grad(du, self.grid)
        return -_div(flux, self.grid) + self.react * du

    def _precondition(self, r):
        return np.fft.ifftn(self._pinv * np.fft.fftn(r.reshape(self.grid.shape))).real

    def solve(self, rhs):
        """CG solve of apply(du) = rhs (symmetric positive semi-definite)."""
        g = self.grid
        n = g.size
        op = LinearOperator((n, n), matvec=lambda x: self.apply(x).ravel())
        pre = LinearOperator((n, n), matvec=lambda x: self._precondition(x).ravel())
        rhs = np.asarray(rhs).reshape(g.shape)
        sol, info = cg(op, rhs.ravel(), rtol=self.lin_tol, atol=0.0, M=pre,
                       maxiter=20 * g.n * g.dim)
        if info != 0:
            raise RuntimeError(f"inner CG did not converge (info={info})")
        self.solves += 1
        return sol.reshape(g.shape)

    def sensitivity_rhs(self, da):
        """Right-hand side div(da e^a grad u) of the forward sensitivity."""
        da = np.asarray(da).reshape(self.grid.shape)
        return _div(da * self.grad_u, self.grid)

    def jvp(self, da):
        return self.solve(self.sensitivity_rhs(da))

    def adjoint(self, w):
        """Euclidean transpose of jvp: returns -e^a grad u . grad(lam)."""
        lam = self.solve(np.asarray(w).reshape(self.grid.shape))
        gl = _grad(lam, self.grid)
        return -np.sum(self.grad_u * gl, axis=0)


def newton_solve(spec: PdeSpec, a: sp.GridFunction):
    """Damped Newton iteration; returns (u, info) with the residual history."""
    grid = a.grid
    f = spec.forcing.values[0]
    if spec.forcing.grid != grid:
        f = sp.resample(spec.forcing, grid).values[0]
    ea = np.exp(a.values[0])
    u = np.full(grid.shape, np.cbrt(float(np.mean(f))))

    def residual(v):
        return -_div(ea * _grad(v, grid), grid) + v**3 - f

    r = residual(u)
    history = [_l2_norm(r, grid)]
    converged = history[-1] <= spec.newton_tol
    it = 0
    while not converged and it < spec.max_newton:
        lin = LinearizedPde(grid, a.values, u, spec.lin_tol)
        du = lin.solve(-r)
        step = 1.0
        for _ in range(50):
            cand = u + step * du
            rc = residual(cand)
            if _l2_norm(rc, grid) < history[-1]:
                break
            step *= 0.5
        u, r = cand, rc
        history.append(_l2_norm(r, grid))
        converged = history[-1] <= spec.newton_tol
        it += 1
    info = {"iterations": it, "residuals": history, "converged": converged}
    return sp.GridFunction(u[None], grid), info


def solve_pde(spec: PdeSpec, a: sp.GridFunction) -> sp.GridFunction:
    u, info = newton_solve(spec, a)
    if not info["converged"]:
        raise RuntimeError(
            "Newton did not converge; residual history "
            + ", ".join(f"{r:.3e}" for r in info["residuals"])
        )
    return u


def solve_sensitivity(
    spec: PdeSpec, a: sp.GridFunction, u: sp.GridFunction, da: sp.GridFunction
) -> sp.GridFunction:
    """Forward sensitivity du with -div(e^a grad du) + 3u^2 du = div(da e^a grad u)."""
    lin = LinearizedPde(a.grid, a.values, u.values, spec.lin_tol)
    return sp.GridFunction(lin.jvp(da.values)[None], a.grid)


# ---------------------------------------------------------------------------
# operators behind one protocol: forward(a) and linearize(a, u)

class PdeOperator:
    """PDE solution map a -> u with its linearization factory."""

    def __init__(self, spec: PdeSpec, grid: sp.GridSpec):
        self.spec = spec
        self.grid = grid

    def forward(self, a: sp.GridFunction) -> sp.GridFunction:
        return solve_pde(self.spec, a)

    def linearize(self, a: sp.GridFunction, u: sp.GridFunction) -> LinearizedPde:
        return LinearizedPde(a.grid, a.values, u.values, self.spec.lin_tol)


class ToyLinearized:
    """Derivative of the toy operator at a: da -> K(sech^2(a) da)."""

    def __init__(self, grid, weight_hat, sech2):
        self.grid = grid
        self._w = weight_hat
        self._s = sech2
        self.solves = 0

    def _smooth(self, v):
        return np.fft.ifftn(self._w * np.fft.fftn(v)).real

    def jvp(self, da):
        self.solves += 1
        return self._smooth(self._s * np.asarray(da).reshape(self.grid.shape))

    def adjoint(self, w):
        self.solves += 1
        return self._s * self._smooth(np.asarray(w).reshape(self.grid.shape))


class ToyOperator:
    """G(a) = K tanh(a) with K the band-limited kernel (1+|k|^2)^{-1}.

    Diagonal in Fourier and with a closed-form derivative, so losses,
    reduction and training can be exercised without PDE solves.  The kernel
    is realized on whatever grid the input lives on (band capped there).
    """

    def __init__(self, grid: sp.GridSpec, cutoff: int = 8):
        self.grid = grid
        self.cutoff = cutoff
        self._weights = {}

    def _weight(self, grid: sp.GridSpec):
        if grid.n not in self._weights:
            band = min(self.cutoff, grid.max_band)
            mask = sp.mode_mask(grid, band)
            self._weights[grid.n] = mask / (1.0 + sp.ksq_grid(grid))
        return self._weights[grid.n]

    def forward(self, a: sp.GridFunction) -> sp.GridFunction:
        v = np.tanh(a.values[0])
        u = np.fft.ifftn(self._weight(a.grid) * np.fft.fftn(v)).real
        return sp.GridFunction(u[None], a.grid)

    def linearize(self, a: sp.GridFunction, u=None) -> ToyLinearized:
        t = np.tanh(a.values[0])
        return ToyLinearized(a.grid, self._weight(a.grid), 1.0 - t * t)


def toy_operator(a: sp.GridFunction, cutoff: int = 8):
    """One-shot form: (u, exact jvp closure) at the given input."""
    op = ToyOperator(a.grid, cutoff)
    lin = op.linearize(a)
    u = op.forward(a)

    def jvp(da: sp.GridFunction) -> sp.GridFunction:
        return sp.GridFunction(lin.jvp(da.values)[None], a.grid)

    return u, jvp


# ---------------------------------------------------------------------------
# Jacobian assembly in declared bases

def assemble_jacobian(
    lin, solver_grid: sp.GridSpec, in_basis: ReducedBasis, out_basis: ReducedBasis
) -> JacobianMatrix:
    """J[j, k] = <phi_j, DG psi_k>_Y through min(r_in, r_out) linear solves.

    Forward sweeps over the input basis when it is the smaller one,
    otherwise adjoint sweeps over the output basis; both give identical
    matrices because every transport step is transposed exactly.
    """
    if in_basis.channels != 1 or out_basis.channels != 1:
        raise ValueError("scalar operators expect single-channel bases")
    r_in, r_out = in_basis.rank, out_basis.rank
    vals = np.empty((r_out, r_in))
    if r_in <= r_out:
        for k in range(r_in):
            psi = sp.GridFunction(in_basis.fields[k], in_basis.grid)
            du = lin.jvp(sp.resample(psi, solver_grid).values[0])
            du_f = sp.GridFunction(du[None], solver_grid)
            on_out = sp.resample(du_f, out_basis.grid)
            vals[:, k] = out_basis.coefficients(on_out.values[None])[0]
    else:
        psis = np.stack([
            sp.resample(sp.GridFunction(f, in_basis.grid), solver_grid).values[0]
            for f in in_basis.fields
        ])
        for j in range(r_out):
            w = out_basis.weighted_flat()[j].reshape((1,) + out_basis.grid.shape)
            w_f = sp.resample_adjoint(
                sp.GridFunction(w, out_basis.grid), solver_grid
            ).values[0]
            q = lin.adjoint(w_f)
            vals[j] = psis.reshape(r_in, -1) @ q.ravel()
    return JacobianMatrix(vals, in_basis.label, out_basis.label)


# ---------------------------------------------------------------------------
# dataset generation

@dataclass
class OperatorSample:
    a: sp.GridFunction
    u: sp.GridFunction
    jacobian: JacobianMatrix | None
    index: int


def generate_dataset(
    grf: GrfSpec,
    pde: PdeSpec | None,
    grid: sp.GridSpec,
    count: int,
    jacobian_mode: str = "none",
    in_basis: ReducedBasis | None = None,
    out_basis: ReducedBasis | None = None,
    coarse_native: bool = False,
    operator=None,
    cutoff: int | None = None,
):
    """Draw inputs, solve the operator, optionally attach Jacobians.

    jacobian_mode:
      none     outputs only;
      full     bases must span the full retained band of their grids;
      reduced  min(r_in, r_out) sensitivity solves per sample in the given
               bases;
      coarse   bases on a coarser grid; by default sensitivities are solved
               on the data grid and projected ("fine-then-project"), with
               coarse_native=True they are solved on the basis grid.

    Returns (samples, manifest); the manifest records every choice needed
    to reproduce the files bitwise.
    """
    if jacobian_mode not in ("none", "full", "reduced", "coarse"):
        raise ValueError(f"unknown jacobian_mode {jacobian_mode!r}")
    if jacobian_mode != "none" and (in_basis is None or out_basis is None):
        raise ValueError(f"jacobian_mode {jacobian_mode!r} needs both bases")
    op = operator if operator is not None else PdeOperator(pde, grid)
    native = jacobian_mode == "coarse" and coarse_native
    samples = []
    solve_counts = []
    for i, a in enumerate(sample_grf(grf, grid, count, cutoff=cutoff)):
        u = op.forward(a)
        jac = None
        if jacobian_mode != "none":
            if native:
                a_j = sp.resample(a, in_basis.grid)
                u_j = op.forward(a_j)
                lin = op.linearize(a_j, u_j)
                jgrid = in_basis.grid
            else:
                lin = op.linearize(a, u)
                jgrid = grid
            jac = assemble_jacobian(lin, jgrid, in_basis, out_basis)
            solve_counts.append(lin.solves)
        samples.append(OperatorSample(a, u, jac, i))
    manifest = {
        "seed": grf.seed,
        "count": count,
        "grid_dim": grid.dim,
        "grid_n": grid.n,
        "grf_omega": grf.omega,
        "grf_rho": grf.rho,
        "grf_tau": grf.tau,
        "jacobian_mode": jacobian_mode,
        "jacobian_provenance": (
            "none" if jacobian_mode == "none"
            else "native-coarse" if native else "fine-then-project"
        ),
        "in_basis": None if in_basis is None else in_basis.label,
        "out_basis": None if out_basis is None else out_basis.label,
        "solves_per_sample": solve_counts,
        "operator": type(op).__name__,
    }
    return samples, manifest


def dataset_arrays(samples):
    """Stack a dataset into training arrays (a, u, jac-or-None)."""
    a = np.stack([s.a.values for s in samples])
    u = np.stack([s.u.values for s in samples])
    jac = None
    if samples and samples[0].jacobian is not None:
        jac = np.stack([s.jacobian.values for s in samples])
    return a, u, jac
