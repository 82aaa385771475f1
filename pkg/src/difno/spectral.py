"""Spectral algebra on the periodic torus [0, 2*pi)^d.

Conventions used throughout the package:

* Fourier coefficients are defined by u_hat(k) = (2*pi)^{-d} \\int u(x)
  exp(-i<k,x>) dx, realized on an n^d grid as fftn(values) / n^d with
  numpy's frequency ordering.  The inverse is values = n^d * ifftn(coeffs),
  i.e. u(x) = sum_k u_hat(k) exp(i<k,x>).
* The Sobolev inner product of order s is
  <u, v>_{H^s} = (2*pi)^d * sum_k (1 + |k|^2)^s u_hat(k) conj(v_hat(k)),
  which for s = 0 coincides with the trapezoid quadrature of \\int u v.
* Mode cutoffs are in the max norm: the retained set for cutoff N is
  {k : |k|_inf <= N}, which requires 2N + 1 <= n.  The Nyquist row
  (frequency -n/2 on even grids) is never part of a retained set, and the
  full discrete mode band of a grid is |k|_inf <= n/2 - 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: ``n`` points per axis on [0, 2*pi)^dim."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 2, got {self.n}")

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def size(self):
        return self.n**self.dim

    @property
    def spacing(self):
        return TWO_PI / self.n

    @property
    def cell_measure(self):
        return self.spacing**self.dim

    @property
    def max_band(self):
        """Largest symmetric mode cutoff the grid resolves (Nyquist excluded)."""
        return self.n // 2 - 1

    def axis_coords(self):
        return TWO_PI * np.arange(self.n) / self.n

    def coords(self):
        """Meshgrid of coordinates, tuple of dim arrays of shape ``shape``."""
        x = self.axis_coords()
        return np.meshgrid(*([x] * self.dim), indexing="ij")


@dataclass
class GridFunction:
    """Real multi-channel field sampled on a grid: values (channels, n, ..., n)."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expect = (self.values.shape[0],) + self.grid.shape
        if self.values.shape != expect:
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"(channels,) + {self.grid.shape}"
            )

    @property
    def channels(self):
        return self.values.shape[0]


@dataclass
class SpectralField:
    """Fourier coefficients in numpy FFT ordering: coeffs (channels, n, ..., n)."""

    coeffs: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        expect = (self.coeffs.shape[0],) + self.grid.shape
        if self.coeffs.shape != expect:
            raise ValueError(
                f"coeffs shape {self.coeffs.shape} does not match "
                f"(channels,) + {self.grid.shape}"
            )

    @property
    def channels(self):
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class SobolevSpec:
    """Sobolev smoothness tag: base order plus a shift (total = order + delta)."""

    order: float
    delta: float = 0.0

    @property
    def total(self):
        return self.order + self.delta


@dataclass(frozen=True)
class InnerProduct:
    """Diagonal-in-Fourier inner product on grid fields.

    kind "l2": weight 1.  kind "sobolev": weight (1 + |k|^2)^order.
    kind "cm": Cameron-Martin weight (omega + rho |k|^2)^tau, the inverse
    covariance spectrum of the Matern-type field used for sampling inputs.
    """

    kind: str = "l2"
    order: float = 0.0
    omega: float = 0.0
    rho: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if self.kind not in ("l2", "sobolev", "cm"):
            raise ValueError(f"unknown inner product kind {self.kind!r}")

    def weight(self, ksq):
        if self.kind == "l2":
            return np.ones_like(np.asarray(ksq, dtype=np.float64))
        if self.kind == "sobolev":
            return (1.0 + ksq) ** self.order
        return (self.omega + self.rho * ksq) ** self.tau

    @property
    def tag(self):
        if self.kind == "l2":
            return "l2"
        if self.kind == "sobolev":
            return f"sobolev:{self.order:g}"
        return f"cm:{self.omega:g},{self.rho:g},{self.tau:g}"


# ---------------------------------------------------------------------------
# transforms

_GRID_AXES = {1: (-1,), 2: (-2, -1), 3: (-3, -2, -1)}


def grid_axes(dim):
    return _GRID_AXES[dim]


def fft_coeffs(values, dim):
    """fftn over the trailing dim axes, normalized to Fourier coefficients."""
    n = values.shape[-1]
    return np.fft.fftn(values, axes=_GRID_AXES[dim]) / n**dim


def ifft_values(coeffs, dim):
    """Inverse of fft_coeffs; complex output, callers take .real as needed."""
    n = coeffs.shape[-1]
    return np.fft.ifftn(coeffs, axes=_GRID_AXES[dim]) * n**dim


def dft_forward(f: GridFunction) -> SpectralField:
    return SpectralField(fft_coeffs(f.values, f.grid.dim), f.grid)


def dft_inverse(field: SpectralField) -> GridFunction:
    """Inverse transform; discards the imaginary residue (real-part map)."""
    return GridFunction(ifft_values(field.coeffs, field.grid.dim).real, field.grid)


def wavenumbers(grid: GridSpec):
    """Signed integer frequencies per axis in numpy FFT ordering."""
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    return [k] * grid.dim


def ksq_grid(grid: GridSpec):
    """|k|^2 on the full FFT grid, shape grid.shape."""
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    mats = np.meshgrid(*([k] * grid.dim), indexing="ij")
    out = np.zeros(grid.shape)
    for m in mats:
        out += m * m
    return out


def mode_mask(grid: GridSpec, cutoff: int):
    """Boolean mask of modes with |k|_inf <= cutoff."""
    if 2 * cutoff + 1 > grid.n:
        raise ValueError(f"cutoff {cutoff} too large for grid n={grid.n}")
    k = np.abs(np.fft.fftfreq(grid.n, d=1.0 / grid.n))
    keep = k <= cutoff
    mask = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = grid.n
        mask &= keep.reshape(shape)
    return mask


def project_modes(f: GridFunction, cutoff: int) -> GridFunction:
    """Spectral projection onto |k|_inf <= cutoff (idempotent, H^s-contractive)."""
    mask = mode_mask(f.grid, cutoff)
    coeffs = fft_coeffs(f.values, f.grid.dim) * mask
    return GridFunction(ifft_values(coeffs, f.grid.dim).real, f.grid)


# ---------------------------------------------------------------------------
# Sobolev inner products

def sobolev_inner(f: GridFunction, g: GridFunction, spec: SobolevSpec) -> float:
    """<f, g>_{H^s} with s = spec.total, summed over channels."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    w = (1.0 + ksq_grid(f.grid)) ** spec.total
    fh = fft_coeffs(f.values, f.grid.dim)
    gh = fft_coeffs(g.values, g.grid.dim)
    return float(TWO_PI**f.grid.dim * np.sum(w * (fh * np.conj(gh)).real))


def sobolev_norm(f: GridFunction, spec: SobolevSpec) -> float:
    return float(np.sqrt(max(sobolev_inner(f, f, spec), 0.0)))


def ip_apply(values, grid: GridSpec, ip: InnerProduct):
    """Weighting operator W with <u, v>_ip = sum_j (W u)_j v_j (plain dot).

    W u = (2*pi)^d / n^d * ifftn(w(k) * fftn(u)); real input gives real
    output up to rounding, the imaginary part is discarded.
    """
    w = ip.weight(ksq_grid(grid))
    hat = np.fft.fftn(values, axes=_GRID_AXES[grid.dim]) * w
    out = np.fft.ifftn(hat, axes=_GRID_AXES[grid.dim]).real
    return out * (TWO_PI**grid.dim / grid.size)


def ip_inner(u, v, grid: GridSpec, ip: InnerProduct) -> float:
    """Inner product of raw value arrays (channels summed) under ``ip``."""
    return float(np.sum(ip_apply(u, grid, ip) * v))


# ---------------------------------------------------------------------------
# truncated transforms and packed coefficient vectors

def mode_list(cutoff: int, dim: int):
    """All modes |k|_inf <= cutoff in lexicographic order, shape (K, dim)."""
    rng = range(-cutoff, cutoff + 1)
    return np.array(list(itertools.product(rng, repeat=dim)), dtype=np.int64)


def mode_count(cutoff: int, dim: int) -> int:
    return (2 * cutoff + 1) ** dim


def _flat_indices(modes, n):
    """Flat index of each mode row into the FFT grid of shape (n,)*dim."""
    idx = np.zeros(len(modes), dtype=np.int64)
    for ax in range(modes.shape[1]):
        idx = idx * n + (modes[:, ax] % n)
    return idx


def gather_modes(coeffs, grid: GridSpec, modes):
    """Pick listed modes out of full FFT coefficients -> (..., K) complex."""
    flat = coeffs.reshape(coeffs.shape[: -grid.dim] + (grid.size,))
    return flat[..., _flat_indices(modes, grid.n)]


def scatter_modes(vals, grid: GridSpec, modes):
    """Embed (..., K) mode values into zero-padded full FFT coefficients."""
    out = np.zeros(vals.shape[:-1] + (grid.size,), dtype=np.complex128)
    out[..., _flat_indices(modes, grid.n)] = vals
    return out.reshape(vals.shape[:-1] + grid.shape)


@dataclass
class CoeffVector:
    """Packed real coefficient vector of a truncated transform.

    Layout: for channels c and the K = (2*cutoff+1)^dim modes in
    lexicographic order, ``data`` is [Re(c_0 modes...), Re(c_1 modes...),
    ..., Im(c_0 modes...), ...]: all real parts (channel-major, mode-minor)
    followed by all imaginary parts, length 2 * K * channels.
    """

    data: np.ndarray
    cutoff: int
    dim: int
    channels: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        expect = 2 * mode_count(self.cutoff, self.dim) * self.channels
        if self.data.shape != (expect,):
            raise ValueError(
                f"packed length {self.data.shape} != ({expect},) for "
                f"cutoff={self.cutoff} dim={self.dim} channels={self.channels}"
            )

    def complex_coeffs(self):
        """Unpack to (channels, K) complex in lexicographic mode order."""
        k = mode_count(self.cutoff, self.dim)
        half = self.channels * k
        re = self.data[:half].reshape(self.channels, k)
        im = self.data[half:].reshape(self.channels, k)
        return re + 1j * im


def truncated_forward(f: GridFunction, cutoff: int) -> CoeffVector:
    """Forward transform restricted to |k|_inf <= cutoff, packed real."""
    modes = mode_list(cutoff, f.grid.dim)
    c = gather_modes(fft_coeffs(f.values, f.grid.dim), f.grid, modes)
    data = np.concatenate([c.real.ravel(), c.imag.ravel()])
    return CoeffVector(data, cutoff, f.grid.dim, f.channels)


def truncated_inverse(cv: CoeffVector, grid: GridSpec) -> GridFunction:
    """Inverse of truncated_forward on the given grid (real part taken)."""
    if grid.dim != cv.dim:
        raise ValueError("dimension mismatch")
    if 2 * cv.cutoff + 1 > grid.n:
        raise ValueError(f"cutoff {cv.cutoff} too large for grid n={grid.n}")
    modes = mode_list(cv.cutoff, cv.dim)
    coeffs = scatter_modes(cv.complex_coeffs(), grid, modes)
    return GridFunction(ifft_values(coeffs, grid.dim).real, grid)


# ---------------------------------------------------------------------------
# spectral resampling between grids

def resample(f: GridFunction, target: GridSpec) -> GridFunction:
    """Transport f to another grid through the shared symmetric mode band.

    Modes up to min(max_band) are copied; everything else (including the
    source Nyquist rows) is dropped.  Band-limited functions move without
    loss in either direction.
    """
    if target.dim != f.grid.dim:
        raise ValueError("dimension mismatch")
    if target == f.grid:
        return GridFunction(f.values.copy(), target)
    band = min(f.grid.max_band, target.max_band)
    modes = mode_list(band, f.grid.dim)
    c = gather_modes(fft_coeffs(f.values, f.grid.dim), f.grid, modes)
    coeffs = scatter_modes(c, target, modes)
    return GridFunction(ifft_values(coeffs, target.dim).real, target)


def resample_adjoint(w: GridFunction, source: GridSpec) -> GridFunction:
    """Euclidean adjoint of ``resample`` from ``source`` to w.grid.

    Equals (n_target / n_source)^dim times the reverse resample, because
    the band restriction is symmetric.
    """
    scale = (w.grid.n / source.n) ** source.dim
    back = resample(w, source)
    return GridFunction(back.values * scale, source)


# ---------------------------------------------------------------------------
# real sinusoidal basis

def positive_modes(cutoff: int, dim: int):
    """Half of the nonzero modes: first nonzero component positive.

    Ordered by (|k|^2, lexicographic); pairing each with its negation and
    adding k = 0 recovers the full cube of (2*cutoff+1)^dim modes.
    """
    out = []
    for k in itertools.product(range(-cutoff, cutoff + 1), repeat=dim):
        for comp in k:
            if comp > 0:
                out.append(k)
                break
            if comp < 0:
                break
    out.sort(key=lambda k: (sum(c * c for c in k), k))
    return out


def sinusoid_modes(cutoff: int, dim: int):
    """Enumeration of the real sinusoid family for |k|_inf <= cutoff.

    Entries are (k, phase) with phase in {"const", "cos", "sin"}; the
    constant comes first, then cos/sin pairs over positive_modes.  The
    family has exactly (2*cutoff+1)^dim members.
    """
    entries = [((0,) * dim, "const")]
    for k in positive_modes(cutoff, dim):
        entries.append((k, "cos"))
        entries.append((k, "sin"))
    return entries


def sinusoid_field(grid: GridSpec, k, phase, order: float = 0.0):
    """One H^order-orthonormal sinusoid sampled on the grid, shape grid.shape.

    L2 normalization: (2*pi)^{-d/2} for the constant, sqrt(2/(2*pi)^d) for
    cos/sin; the H^order member divides by (1 + |k|^2)^{order/2}.
    """
    d = grid.dim
    scale = (1.0 + float(sum(c * c for c in k))) ** (-order / 2.0)
    if phase == "const":
        return np.full(grid.shape, (TWO_PI**d) ** -0.5 * scale)
    xs = grid.coords()
    arg = np.zeros(grid.shape)
    for c, x in zip(k, xs):
        arg += c * x
    amp = np.sqrt(2.0 / TWO_PI**d) * scale
    if phase == "cos":
        return amp * np.cos(arg)
    if phase == "sin":
        return amp * np.sin(arg)
    raise ValueError(f"unknown phase {phase!r}")


def sinusoid_basis(grid: GridSpec, cutoff: int, order: float = 0.0):
    """Stack of sinusoid_field over sinusoid_modes, shape (K, *grid.shape)."""
    entries = sinusoid_modes(cutoff, grid.dim)
    if 2 * cutoff + 1 > grid.n:
        raise ValueError(f"cutoff {cutoff} too large for grid n={grid.n}")
    return np.stack([sinusoid_field(grid, k, ph, order) for k, ph in entries])
