"""Orthonormal field bases and weighted coefficient extraction.

A ``ReducedBasis`` is an ordered family of multi-channel grid fields,
orthonormal under a diagonal-in-Fourier inner product.  Full sinusoid
families, spectrally scaled (Sobolev or Cameron-Martin) variants, and the
data-driven bases from the reduction module all use this one representation,
so Jacobian assembly and losses never branch on basis provenance; the
``label`` doubles as the compatibility tag checked by the loss functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp


@dataclass
class ReducedBasis:
    """fields (r, channels, *grid.shape), orthonormal under ``inner``."""

    fields: np.ndarray
    grid: sp.GridSpec
    inner: sp.InnerProduct
    label: str
    eigenvalues: np.ndarray | None = None
    _wflat: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.fields = np.asarray(self.fields, dtype=np.float64)
        if self.fields.ndim != 2 + self.grid.dim:
            raise ValueError("fields must be (r, channels, *grid.shape)")
        if self.fields.shape[2:] != self.grid.shape:
            raise ValueError("fields do not match the grid")

    @property
    def rank(self):
        return self.fields.shape[0]

    @property
    def channels(self):
        return self.fields.shape[1]

    def weighted_flat(self):
        """Rows W phi_j flattened, so coefficients are a plain matmul."""
        if self._wflat is None:
            w = sp.ip_apply(self.fields, self.grid, self.inner)
            self._wflat = w.reshape(self.rank, -1)
        return self._wflat

    def coefficients(self, values):
        """<phi_j, u>_inner for u values (..., channels, *grid.shape) -> (..., r)."""
        flat = np.asarray(values).reshape(values.shape[: -1 - self.grid.dim] + (-1,))
        return flat @ self.weighted_flat().T

    def synthesize(self, coeffs):
        """sum_j c_j phi_j for coeffs (..., r) -> values (..., channels, *shape)."""
        coeffs = np.asarray(coeffs)
        flat = coeffs @ self.fields.reshape(self.rank, -1)
        return flat.reshape(coeffs.shape[:-1] + (self.channels,) + self.grid.shape)

    def gram(self):
        return self.weighted_flat() @ self.fields.reshape(self.rank, -1).T

    def orthonormality_defect(self):
        return float(np.max(np.abs(self.gram() - np.eye(self.rank))))

    def subset(self, keep, label: str | None = None) -> "ReducedBasis":
        """First ``keep`` members, or the members at an index array."""
        ind = np.arange(keep) if np.isscalar(keep) else np.asarray(keep)
        return subset(self, ind, label=label)


def check_orthonormal(basis: ReducedBasis, tol: float = 1e-8):
    defect = basis.orthonormality_defect()
    if defect > tol:
        raise ValueError(
            f"basis {basis.label!r} is not orthonormal under {basis.inner.tag}: "
            f"Gram defect {defect:.3e} > {tol:.1e}"
        )


def sinusoid_channel_basis(
    grid: sp.GridSpec,
    cutoff: int,
    channels: int,
    inner: sp.InnerProduct,
    scale_power: float = 0.5,
    label: str | None = None,
) -> ReducedBasis:
    """Full sinusoid family per channel, scaled to be orthonormal under
    ``inner``.

    Each member is one sinusoid in one channel (zeros elsewhere), scaled by
    w(k)^{-scale_power} where w is the inner product's spectral weight;
    scale_power = 1/2 is the orthonormal choice (any other value is exposed
    for experimentation and will fail the Gram check).  Ordering is
    channel-major over the sinusoid enumeration.  Rank = channels * K.
    """
    raw = sp.sinusoid_basis(grid, cutoff)  # (K, *shape), L2-orthonormal
    entries = sp.sinusoid_modes(cutoff, grid.dim)
    ksq = np.array([float(sum(c * c for c in k)) for k, _ in entries])
    scale = np.asarray(inner.weight(ksq), dtype=np.float64) ** (-scale_power)
    scaled = raw * scale[(slice(None),) + (None,) * grid.dim]
    k = len(entries)
    fields = np.zeros((channels * k, channels) + grid.shape)
    for c in range(channels):
        fields[c * k : (c + 1) * k, c] = scaled
    tag = label or f"sinusoid:N={cutoff},ch={channels},ip={inner.tag}"
    # eigenvalues: w(k)^{-1}, the diagonal covariance/weight spectrum tiled
    eig = np.tile(np.asarray(inner.weight(ksq), dtype=np.float64) ** -1.0, channels)
    return ReducedBasis(fields, grid, inner, tag, eigenvalues=eig)


def subset(basis: ReducedBasis, indices, label: str | None = None) -> ReducedBasis:
    ind = np.asarray(indices)
    eig = None if basis.eigenvalues is None else basis.eigenvalues[ind]
    return ReducedBasis(
        basis.fields[ind],
        basis.grid,
        basis.inner,
        label or f"{basis.label}[subset:{len(ind)}]",
        eigenvalues=eig,
    )
