"""Data-driven reduced bases: sample PCA, analytic prior truncation, and
derivative-informed subspaces.

All three constructions return a ``ReducedBasis`` (see bases.py), so the
Jacobian and loss machinery treats them uniformly.  Everything is computed
in a weighted coefficient representation: for the basis inner product with
spectral weight w, a field u is represented by the sinusoid coefficient
vector of W^{1/2} u, in which the inner product is the plain dot product
and eigenproblems become ordinary symmetric ones.
"""

from __future__ import annotations

import numpy as np

from . import spectral as sp
from .bases import ReducedBasis, check_orthonormal, sinusoid_channel_basis


def _fix_signs(vecs):
    """Columns scaled so the largest-magnitude entry is positive.

    Eigenvectors are only defined up to sign; pinning the sign makes every
    downstream artifact reproducible bit for bit.
    """
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def pca_from_samples(
    samples,
    grid: sp.GridSpec,
    inner: sp.InnerProduct,
    rank: int,
    center: bool = True,
    label: str | None = None,
) -> ReducedBasis:
    """Principal directions of a sample set under ``inner``.

    samples: (m, channels, *grid.shape).  The empirical covariance is
    diagonalized through the m x m Gram matrix of the (centered) samples,
    never forming the full covariance; eigenfields are linear combinations
    of the samples, orthonormalized under ``inner``.  rank is capped by the
    number of informative samples.
    """
    samples = np.asarray(samples, dtype=np.float64)
    m = samples.shape[0]
    if samples.shape[2:] != grid.shape:
        raise ValueError("samples do not match the grid")
    work = samples - samples.mean(axis=0) if center else samples
    flat = work.reshape(m, -1)
    wflat = sp.ip_apply(work, grid, inner).reshape(m, -1)
    gram = flat @ wflat.T  # <u_i, u_j>_inner, symmetric PSD
    gram = 0.5 * (gram + gram.T)
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    tol = max(m, flat.shape[1]) * np.finfo(float).eps * max(evals[0], 0.0)
    informative = int(np.sum(evals > tol))
    rank = min(rank, informative)
    if rank == 0:
        raise ValueError("no informative sample directions")
    evals = evals[:rank]
    evecs = _fix_signs(evecs[:, :rank])
    # eigenfield Phi_j = sum_i (evec_ij / sqrt(lam_j)) u_i, unit inner norm
    coeff = evecs / np.sqrt(evals)
    fields = (coeff.T @ flat).reshape((rank,) + samples.shape[1:])
    rb = ReducedBasis(
        fields, grid, inner,
        label or f"pca:m={m},r={rank},ip={inner.tag}",
        eigenvalues=evals / m,
    )
    check_orthonormal(rb, tol=1e-6)
    return rb


def kle_basis(
    grid: sp.GridSpec,
    cutoff: int,
    channels: int,
    inner: sp.InnerProduct,
    rank: int | None = None,
    label: str | None = None,
) -> ReducedBasis:
    """Leading eigenpairs of the diagonal prior covariance.

    The covariance with spectral weight w(k) has the sinusoids as
    eigenfields with eigenvalues w(k)^{-1}; this returns them sorted by
    descending eigenvalue (ties broken by the canonical sinusoid order),
    scaled to unit norm under ``inner`` itself.
    """
    full = sinusoid_channel_basis(grid, cutoff, channels, inner)
    lam = full.eigenvalues
    order = np.argsort(-lam, kind="stable")
    if rank is not None:
        order = order[:rank]
    return ReducedBasis(
        full.fields[order], grid, inner,
        label or f"kle:N={cutoff},r={len(order)},ip={inner.tag}",
        eigenvalues=lam[order],
    )


def dis_input_basis(
    jacobians,
    in_basis: ReducedBasis,
    rank: int,
    label: str | None = None,
) -> ReducedBasis:
    """Derivative-informed input subspace.

    jacobians: coefficient matrices (r_out, r_in) of sample derivatives in
    orthonormal bases.  Diagonalizes the expected sensitivity
    mean_i J_i^T J_i; the leading eigenvectors give the input directions
    whose perturbation moves the output most on average, materialized as
    fields through ``in_basis``.
    """
    mats = [np.asarray(J.values if hasattr(J, "values") else J) for J in jacobians]
    r_in = mats[0].shape[1]
    if r_in != in_basis.rank:
        raise ValueError("jacobian columns do not match the input basis rank")
    acc = np.zeros((r_in, r_in))
    for m in mats:
        acc += m.T @ m
    acc /= len(mats)
    evals, evecs = np.linalg.eigh(acc)
    order = np.argsort(evals)[::-1][:rank]
    evals = evals[order]
    evecs = _fix_signs(evecs[:, order])
    fields = in_basis.synthesize(evecs.T)
    return ReducedBasis(
        fields, in_basis.grid, in_basis.inner,
        label or f"dis-in:r={rank},from={in_basis.label}",
        eigenvalues=evals,
    )


def dis_output_basis(
    jacobians,
    out_basis: ReducedBasis,
    rank: int,
    label: str | None = None,
) -> ReducedBasis:
    """Derivative-informed output subspace: eigenvectors of mean J J^T."""
    mats = [np.asarray(J.values if hasattr(J, "values") else J) for J in jacobians]
    r_out = mats[0].shape[0]
    if r_out != out_basis.rank:
        raise ValueError("jacobian rows do not match the output basis rank")
    acc = np.zeros((r_out, r_out))
    for m in mats:
        acc += m @ m.T
    acc /= len(mats)
    evals, evecs = np.linalg.eigh(acc)
    order = np.argsort(evals)[::-1][:rank]
    evals = evals[order]
    evecs = _fix_signs(evecs[:, order])
    fields = out_basis.synthesize(evecs.T)
    return ReducedBasis(
        fields, out_basis.grid, out_basis.inner,
        label or f"dis-out:r={rank},from={out_basis.label}",
        eigenvalues=evals,
    )


def captured_mass(jacobians, in_basis_rank: int, rows=None) -> float:
    """Fraction of mean squared Frobenius mass captured by the leading
    block, a cheap a-priori check on a proposed truncation."""
    mats = [np.asarray(J.values if hasattr(J, "values") else J) for J in jacobians]
    rows = rows if rows is not None else mats[0].shape[0]
    total = np.mean([np.sum(m**2) for m in mats])
    kept = np.mean([np.sum(m[:rows, :in_basis_rank] ** 2) for m in mats])
    return float(kept / total) if total > 0 else 1.0
