"""Output and derivative losses with declared discretization weights.

The output loss is the quadratic form of a weighting operator applied to
the nodal residual; three variants are provided:

* "spectral":  exact H^s quadratic form through the FFT (order s);
* "fd-h1":     finite-difference H^1 energy, h^d sum(u^2) plus the forward
               difference quotients (agrees with spectral order 1 up to
               O(h^2) on smooth fields);
* "lumped":    diagonal L^2 lumping, h^d per node (equals spectral order 0
               on the grid by Parseval).

Derivative losses are squared Frobenius distances between Jacobian
coefficient matrices; matrices carry the labels of the bases they were
assembled in, and mixing labels raises instead of silently comparing
incompatible coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp

_VARIANTS = ("spectral", "fd-h1", "lumped")


@dataclass(frozen=True)
class WeightingTensor:
    """Symmetric positive weighting of nodal residuals on a grid."""

    grid: sp.GridSpec
    variant: str = "lumped"
    order: float = 0.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")

    def apply(self, values):
        """W u with quadratic(u) = sum(u * apply(u)) (plain Euclidean dot)."""
        values = np.asarray(values, dtype=np.float64)
        g = self.grid
        if self.variant == "spectral":
            ip = sp.InnerProduct("sobolev", order=self.order)
            return sp.ip_apply(values, g, ip)
        if self.variant == "lumped":
            return g.cell_measure * values
        # fd-h1: h^d (u + sum_ax D_ax^T D_ax u), forward differences
        h = g.spacing
        out = values.copy()
        for ax in range(g.dim):
            axis = values.ndim - g.dim + ax
            d = (np.roll(values, -1, axis=axis) - values) / h
            out += (np.roll(d, 1, axis=axis) - d) / h
        return g.cell_measure * out

    def quadratic(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.apply(values)))

    def norm(self, values) -> float:
        return float(np.sqrt(max(self.quadratic(values), 0.0)))


def _batch_count(values, grid: sp.GridSpec) -> int:
    lead = values.shape[: values.ndim - 1 - grid.dim]
    return int(np.prod(lead)) if lead else 1


def output_loss(pred_values, target_values, wt: WeightingTensor) -> float:
    """Weighted squared residual, averaged over any leading batch axes.

    Values have shape (..., channels, *grid.shape); the loss is the mean
    over the leading axes of ||W^{1/2}(pred - target)||^2 per sample.
    """
    pred_values = np.asarray(pred_values)
    if pred_values.shape != np.shape(target_values):
        raise ValueError("output_loss requires matching pred/target shapes")
    r = pred_values - np.asarray(target_values)
    return wt.quadratic(r) / _batch_count(r, wt.grid)


def output_loss_grad(pred_values, target_values, wt: WeightingTensor):
    """Partial derivatives of output_loss with respect to pred nodal values."""
    pred_values = np.asarray(pred_values)
    r = pred_values - np.asarray(target_values)
    return 2.0 * wt.apply(r) / _batch_count(r, wt.grid)


@dataclass
class JacobianMatrix:
    """Coefficient matrix of a derivative operator in tagged bases.

    values[j, k] = <phi_j, D G(a) psi_k>_Y for output basis {phi_j} and
    input basis {psi_k}; the Frobenius norm then equals the Hilbert-Schmidt
    norm of the (projected) operator.
    """

    values: np.ndarray
    in_label: str
    out_label: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("JacobianMatrix values must be 2-D")

    @property
    def shape(self):
        return self.values.shape

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.values))


def _check_tags(a: JacobianMatrix, b: JacobianMatrix):
    if a.in_label != b.in_label or a.out_label != b.out_label:
        raise ValueError(
            "Jacobian basis mismatch: "
            f"({a.out_label!r}, {a.in_label!r}) vs ({b.out_label!r}, {b.in_label!r})"
        )
    if a.shape != b.shape:
        raise ValueError(f"Jacobian shape mismatch: {a.shape} vs {b.shape}")


def derivative_loss(model, target) -> float:
    """||J_model - J_target||_F^2 in matching bases; lists are averaged."""
    if isinstance(model, JacobianMatrix):
        _check_tags(model, target)
        return float(np.sum((model.values - target.values) ** 2))
    model = list(model)
    target = list(target)
    if len(model) != len(target):
        raise ValueError("derivative_loss requires equally long lists")
    return float(np.mean([derivative_loss(m, t) for m, t in zip(model, target)]))


def reduced_block(J: JacobianMatrix, rows, cols) -> JacobianMatrix:
    """Leading rows x cols block; labels follow the basis subset convention
    so the block compares cleanly against Jacobians assembled directly in
    the truncated bases."""
    vals = J.values[:rows, :cols]
    return JacobianMatrix(
        vals, f"{J.in_label}[subset:{cols}]", f"{J.out_label}[subset:{rows}]"
    )


def relative_output_error(pred_values, target_values, wt: WeightingTensor) -> float:
    """||W^{1/2}(pred-target)|| / ||W^{1/2} target||; nan for zero targets."""
    target_values = np.asarray(target_values)
    denom = wt.quadratic(target_values)
    if denom <= 0.0:
        return float("nan")
    return float(
        np.sqrt(wt.quadratic(np.asarray(pred_values) - target_values) / denom)
    )


def relative_derivative_error(model: JacobianMatrix, target: JacobianMatrix) -> float:
    _check_tags(model, target)
    denom = target.frobenius()
    if denom <= 0.0:
        return float("nan")
    return float(np.linalg.norm(model.values - target.values) / denom)


def error_summary(errors) -> dict:
    """Mean with explicit nan exclusion (zero-target samples)."""
    arr = np.asarray(list(errors), dtype=np.float64)
    mask = np.isnan(arr)
    kept = arr[~mask]
    return {
        "mean": float(np.mean(kept)) if kept.size else float("nan"),
        "max": float(np.max(kept)) if kept.size else float("nan"),
        "count": int(kept.size),
        "excluded": int(mask.sum()),
    }
