"""Reduced basis container and the sinusoid channel construction."""

import numpy as np
import pytest

from difno import bases
from difno import spectral as sp


@pytest.fixture(scope="module")
def grid():
    return sp.GridSpec(2, 16)


def test_rank_and_field_count(grid):
    ip = sp.InnerProduct("l2")
    rb = bases.sinusoid_channel_basis(grid, 2, 2, ip)
    assert rb.rank == 2 * 5 * 5
    assert rb.channels == 2
    assert rb.fields.shape == (rb.rank, 2) + grid.shape


def test_orthonormal_l2(grid):
    ip = sp.InnerProduct("l2")
    rb = bases.sinusoid_channel_basis(grid, 2, 1, ip)
    assert rb.orthonormality_defect() < 1e-12
    bases.check_orthonormal(rb)


def test_orthonormal_sobolev_and_cm(grid):
    for ip in (
        sp.InnerProduct("sobolev", order=1.5),
        sp.InnerProduct("cm", omega=2.0, rho=0.5, tau=3.0),
    ):
        rb = bases.sinusoid_channel_basis(grid, 3, 2, ip)
        assert rb.orthonormality_defect() < 1e-11


def test_check_orthonormal_raises(grid):
    ip = sp.InnerProduct("l2")
    rb = bases.sinusoid_channel_basis(grid, 1, 1, ip)
    bad = bases.ReducedBasis(rb.fields * 2.0, grid, ip, "scaled")
    with pytest.raises(ValueError):
        bases.check_orthonormal(bad)


def test_coefficients_synthesize_round_trip(grid):
    ip = sp.InnerProduct("sobolev", order=1.0)
    rb = bases.sinusoid_channel_basis(grid, 2, 2, ip)
    rng = np.random.default_rng(0)
    w = rng.standard_normal((3, rb.rank))
    assert np.max(np.abs(rb.coefficients(rb.synthesize(w)) - w)) < 1e-11


def test_projection_of_in_band_field_is_exact(grid):
    ip = sp.InnerProduct("l2")
    rb = bases.sinusoid_channel_basis(grid, 2, 1, ip)
    f = sp.GridFunction(
        np.random.default_rng(1).standard_normal((1,) + grid.shape), grid
    )
    f = sp.project_modes(f, 2)
    w = rb.coefficients(f.values[None])
    back = rb.synthesize(w)[0]
    assert np.max(np.abs(back - f.values)) < 1e-11


def test_eigenvalues_follow_weight(grid):
    ip = sp.InnerProduct("cm", omega=1.0, rho=1.0, tau=2.0)
    rb = bases.sinusoid_channel_basis(grid, 2, 1, ip)
    modes = sp.positive_modes(2, 2)
    ksq0 = float(np.dot(modes[0], modes[0])) if len(modes) else 0.0
    assert rb.eigenvalues is not None
    # first entry is the constant mode, weight (omega)^tau
    assert np.isclose(rb.eigenvalues[0], 1.0)
    assert np.all(np.diff(rb.eigenvalues) <= 1e-15)  # sorted descending? no:
    # enumeration is by (|k|^2, lex), so eigenvalues are non-increasing
    assert rb.eigenvalues[0] >= rb.eigenvalues[-1]


def test_scale_power_zero_gives_unit_l2(grid):
    # scale_power 0 leaves raw L2-orthonormal sinusoids regardless of ip
    ip = sp.InnerProduct("sobolev", order=2.0)
    rb = bases.sinusoid_channel_basis(grid, 2, 1, ip, scale_power=0.0)
    l2 = sp.InnerProduct("l2")
    gram = bases.ReducedBasis(rb.fields, grid, l2, "raw").gram()
    assert np.max(np.abs(gram - np.eye(rb.rank))) < 1e-12


def test_subset(grid):
    ip = sp.InnerProduct("l2")
    rb = bases.sinusoid_channel_basis(grid, 2, 2, ip)
    sub = rb.subset(7)
    assert sub.rank == 7
    assert np.array_equal(sub.fields, rb.fields[:7])
    assert sub.orthonormality_defect() < 1e-12
