from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rgtransport.errors import ConfigurationError, ShapeError, UnsupportedDimensionError
from rgtransport.lattice import (
    MassParams,
    build_geometry,
    dense_precision,
    fourier_modes,
    laplacian_apply,
    laplacian_symbol,
    mode_eigenvalues,
    mode_vector,
    precision_opnorm,
)


def test_geometry_counts():
    g = build_geometry(2, 1, 0.5)
    assert (g.N, g.num_sites) == (2, 4)
    g = build_geometry(1, 1, 1)
    assert (g.N, g.num_sites) == (1, 1)


def test_non_integral_ratio_rejected():
    with pytest.raises(ConfigurationError) as exc:
        build_geometry(2, 1, 0.3)
    assert "geometry.eps" in str(exc.value)


def test_ratio_within_tolerance_is_rounded():
    g = build_geometry(2, 1.0, 1.0 / 3.0)
    assert g.N == 3


def test_unsupported_dimension():
    with pytest.raises(UnsupportedDimensionError):
        build_geometry(3, 1, 0.5)


def test_mass_must_be_positive():
    with pytest.raises(ConfigurationError):
        MassParams(0.0)


def test_laplacian_constant_field_is_zero(square4):
    assert np.allclose(laplacian_apply(square4, np.full(16, 3.7)), 0.0)


def test_laplacian_single_site_is_zero():
    for d in (1, 2):
        g = build_geometry(d, 1, 1)
        assert laplacian_apply(g, np.array([2.5]))[0] == 0.0


def test_laplacian_cosine_mode_1d():
    g = build_geometry(1, 4, 1)
    phi = np.cos(2 * np.pi * np.arange(4) / 4)
    assert np.allclose(laplacian_apply(g, phi), -2.0 * phi, atol=1e-14)


def test_laplacian_shape_mismatch(square4):
    with pytest.raises(ShapeError):
        laplacian_apply(square4, np.zeros(5))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(1, 4, 1.0), (2, 1, 0.5), (2, 1, 0.25), (2, 3, 1.0)]), st.integers(0, 2**31))
def test_laplacian_symmetric_and_mean_free(shape, seed):
    g = build_geometry(*shape)
    rng = np.random.default_rng(seed)
    phi, psi = rng.standard_normal((2, g.num_sites))
    lhs = phi @ laplacian_apply(g, psi)
    rhs = laplacian_apply(g, phi) @ psi
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs)) * g.num_sites / g.eps**2
    assert abs(laplacian_apply(g, phi).sum()) <= 1e-10 * np.linalg.norm(phi) / g.eps**2


def test_spectral_consistency_on_real_modes():
    g = build_geometry(2, 3, 0.5)
    sym = laplacian_symbol(g)
    for k in np.ndindex(*g.shape):
        v = mode_vector(g, k)
        assert np.allclose(laplacian_apply(g, v), -sym[k] * v, atol=1e-10 * (1 + sym[k]))


def test_mode_eigenvalue_examples(unit_mass):
    g = build_geometry(2, 5, 1.0)
    assert mode_eigenvalues(g, unit_mass)[0, 0] == pytest.approx(1.0)
    g2 = build_geometry(2, 2, 1.0)
    assert mode_eigenvalues(g2, unit_mass)[1, 1] == pytest.approx(9.0)
    assert precision_opnorm(build_geometry(2, 1, 0.5), unit_mass) == pytest.approx(4.0)


def test_modes_match_dense_stencil(unit_mass):
    for g in (build_geometry(2, 1, 0.5), build_geometry(2, 3, 1.0), build_geometry(1, 5, 0.5)):
        dense = np.linalg.eigvalsh(dense_precision(g, unit_mass))
        fft = np.sort([a for _, a in fourier_modes(g, unit_mass)])
        assert np.allclose(dense, fft, rtol=1e-12, atol=1e-12)
        a = mode_eigenvalues(g, unit_mass)
        assert a.min() == pytest.approx(g.eps**g.d * unit_mass.m)
        assert np.all(a > 0)


def test_row_major_indexing():
    g = build_geometry(2, 3, 1.0)
    coords = g.coordinates()
    assert coords[5].tolist() == [1, 2]
    phi = np.arange(9.0)
    assert g.grid(phi)[1, 2] == 5.0
