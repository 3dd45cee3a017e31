from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_quadratic, make_sine_gordon
from rgtransport.errors import ConfigurationError, InvalidCovarianceError, ShapeError
from rgtransport.gaussian import SpectralMultiplier
from rgtransport.lattice import build_geometry
from rgtransport.potentials import SineGordonParams, ZeroPotential, check_derivatives

fields16 = arrays(np.float64, 16, elements=st.floats(-5, 5))


def test_zero_coupling_vanishes(square4):
    model = make_sine_gordon(square4, 0.0)
    phi = np.random.default_rng(0).standard_normal((4, 16))
    assert np.all(model.value(phi) == 0.0)
    assert np.all(model.gradient(phi) == 0.0)
    assert np.all(model.hessian(phi) == 0.0)


def test_zero_potential(square4):
    model = ZeroPotential(square4)
    phi = np.ones((2, 16))
    assert np.all(model.value(phi) == 0) and np.all(model.gradient(phi) == 0)
    assert model.gradient_bound() == 0.0


def test_value_at_zero_field():
    g = build_geometry(2, 1.0, 0.25)
    z, beta = 0.05, 4.0
    model = make_sine_gordon(g, z, beta)
    coupling = 2 * z * 0.25 ** (2 - beta / (4 * math.pi))
    assert model.value(np.zeros(16)) == pytest.approx(-coupling * 16, rel=1e-14)


def test_beta_validation(square2):
    with pytest.raises(ConfigurationError):
        SineGordonParams(0.1, 0.0)
    assert SineGordonParams(0.1, 20.0).outside_verified_regime
    assert not SineGordonParams(0.1, 4.0).outside_verified_regime


def test_shape_errors(square4):
    model = make_sine_gordon(square4, 0.1)
    with pytest.raises(ShapeError):
        model.value(np.zeros(15))


@settings(max_examples=25, deadline=None)
@given(fields16)
def test_hessian_bounded_by_coupling(phi):
    g = build_geometry(2, 1.0, 0.25)
    model = make_sine_gordon(g, 0.3, 4.0)
    assert np.all(np.abs(model.hessian(phi)) <= model.coupling * 4.0 * (1 + 1e-14))
    assert np.linalg.norm(model.gradient(phi)) <= model.gradient_bound() * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(fields16, st.integers(-3, 3))
def test_periodicity(phi, k):
    g = build_geometry(2, 1.0, 0.25)
    model = make_sine_gordon(g, 0.3, 4.0)
    shifted = phi + k * model.period
    assert model.value(shifted) == pytest.approx(model.value(phi), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(fields16, st.integers(0, 3), st.integers(0, 3))
def test_translation_invariance(phi, sx, sy):
    g = build_geometry(2, 1.0, 0.25)
    model = make_sine_gordon(g, 0.3, 4.0)
    rolled = np.roll(phi.reshape(4, 4), (sx, sy), axis=(0, 1)).ravel()
    assert model.value(rolled) == pytest.approx(model.value(phi), abs=1e-12)


@pytest.mark.parametrize("build", [
    lambda g, m: make_sine_gordon(g, 0.2, 4.0),
    lambda g, m: make_quadratic(g, m, 0.7),
    lambda g, m: make_quadratic(g, m, 0.0),
])
def test_derivatives_match_differences(build, square4, unit_mass):
    model = build(square4, unit_mass)
    phi = np.random.default_rng(3).standard_normal(16)
    rep = check_derivatives(model, phi)
    assert rep.gradient_error <= 1e-6 * max(1.0, rep.gradient_scale)
    assert rep.hessian_error <= 1e-6 * max(1.0, rep.hessian_scale)


def test_non_local_quadratic_derivatives(square4, unit_mass):
    from rgtransport.lattice import mode_eigenvalues
    b = SpectralMultiplier(square4, unit_mass, 1.0 / (1.0 + mode_eigenvalues(square4, unit_mass)))
    model = make_quadratic(square4, unit_mass)
    model = type(model)(square4, unit_mass, b)
    assert not model.local
    rep = check_derivatives(model, np.random.default_rng(4).standard_normal(16))
    assert rep.hessian_error <= 1e-6 * max(1.0, rep.hessian_scale)


def test_quadratic_value(one_site, unit_mass):
    model = make_quadratic(one_site, unit_mass, 1.3)
    assert model.value(np.array([2.0])) == pytest.approx(2 * 1.3, rel=1e-14)


def test_quadratic_rejects_negative(square2, unit_mass):
    with pytest.raises(InvalidCovarianceError):
        make_quadratic(square2, unit_mass, -1.0)


def test_derivative_step_validation(square2):
    with pytest.raises(ConfigurationError):
        check_derivatives(make_sine_gordon(square2, 0.1), np.zeros(4), h=0.0)


def test_noise_sums_match_direct(square4):
    model = make_sine_gordon(square4, 0.2)
    rng = np.random.default_rng(5)
    phi = rng.standard_normal((3, 16))
    zeta = rng.standard_normal((7, 16))
    noise = model.prepare_noise(zeta)
    direct = np.array([[model.value(p + z) for z in zeta] for p in phi])
    assert np.allclose(model.noise_values(phi, noise), direct, atol=1e-13)
    grads = np.array([[model.gradient(p + z) for z in zeta] for p in phi])
    assert np.allclose(model.noise_gradients(phi, noise), grads, atol=1e-13)
    w = rng.random((3, 7))
    assert np.allclose(model.noise_weighted_gradient(phi, noise, w), np.einsum("pn,pni->pi", w, grads), atol=1e-13)
    hess = np.array([[model.hessian(p + z) for z in zeta] for p in phi])
    assert np.allclose(model.noise_weighted_hessian(phi, noise, w), np.einsum("pn,pni->pi", w, hess), atol=1e-13)
