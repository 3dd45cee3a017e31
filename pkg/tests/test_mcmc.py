from __future__ import annotations

import numpy as np
import pytest

from conftest import make_quadratic, make_sine_gordon
from rgtransport.errors import ConfigurationError, StepSizeError
from rgtransport.lattice import dense_precision
from rgtransport.mcmc import mala_sample
from rgtransport.potentials import ZeroPotential


def _site_variance_check(ens, target):
    x2 = ens.samples**2
    mean, se = ens.mean_se(x2)
    assert np.all(np.abs(mean - target) <= 4 * se), (mean, target, se)


def test_free_field_variances(square2, unit_mass):
    ens = mala_sample(ZeroPotential(square2), square2, unit_mass, 20_000, 0.5, 200, seed=1, n_chains=100, thin=2)
    target = np.diag(np.linalg.inv(dense_precision(square2, unit_mass)))
    _site_variance_check(ens, target)
    assert ens.measure == "mcmc-nu"
    assert ens.metadata["acceptance_rate"] > 0.5


def test_quadratic_variances(square2, unit_mass):
    ens = mala_sample(make_quadratic(square2, unit_mass, 1.0), square2, unit_mass, 20_000, 0.4, 200,
                      seed=2, n_chains=100, thin=2)
    target = np.diag(np.linalg.inv(dense_precision(square2, unit_mass) + np.eye(4)))
    _site_variance_check(ens, target)


def test_unpreconditioned_runs(square2, unit_mass):
    ens = mala_sample(make_sine_gordon(square2, 0.2), square2, unit_mass, 200, 0.05, 50, seed=0,
                      n_chains=10, preconditioned=False)
    assert ens.count == 200 and not ens.metadata["preconditioned"]


def test_deterministic(square2, unit_mass):
    model = make_sine_gordon(square2, 0.2)
    a = mala_sample(model, square2, unit_mass, 100, 0.3, 20, seed=4, n_chains=10)
    b = mala_sample(model, square2, unit_mass, 100, 0.3, 20, seed=4, n_chains=10)
    assert np.array_equal(a.samples, b.samples)


def test_step_validation(square2, unit_mass):
    with pytest.raises(ConfigurationError):
        mala_sample(ZeroPotential(square2), square2, unit_mass, 10, 0.0, 10, seed=0)
    with pytest.raises(StepSizeError):
        mala_sample(ZeroPotential(square2), square2, unit_mass, 100, 50.0, 20, seed=0, n_chains=10)
