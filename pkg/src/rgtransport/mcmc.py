"""Metropolis-adjusted Langevin reference sampler for ``nu ~ exp(-V_0) gamma``."""
from __future__ import annotations

import logging
import math

import numpy as np

from . import rng
from .ensemble import FieldEnsemble
from .errors import ConfigurationError, StepSizeError
from .gaussian import apply_multiplier, covariance, precision, sample_gaussian
from .lattice import LatticeGeometry, MassParams
from .potentials import PotentialModel

log = logging.getLogger(__name__)


def mala_sample(model: PotentialModel, geom: LatticeGeometry, mass: MassParams, n: int,
                step: float, burnin: int, seed: int, n_chains: int = 100, thin: int = 10,
                preconditioned: bool = True) -> FieldEnsemble:
    """Run ``n_chains`` independent MALA chains in lockstep.

    With ``preconditioned=True`` the proposal uses the free-field covariance
    ``M = A^{-1}``: ``phi' = phi + h M grad log pi + sqrt(2h) M^{1/2} xi``,
    which makes the Gaussian part of the target isotropic.  Accept/reject is
    exact against the unnormalised density ``exp(-V_0 - (phi, A phi)/2)``.

    Samples are stored chain-major, so each chain is one error block.
    """
    if not step > 0:
        raise ConfigurationError("step must be positive", field="mcmc.step")
    if n < 1 or burnin < 1:
        raise ConfigurationError("n and burnin must be at least 1", field="mcmc")
    n_chains = max(1, min(n_chains, n))
    per_chain = math.ceil(n / n_chains)
    A = precision(geom, mass)
    M = covariance(geom, mass) if preconditioned else None
    Mroot = M.map(np.sqrt) if preconditioned else None

    def logpi(x):
        return -model.value(x) - 0.5 * np.sum(x * apply_multiplier(A, x), axis=-1)

    def grad(x):
        return -model.gradient(x) - apply_multiplier(A, x)

    def precond(v):
        return apply_multiplier(M, v) if preconditioned else v

    def qnorm(d):
        # |d|^2 in the metric M^{-1}
        return np.sum(d * (apply_multiplier(A, d) if preconditioned else d), axis=-1)

    gen = rng.stream(seed, "mala")
    x = sample_gaussian(covariance(geom, mass), seed, n_chains, tag="mala-init")
    lp, g = logpi(x), grad(x)
    out = np.empty((n_chains, per_chain, geom.num_sites))
    accepted = 0
    total = 0
    n_iter = burnin + per_chain * thin
    kept = 0
    for it in range(n_iter):
        xi = gen.standard_normal(x.shape)
        noise = apply_multiplier(Mroot, xi) if preconditioned else xi
        mean_x = x + step * precond(g)
        y = mean_x + math.sqrt(2 * step) * noise
        lp_y, g_y = logpi(y), grad(y)
        mean_y = y + step * precond(g_y)
        log_alpha = lp_y - lp - qnorm(x - mean_y) / (4 * step) + qnorm(y - mean_x) / (4 * step)
        accept = np.log(gen.random(n_chains)) < log_alpha
        x = np.where(accept[:, None], y, x)
        lp = np.where(accept, lp_y, lp)
        g = np.where(accept[:, None], g_y, g)
        if it >= burnin:
            accepted += int(accept.sum())
            total += n_chains
            if (it - burnin) % thin == thin - 1:
                out[:, kept] = x
                kept += 1
    rate = accepted / max(total, 1)
    if rate < 0.01:
        raise StepSizeError(f"MALA acceptance rate {rate:.4f} below 1%; reduce the step")
    # keeps whole chains, so the count is rounded up to a multiple of n_chains
    samples = out.reshape(-1, geom.num_sites)
    meta = {
        "acceptance_rate": rate,
        "step": step,
        "burnin": burnin,
        "thin": thin,
        "n_chains": n_chains,
        "preconditioned": preconditioned,
        "model": model.name,
    }
    return FieldEnsemble(samples, geom, "mcmc-nu", seed=seed, metadata=meta, n_blocks=n_chains)
