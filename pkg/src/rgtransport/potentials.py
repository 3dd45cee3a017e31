"""Interaction potentials ``V_0`` with analytic derivatives.

All methods accept batched fields of shape ``(..., num_sites)``.  Local
models return their Hessian as the diagonal (shape ``(..., num_sites)``);
non-local models return dense matrices.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidCovarianceError
from .gaussian import SpectralMultiplier, apply_multiplier
from .lattice import LatticeGeometry, MassParams, check_field

log = logging.getLogger(__name__)

DENSE_SITE_CAP = 256


class PotentialModel:
    """Base interface.  Subclasses set ``local`` and implement the three maps."""

    local = True
    name = "potential"

    def __init__(self, geometry: LatticeGeometry):
        self.geometry = geometry

    def value(self, phi):
        raise NotImplementedError

    def gradient(self, phi):
        raise NotImplementedError

    def hessian(self, phi):
        raise NotImplementedError

    def dense_hessian(self, phi) -> np.ndarray:
        h = self.hessian(phi)
        if not self.local:
            return h
        n = self.geometry.num_sites
        out = np.zeros(h.shape + (n,))
        idx = np.arange(n)
        out[..., idx, idx] = h
        return out

    def gradient_bound(self) -> float:
        """Uniform bound on ``|grad V_0|``; ``inf`` when there is none."""
        return math.inf

    def extremal_fields(self) -> np.ndarray:
        """Fields where the Hessian is extremal; used as adversarial probes."""
        return np.zeros((0, self.geometry.num_sites))

    # -- hooks used by the renormalisation estimator -----------------------
    # ``zeta`` has shape (I, n); ``phi`` has shape (F, n).

    def prepare_noise(self, zeta):
        return zeta

    def noise_values(self, phi, noise):
        """``V_0(phi_j + zeta_i)``, shape ``(F, I)``."""
        return self.value(phi[:, None, :] + noise[None, :, :])

    def noise_gradients(self, phi, noise):
        """``grad V_0(phi_j + zeta_i)``, shape ``(F, I, n)``."""
        return self.gradient(phi[:, None, :] + noise[None, :, :])

    def noise_weighted_gradient(self, phi, noise, w):
        """``sum_i w_ji grad V_0(phi_j + zeta_i)``, shape ``(F, n)``."""
        return np.einsum("fi,fin->fn", w, self.noise_gradients(phi, noise))

    def noise_weighted_hessian(self, phi, noise, w):
        """``sum_i w_ji hess V_0(phi_j + zeta_i)``; diagonal ``(F, n)`` if local."""
        x = phi[:, None, :] + noise[None, :, :]
        if self.local:
            return np.einsum("fi,fin->fn", w, self.hessian(x))
        return np.einsum("fi,finm->fnm", w, self.hessian(x))


class ZeroPotential(PotentialModel):
    name = "zero"

    def value(self, phi):
        phi = check_field(self.geometry, phi)
        return np.zeros(phi.shape[:-1])

    def gradient(self, phi):
        return np.zeros_like(check_field(self.geometry, phi))

    def hessian(self, phi):
        return np.zeros_like(check_field(self.geometry, phi))

    def gradient_bound(self):
        return 0.0


@dataclass(frozen=True)
class SineGordonParams:
    z: float
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}", field="model.beta")

    @property
    def outside_verified_regime(self) -> bool:
        return self.beta >= 6 * math.pi


class SineGordonModel(PotentialModel):
    """``V_0(phi) = -sum_x 2 z eps^(2 - beta/4pi) cos(sqrt(beta) phi_x)``."""

    name = "sine-gordon"

    def __init__(self, geometry: LatticeGeometry, params: SineGordonParams):
        super().__init__(geometry)
        self.params = params
        if params.outside_verified_regime:
            log.warning("beta=%g is outside beta < 6 pi", params.beta)
        if geometry.d != 2:
            log.warning("sine-Gordon coupling exponent is the d=2 one; geometry has d=%d", geometry.d)
        self.sqrt_beta = math.sqrt(params.beta)
        self.coupling = 2.0 * params.z * geometry.eps ** (2.0 - params.beta / (4.0 * math.pi))

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.sqrt_beta

    def value(self, phi):
        phi = check_field(self.geometry, phi)
        return -self.coupling * np.cos(self.sqrt_beta * phi).sum(axis=-1)

    def gradient(self, phi):
        phi = check_field(self.geometry, phi)
        return self.coupling * self.sqrt_beta * np.sin(self.sqrt_beta * phi)

    def hessian(self, phi):
        phi = check_field(self.geometry, phi)
        return self.coupling * self.params.beta * np.cos(self.sqrt_beta * phi)

    def gradient_bound(self):
        return abs(self.coupling) * self.sqrt_beta * math.sqrt(self.geometry.num_sites)

    def extremal_fields(self):
        n = self.geometry.num_sites
        return np.stack([np.zeros(n), np.full(n, 0.5 * self.period)])

    # cos/sin addition formulas turn the noise sums into matrix products
    def prepare_noise(self, zeta):
        arg = self.sqrt_beta * zeta
        return np.cos(arg), np.sin(arg)

    def noise_values(self, phi, noise):
        cz, sz = noise
        arg = self.sqrt_beta * phi
        return -self.coupling * (np.cos(arg) @ cz.T - np.sin(arg) @ sz.T)

    def noise_gradients(self, phi, noise):
        cz, sz = noise
        arg = self.sqrt_beta * phi
        s = np.sin(arg)[:, None, :] * cz[None] + np.cos(arg)[:, None, :] * sz[None]
        return self.coupling * self.sqrt_beta * s

    def noise_weighted_gradient(self, phi, noise, w):
        cz, sz = noise
        arg = self.sqrt_beta * phi
        return self.coupling * self.sqrt_beta * (np.sin(arg) * (w @ cz) + np.cos(arg) * (w @ sz))

    def noise_weighted_hessian(self, phi, noise, w):
        cz, sz = noise
        arg = self.sqrt_beta * phi
        return self.coupling * self.params.beta * (np.cos(arg) * (w @ cz) - np.sin(arg) * (w @ sz))


class QuadraticModel(PotentialModel):
    """Gaussian perturbation ``V_0 = (phi, B phi)/2`` with ``B = b(A_eps)``."""

    name = "quadratic"
    local = False

    def __init__(self, geometry: LatticeGeometry, mass: MassParams, b: SpectralMultiplier):
        super().__init__(geometry)
        if np.any(b.values < 0):
            raise InvalidCovarianceError("quadratic multiplier must be nonnegative")
        self.mass = mass
        self.b = b
        # B = b * Id is a local model; keep the cheap diagonal path for it
        self.local = bool(np.all(b.values == b.values.flat[0]))
        self._bdense = None

    @property
    def bmatrix(self) -> np.ndarray:
        if self._bdense is None:
            self._bdense = self.b.dense()
        return self._bdense

    def value(self, phi):
        phi = check_field(self.geometry, phi)
        return 0.5 * np.sum(phi * apply_multiplier(self.b, phi), axis=-1)

    def gradient(self, phi):
        return apply_multiplier(self.b, check_field(self.geometry, phi))

    def hessian(self, phi):
        phi = check_field(self.geometry, phi)
        if self.local:
            return np.full(phi.shape, self.b.values.flat[0])
        return np.broadcast_to(self.bmatrix, phi.shape[:-1] + self.bmatrix.shape).copy()

    def noise_weighted_hessian(self, phi, noise, w):
        total = w.sum(axis=1)
        if self.local:
            return total[:, None] * self.b.values.flat[0] * np.ones((1, self.geometry.num_sites))
        return total[:, None, None] * self.bmatrix[None]


def sine_gordon_model(geom: LatticeGeometry, params: SineGordonParams) -> SineGordonModel:
    return SineGordonModel(geom, params)


def quadratic_model(geom: LatticeGeometry, mass: MassParams, b: SpectralMultiplier) -> QuadraticModel:
    return QuadraticModel(geom, mass, b)


@dataclass(frozen=True)
class DerivativeReport:
    gradient_error: float
    hessian_error: float
    gradient_scale: float
    hessian_scale: float

    @property
    def gradient_relative(self) -> float:
        return self.gradient_error / max(self.gradient_scale, 1e-300)


def check_derivatives(model: PotentialModel, phi: np.ndarray, h: float = 1e-5) -> DerivativeReport:
    """Compare analytic derivatives with central differences (max norms)."""
    if not h > 0:
        raise ConfigurationError("finite-difference step must be positive", field="h")
    phi = check_field(model.geometry, phi)
    n = phi.shape[-1]
    steps = h * np.eye(n)
    plus, minus = phi + steps, phi - steps
    fd_grad = (model.value(plus) - model.value(minus)) / (2 * h)
    fd_hess = (model.gradient(plus) - model.gradient(minus)) / (2 * h)
    fd_hess = 0.5 * (fd_hess + fd_hess.T)
    grad = model.gradient(phi)
    hess = model.dense_hessian(phi)
    return DerivativeReport(
        gradient_error=float(np.max(np.abs(fd_grad - grad), initial=0.0)),
        hessian_error=float(np.max(np.abs(fd_hess - hess), initial=0.0)),
        gradient_scale=float(np.max(np.abs(grad), initial=0.0)),
        hessian_scale=float(np.max(np.abs(hess), initial=0.0)),
    )
