"""Spectral calculus for ``A_eps``, the scale family ``Q_t, dC_t, C_t`` and
exact Gaussian sampling on the torus.

Every translation-invariant operator here is a :class:`SpectralMultiplier`:
one real value per Fourier mode, applied by FFT.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from . import rng
from .errors import ConfigurationError, InvalidCovarianceError, ShapeError
from .lattice import (
    LatticeGeometry,
    MassParams,
    check_field,
    dense_precision,
    mode_eigenvalues,
)

log = logging.getLogger(__name__)

IMAG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralMultiplier:
    geometry: LatticeGeometry
    mass: MassParams
    values: np.ndarray  # shape geometry.shape

    def __post_init__(self):
        vals = np.broadcast_to(np.asarray(self.values, dtype=float), self.geometry.shape).copy()
        if not np.all(np.isfinite(vals)):
            raise ValueError("multiplier values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, geom: LatticeGeometry, mass: MassParams, f: Callable[[np.ndarray], np.ndarray]):
        return cls(geom, mass, f(mode_eigenvalues(geom, mass)))

    @property
    def eigenvalues(self) -> np.ndarray:
        return mode_eigenvalues(self.geometry, self.mass)

    def compose(self, other: "SpectralMultiplier") -> "SpectralMultiplier":
        return SpectralMultiplier(self.geometry, self.mass, self.values * other.values)

    def map(self, f) -> "SpectralMultiplier":
        return SpectralMultiplier(self.geometry, self.mass, f(self.values))

    def dense(self) -> np.ndarray:
        eye = np.eye(self.geometry.num_sites)
        return apply_multiplier(self, eye).T

    def __call__(self, phi):
        return apply_multiplier(self, phi)


def apply_multiplier(mult: SpectralMultiplier, phi: np.ndarray) -> np.ndarray:
    geom = mult.geometry
    phi = check_field(geom, phi)
    g = geom.grid(phi)
    out = np.fft.ifftn(np.fft.fftn(g, axes=geom.axes) * mult.values, axes=geom.axes)
    scale = np.linalg.norm(phi) + 1e-300
    if np.max(np.abs(out.imag), initial=0.0) > IMAG_TOL * scale:
        raise ShapeError("multiplier produced a complex field; values are not mode-symmetric")
    return geom.flat(out.real)


def identity(geom, mass) -> SpectralMultiplier:
    return SpectralMultiplier(geom, mass, np.ones(geom.shape))


def precision(geom, mass) -> SpectralMultiplier:
    """``A_eps`` itself."""
    return SpectralMultiplier.from_function(geom, mass, lambda a: a)


def covariance(geom, mass) -> SpectralMultiplier:
    """``A_eps^{-1}``, the covariance of the free field."""
    return SpectralMultiplier.from_function(geom, mass, lambda a: 1.0 / a)


# ---------------------------------------------------------------------------
# scale schedules
# ---------------------------------------------------------------------------

class HeatKernelSchedule:
    """``dC_t = exp(-t A)``; infinite horizon."""

    kind = "heat-kernel"
    tau = math.inf

    def rate(self, t: float, a: np.ndarray) -> np.ndarray:
        return np.exp(-t * a)

    def cumulative(self, t: float, a: np.ndarray) -> np.ndarray:
        if math.isinf(t):
            return 1.0 / a
        return -np.expm1(-t * a) / a

    def __repr__(self):
        return "HeatKernelSchedule()"


HEAT_KERNEL = HeatKernelSchedule()


def truncated_heat_rate(tau: float):
    def rate(t, a):
        return np.exp(-t * a) / -np.expm1(-tau * a)
    rate.__name__ = "truncated_heat"
    return rate


def linear_rate(tau: float):
    def rate(t, a):
        return np.ones_like(t * a) / (tau * a)
    rate.__name__ = "linear"
    return rate


@dataclass(eq=False)
class TabulatedSchedule:
    """Finite-horizon schedule ``t -> dC_t(a)`` tabulated on a time grid.

    The rate is interpolated piecewise-linearly; ``C_t`` is the exact integral
    of the interpolant.  Completeness ``C_tau = 1/a`` is restored per mode by
    rescaling the tabulated rate.
    """

    rate_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    tau: float
    t_grid: np.ndarray | None = None
    n_grid: int = 8001
    kind: str = "tabulated"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigurationError("tabulated schedules need a finite tau > 0", field="schedule.tau")
        if self.t_grid is None:
            self.t_grid = np.linspace(0.0, self.tau, self.n_grid)
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if self.t_grid[0] != 0.0 or not np.isclose(self.t_grid[-1], self.tau) or np.any(np.diff(self.t_grid) <= 0):
            raise ConfigurationError("time grid must increase from 0 to tau", field="schedule.t_grid")

    def _table(self, a: np.ndarray):
        a = np.asarray(a, dtype=float)
        key = a.tobytes() + str(a.shape).encode()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        t = self.t_grid
        flat = a.reshape(-1)
        rates = np.asarray(self.rate_fn(t[:, None], flat[None, :]), dtype=float)
        rates = np.broadcast_to(rates, (t.size, flat.size)).copy()
        if np.any(rates < 0):
            raise InvalidCovarianceError("schedule rate must be nonnegative")
        h = np.diff(t)[:, None]
        cum = np.concatenate([np.zeros((1, flat.size)), np.cumsum(0.5 * h * (rates[1:] + rates[:-1]), axis=0)])
        total = cum[-1]
        rel = np.max(np.abs(1.0 - total * flat))
        if rel > 1e-6:
            log.warning("schedule completeness off by %.3g (relative); rescaling the rate", rel)
        factor = 1.0 / (flat * total)
        rates *= factor
        cum *= factor
        table = (rates, cum, a.shape)
        self._cache[key] = table
        return table

    def _locate(self, t: float):
        if t < 0 or t > self.tau * (1 + 1e-12):
            raise ConfigurationError(f"t={t} outside [0, tau={self.tau}]", field="t")
        t = min(max(t, 0.0), self.tau)
        j = int(np.clip(np.searchsorted(self.t_grid, t, side="right") - 1, 0, self.t_grid.size - 2))
        return j, t - self.t_grid[j], self.t_grid[j + 1] - self.t_grid[j]

    def rate(self, t: float, a: np.ndarray) -> np.ndarray:
        rates, _, shape = self._table(a)
        j, s, h = self._locate(t)
        return (rates[j] + (rates[j + 1] - rates[j]) * s / h).reshape(shape)

    def cumulative(self, t: float, a: np.ndarray) -> np.ndarray:
        rates, cum, shape = self._table(a)
        j, s, h = self._locate(t)
        val = cum[j] + rates[j] * s + 0.5 * (rates[j + 1] - rates[j]) * s * s / h
        return val.reshape(shape)


def truncated_heat_schedule(tau: float, n_grid: int = 8001) -> TabulatedSchedule:
    return TabulatedSchedule(truncated_heat_rate(tau), tau, n_grid=n_grid, kind="truncated-heat")


def linear_schedule(tau: float, n_grid: int = 8001) -> TabulatedSchedule:
    return TabulatedSchedule(linear_rate(tau), tau, n_grid=n_grid, kind="linear")


def scale_multipliers(geom, mass, schedule=HEAT_KERNEL, t: float = 0.0):
    """``(Q_t, dC_t, C_t)`` as multipliers.  ``Q_t`` is the square root of ``dC_t``."""
    if t < 0:
        raise ConfigurationError(f"t must be nonnegative, got {t}", field="t")
    if t > schedule.tau:
        raise ConfigurationError(f"t={t} beyond schedule horizon {schedule.tau}", field="t")
    a = mode_eigenvalues(geom, mass)
    rate = schedule.rate(t, a)
    return (
        SpectralMultiplier(geom, mass, np.sqrt(rate)),
        SpectralMultiplier(geom, mass, rate),
        SpectralMultiplier(geom, mass, schedule.cumulative(t, a)),
    )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _check_cov(cov: SpectralMultiplier):
    if np.any(cov.values < 0):
        raise InvalidCovarianceError("covariance multiplier has a negative mode")


def color_noise(cov: SpectralMultiplier, white: np.ndarray) -> np.ndarray:
    """Map real white noise to ``N(0, cov)`` samples.

    The FFT of real white noise is a Hermitian-symmetric array of complex
    Gaussians (real on self-conjugate modes), so scaling by ``sqrt(cov)`` and
    inverting gives exactly the covariance ``cov`` as an operator.
    """
    _check_cov(cov)
    return apply_multiplier(cov.map(np.sqrt), white)


def sample_gaussian(cov: SpectralMultiplier, seed: int, n: int | None = None,
                    tag: str = "gaussian", start: int = 0) -> np.ndarray:
    """Exact samples of ``N(0, cov)``; one field if ``n`` is None."""
    _check_cov(cov)
    count = 1 if n is None else n
    white = rng.standard_normal(seed, tag, (count, cov.geometry.num_sites), start=start)
    out = color_noise(cov, white)
    return out[0] if n is None else out


def dense_covariance(cov: SpectralMultiplier) -> np.ndarray:
    return cov.dense()


def ou_transition(geom: LatticeGeometry, mass: MassParams, t: float, phi: np.ndarray,
                  seed: int, n: int | None = None, tag: str = "ou") -> np.ndarray:
    """Exact transition of ``dPhi = -A Phi dt + sqrt(2) dB`` over time ``t``.

    Computed in real space from the stencil matrix: the mean via a matrix
    exponential and the covariance from the Lyapunov equation
    ``A S + S A = 2 (I - e^{-tA} e^{-tA})``.  Independent of the FFT path.
    """
    if t < 0:
        raise ConfigurationError(f"t must be nonnegative, got {t}", field="t")
    phi = check_field(geom, phi)
    if t == 0:
        return phi.copy() if n is None else np.broadcast_to(phi, (n, geom.num_sites)).copy()
    A = dense_precision(geom, mass)
    E = scipy.linalg.expm(-t * A)
    rhs = 2.0 * (np.eye(geom.num_sites) - E @ E)
    S = scipy.linalg.solve_continuous_lyapunov(A, rhs)
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    count = 1 if n is None else n
    white = rng.standard_normal(seed, tag, (count, geom.num_sites))
    out = phi @ E.T + white @ root.T
    return out[0] if n is None else out


def ou_lemma_estimates(geom: LatticeGeometry, mass: MassParams, t: float, phi: np.ndarray,
                       functions, n: int, seed: int) -> list[dict]:
    """Two independent estimates of ``U_{t/2} F(phi)`` for each ``F``.

    One averages ``F`` over exact OU transitions of duration ``t/2``; the other
    averages ``F(Q_t phi + zeta)`` with ``zeta ~ N(0, C_t)`` sampled spectrally.
    """
    phi = check_field(geom, phi)
    q, _, c = scale_multipliers(geom, mass, HEAT_KERNEL, t)
    direct = ou_transition(geom, mass, t / 2.0, phi, seed, n, tag="ou-lemma-transition")
    mixed = apply_multiplier(q, phi)[None, :] + sample_gaussian(c, seed, n, tag="ou-lemma-gaussian")
    out = []
    for fn in functions:
        f1, f2 = np.asarray(fn(direct), dtype=float), np.asarray(fn(mixed), dtype=float)
        m1, m2 = float(f1.mean()), float(f2.mean())
        s1, s2 = float(f1.std(ddof=1) / math.sqrt(n)), float(f2.std(ddof=1) / math.sqrt(n))
        se = math.hypot(s1, s2)
        out.append({
            "function": getattr(fn, "name", getattr(fn, "__name__", "F")),
            "t": t,
            "transition_mean": m1,
            "transition_se": s1,
            "gaussian_mean": m2,
            "gaussian_se": s2,
            "difference": m1 - m2,
            "combined_se": se,
            "agree": abs(m1 - m2) <= 3.0 * se,
        })
    return out
