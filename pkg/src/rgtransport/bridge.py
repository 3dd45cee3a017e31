"""Polchinski bridge: ``dX_t = -dC_{tau-t} grad V_{tau-t}(X_t) dt + dC_{tau-t}^{1/2} dB_t``.

Started at ``X_0 = 0`` the process ends with ``X_tau ~ nu``.  The drift is
stepped with Euler; the noise increment over ``[t_n, t_{n+1}]`` is drawn with
its exact covariance ``C_{tau-t_n} - C_{tau-t_{n+1}}`` so the driftless
process has the exact terminal law at any step count.  Noise is generated on
a grid ``refine`` times finer than the drift grid and summed, which couples
runs at different step counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .ensemble import FieldEnsemble
from .errors import ConfigurationError, InstabilityError
from .gaussian import SpectralMultiplier, apply_multiplier
from .lattice import LatticeGeometry, MassParams, check_field, mode_eigenvalues, mode_power
from .potentials import PotentialModel, QuadraticModel, ZeroPotential
from .renorm import MCEstimate, make_renormalizer

COMPLETENESS_TOL = 1e-6


@dataclass(eq=False)
class BridgeRun:
    schedule: object
    model: PotentialModel
    n_steps: int
    n_paths: int
    seed: int
    terminal: FieldEnsemble
    checkpoints: list = field(default_factory=list)


class BridgeSimulator:
    def __init__(self, model: PotentialModel, geometry: LatticeGeometry, mass: MassParams,
                 schedule, n_steps: int = 100, seed: int = 0, renorm=None,
                 n_inner: int = 1024, refine: int = 1):
        if n_steps < 10:
            raise ConfigurationError("bridge needs at least 10 steps", field="numerics.sde_steps")
        if not math.isfinite(getattr(schedule, "tau", math.inf)):
            raise ConfigurationError("bridge needs a finite-horizon schedule", field="schedule.tau")
        if refine < 1:
            raise ConfigurationError("refine must be at least 1", field="refine")
        self.model = model
        self.geometry = geometry
        self.mass = mass
        self.schedule = schedule
        self.tau = float(schedule.tau)
        self.n_steps = n_steps
        self.seed = seed
        self.refine = refine
        self.eigenvalues = mode_eigenvalues(geometry, mass)
        complete = schedule.cumulative(self.tau, self.eigenvalues) * self.eigenvalues
        if np.max(np.abs(complete - 1.0)) > COMPLETENESS_TOL:
            raise ConfigurationError("schedule is not complete: C_tau != A^{-1}", field="schedule")
        self.renorm = renorm if renorm is not None else make_renormalizer(
            model, geometry, mass, schedule, n_inner=n_inner, seed=seed)
        self.zero = isinstance(model, ZeroPotential)
        self.grid = np.linspace(0.0, self.tau, n_steps + 1)

    def _mult(self, values) -> SpectralMultiplier:
        return SpectralMultiplier(self.geometry, self.mass, values)

    def _cum(self, s: float) -> np.ndarray:
        return self.schedule.cumulative(min(max(s, 0.0), self.tau), self.eigenvalues)

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros_like(x)
        s = self.tau - t
        rate = self._mult(self.schedule.rate(s, self.eigenvalues))
        return -apply_multiplier(rate, self.renorm.gradient(s, x))

    def _noise(self, t0: float, t1: float, n_paths: int, tag: str, j0: int) -> np.ndarray:
        """Sum of ``refine`` exact sub-increments on ``[t0, t1]``."""
        sub = np.linspace(t0, t1, self.refine + 1)
        out = np.zeros((n_paths, self.geometry.num_sites))
        for i in range(self.refine):
            var = self._cum(self.tau - sub[i]) - self._cum(self.tau - sub[i + 1])
            white = rng.standard_normal(self.seed, f"{tag}-{j0 + i}", (n_paths, self.geometry.num_sites))
            out += apply_multiplier(self._mult(np.sqrt(np.clip(var, 0.0, None))), white)
        return out

    def propagate(self, x0: np.ndarray, t_start: float, t_end: float, n_paths: int | None = None,
                  tag: str = "bridge", checkpoints: list | None = None) -> np.ndarray:
        """Simulate from ``X_{t_start} = x0`` to ``t_end`` on the run's step grid."""
        if not 0.0 <= t_start <= t_end <= self.tau * (1 + 1e-12):
            raise ConfigurationError("need 0 <= t_start <= t_end <= tau", field="t")
        x = np.atleast_2d(check_field(self.geometry, x0)).astype(float)
        if n_paths is not None:
            x = np.broadcast_to(x, (n_paths, x.shape[-1])).copy() if x.shape[0] == 1 else x
        inner = self.grid[(self.grid > t_start) & (self.grid < t_end)]
        nodes = np.concatenate([[t_start], inner, [t_end]]) if t_end > t_start else np.array([t_start])
        first = int(np.searchsorted(self.grid, t_start, side="right"))
        for n, (t0, t1) in enumerate(zip(nodes[:-1], nodes[1:])):
            dt = t1 - t0
            incr = dt * self.drift(t0, x)
            size = np.linalg.norm(x, axis=1)
            if np.any(np.linalg.norm(incr, axis=1) > 10.0 * np.maximum(size, 1.0)):
                raise InstabilityError("bridge drift increment exceeded 10x the state norm")
            x = x + incr + self._noise(t0, t1, x.shape[0], tag, (first + n) * self.refine)
            if checkpoints is not None:
                checkpoints.append((float(t1), x.copy()))
        return x

    def run(self, n_paths: int, keep_checkpoints: bool = False, tag: str = "bridge") -> BridgeRun:
        cps = [] if keep_checkpoints else None
        x = self.propagate(np.zeros(self.geometry.num_sites), 0.0, self.tau, n_paths, tag, cps)
        meta = {
            "tau": self.tau,
            "n_steps": self.n_steps,
            "refine": self.refine,
            "schedule": getattr(self.schedule, "kind", type(self.schedule).__name__),
            "n_inner": getattr(self.renorm, "n_inner", 0),
            "approximate": True,
        }
        ens = FieldEnsemble(x, self.geometry, "bridge-nu", seed=self.seed, metadata=meta)
        return BridgeRun(self.schedule, self.model, self.n_steps, n_paths, self.seed, ens, cps or [])


def simulate_bridge(model: PotentialModel, geometry: LatticeGeometry, mass: MassParams, schedule,
                    n_steps: int, n_paths: int, seed: int, renorm=None, **kwargs) -> BridgeRun:
    sim = BridgeSimulator(model, geometry, mass, schedule, n_steps, seed, renorm, **kwargs)
    return sim.run(n_paths)


def semigroup_estimate(sim: BridgeSimulator, s: float, t: float, F, phi: np.ndarray,
                       n_paths: int = 1000, tag: str = "semigroup") -> MCEstimate:
    """``P_{s,t} F(phi) = E[F(Phi_s) | Phi_t = phi]`` with ``Phi_r = X_{tau - r}``."""
    if not 0.0 <= s <= t <= sim.tau:
        raise ConfigurationError("need 0 <= s <= t <= tau", field="t")
    phi = check_field(sim.geometry, phi)
    if s == t:
        return MCEstimate(float(np.atleast_1d(F(phi[None]))[0]), 0.0, 1, 1.0)
    x = sim.propagate(phi, sim.tau - t, sim.tau - s, n_paths, tag)
    vals = np.asarray(F(x), dtype=float)
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)), vals.size, float(vals.size))


def nested_semigroup_estimate(sim: BridgeSimulator, s: float, t: float, u: float, F, phi: np.ndarray,
                              n_outer: int = 200, n_inner: int = 200, tag: str = "nested") -> MCEstimate:
    """``P_{t,u}(P_{s,t} F)(phi)``: outer draws of ``Phi_t`` given ``Phi_u = phi``,
    inner estimate of ``P_{s,t} F`` at each."""
    if not 0.0 <= s <= t <= u <= sim.tau:
        raise ConfigurationError("need 0 <= s <= t <= u <= tau", field="t")
    phi = check_field(sim.geometry, phi)
    mids = sim.propagate(phi, sim.tau - u, sim.tau - t, n_outer, f"{tag}-outer")
    vals = np.array([semigroup_estimate(sim, s, t, F, m, n_inner, f"{tag}-inner-{i}").mean
                     for i, m in enumerate(mids)])
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_outer)), n_outer * n_inner,
                      float(n_outer))


def mode_variances(ensemble: FieldEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode variance estimates with block SE, shape ``geometry.shape``."""
    power = mode_power(ensemble.geometry, ensemble.samples)
    return ensemble.mean_se(power)


def quadratic_variance_recursion(model: QuadraticModel | ZeroPotential, sim: BridgeSimulator) -> np.ndarray:
    """Exact per-mode terminal variance of the discretised linear bridge.

    For a Gaussian model each Fourier mode evolves as
    ``x' = (1 - dt rate b_s) x + noise`` with ``b_s = b / (1 + b C_s)``.
    """
    a = sim.eigenvalues
    b = np.zeros_like(a) if isinstance(model, ZeroPotential) else np.asarray(model.b.values, dtype=float)
    var = np.zeros_like(a)
    for t0, t1 in zip(sim.grid[:-1], sim.grid[1:]):
        s = sim.tau - t0
        c = sim._cum(s)
        gain = 1.0 - (t1 - t0) * sim.schedule.rate(s, a) * b / (1.0 + b * c)
        var = gain * gain * var + (c - sim._cum(sim.tau - t1))
    return var


@dataclass
class WeakOrderStudy:
    n_steps: np.ndarray
    moments: np.ndarray
    reference: float
    errors: np.ndarray
    order: float

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps.tolist(),
            "second_moment": self.moments.tolist(),
            "reference": self.reference,
            "errors": self.errors.tolist(),
            "order": self.order,
        }


def weak_order_study(model: PotentialModel, geometry: LatticeGeometry, mass: MassParams, schedule,
                     n_steps=(10, 20, 40, 80), n_ref: int = 640, n_paths: int = 2000, seed: int = 0,
                     renorm=None) -> WeakOrderStudy:
    """Terminal mean-square field at several step counts against a fine reference.

    All runs share the same fine noise (``n_ref`` increments), so the
    differences are dominated by discretisation error rather than sampling.
    The order is the log-log slope of the error against ``dt``.
    """
    n_steps = np.asarray(sorted(n_steps))
    if np.any(n_ref % n_steps):
        raise ConfigurationError("n_ref must be a multiple of every step count", field="n_ref")

    def moment(n):
        sim = BridgeSimulator(model, geometry, mass, schedule, int(n), seed, renorm, refine=n_ref // int(n))
        x = sim.run(n_paths, tag="weak").terminal.samples
        return float(np.mean(np.sum(x * x, axis=1)))

    ref = moment(n_ref)
    moments = np.array([moment(n) for n in n_steps])
    errors = np.abs(moments - ref)
    slope = np.polyfit(np.log(1.0 / n_steps), np.log(errors), 1)[0]
    return WeakOrderStudy(n_steps, moments, ref, errors, float(slope))
