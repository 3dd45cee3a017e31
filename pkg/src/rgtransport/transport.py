"""Langevin (Ornstein-Uhlenbeck) transport map between the free field and ``nu``.

The velocity potential is ``u_s = log U_s exp(-V_0)`` with
``grad u_s(phi) = -Q_{2s} grad V_{2s}(Q_{2s} phi)``.  The flow
``dS_s/ds = -grad u_s(S_s)`` carries ``nu`` towards the free field; the
transport map ``T_tau = S_tau^{-1}`` is evaluated by running the same ODE
backwards from ``s = tau`` to ``0``, never by inverting ``S`` numerically.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import FieldEnsemble
from .errors import ConfigurationError, InstabilityError
from .gaussian import SpectralMultiplier, apply_multiplier, covariance, sample_gaussian
from .lattice import check_field
from .potentials import DENSE_SITE_CAP
from .renorm import BEProfile

log = logging.getLogger(__name__)


def default_horizon(renorm, tol: float = 1e-8) -> float:
    """Smallest ``tau`` with ``exp(-tau a0) G < tol`` (``G`` the gradient bound)."""
    a0 = float(renorm.eigenvalues.min())
    G = renorm.model.gradient_bound()
    if G == 0:
        return 1.0
    if math.isinf(G):
        return math.log(1.0 / tol) / a0
    return max(math.log(G / tol), 1.0) / a0


@dataclass(eq=False)
class TransportResult:
    psi: np.ndarray
    output: np.ndarray
    round_trip_error: np.ndarray
    flagged: np.ndarray
    tau: float
    checkpoints: list = field(default_factory=list)


@dataclass
class LipschitzReport:
    empirical: float
    theoretical: float
    opposite_sign_bound: float
    fd_ratio: float
    lambda_2tau: float
    tau: float
    n_probes: int
    sigma_min: np.ndarray = field(repr=False, default=None)
    frame_bound_ok: bool = True
    frame_slack: float = 0.0

    def __post_init__(self):
        for name in ("empirical", "theoretical", "opposite_sign_bound", "fd_ratio"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val}")

    def to_dict(self) -> dict:
        return {
            "empirical": self.empirical,
            "theoretical_bound": self.theoretical,
            "opposite_sign_bound": self.opposite_sign_bound,
            "fd_ratio": self.fd_ratio,
            "lambda_2tau": self.lambda_2tau,
            "tau": self.tau,
            "n_probes": self.n_probes,
            "frame_bound_ok": self.frame_bound_ok,
            "frame_slack": self.frame_slack,
        }


class FlowIntegrator:
    """Fixed-step classical RK4 on a geometric time grid (plus ``s = 0``)."""

    def __init__(self, renorm, tau_max: float | None = None, n_steps: int = 64,
                 s_min: float = 5e-4, tol: float = 1e-8, step_tol: float = 1e-6,
                 s_grid: np.ndarray | None = None):
        self.renorm = renorm
        self.geometry = renorm.geometry
        self.mass = renorm.mass
        self.tol = tol
        self.step_tol = step_tol
        self.tau_max = default_horizon(renorm, tol) if tau_max is None else float(tau_max)
        if s_grid is None:
            s_grid = np.concatenate([[0.0], np.geomspace(min(s_min, self.tau_max / 2), self.tau_max, n_steps)])
        self.s_grid = np.asarray(s_grid, dtype=float)
        if self.s_grid[0] != 0 or np.any(np.diff(self.s_grid) <= 0):
            raise ConfigurationError("flow grid must increase from 0", field="numerics.ode_grid")
        self.tau_max = float(self.s_grid[-1])

    # -- vector field ------------------------------------------------------
    def _q(self, s: float) -> SpectralMultiplier:
        return self.renorm.rate(2.0 * s).map(np.sqrt)

    def drift(self, s: float, phi: np.ndarray) -> np.ndarray:
        """``-grad u_s(phi) = Q_{2s} grad V_{2s}(Q_{2s} phi)``."""
        q = self._q(s)
        return apply_multiplier(q, self.renorm.gradient(2.0 * s, apply_multiplier(q, phi)))

    def velocity_field(self, s: float, phi: np.ndarray) -> np.ndarray:
        """``grad u_s(phi)``."""
        return -self.drift(s, phi)

    def drift_jacobian(self, s: float, phi: np.ndarray) -> np.ndarray:
        """``-hess u_s(phi) = Q_{2s} hess V_{2s}(Q_{2s} phi) Q_{2s}``, batched dense."""
        q = self._q(s)
        qd = q.dense()
        h = self.renorm.hessian(2.0 * s, apply_multiplier(q, np.atleast_2d(phi)))
        return qd[None] @ h @ qd[None]

    # -- integration -------------------------------------------------------
    def _grid(self, t_end: float) -> np.ndarray:
        if t_end < 0 or t_end > self.tau_max * (1 + 1e-12):
            raise ConfigurationError(f"t_end={t_end} outside [0, tau_max={self.tau_max}]", field="tau")
        g = self.s_grid[self.s_grid < t_end]
        return np.append(g, t_end) if t_end > 0 else g[:1]

    def _guard(self, y, incr):
        size = np.linalg.norm(y.reshape(y.shape[0], -1), axis=1)
        step = np.linalg.norm(incr.reshape(incr.shape[0], -1), axis=1)
        if np.any(step > 10.0 * np.maximum(size, 1.0)):
            raise InstabilityError("integrator increment exceeded 10x the state norm")

    def _integrate(self, grid, y, frame=None, checkpoints=None):
        y = np.atleast_2d(y).copy()
        J = None if frame is None else frame.copy()
        for s0, s1 in zip(grid[:-1], grid[1:]):
            h = s1 - s0
            sm = s0 + 0.5 * h
            if J is None:
                k1 = self.drift(s0, y)
                k2 = self.drift(sm, y + 0.5 * h * k1)
                k3 = self.drift(sm, y + 0.5 * h * k2)
                k4 = self.drift(s1, y + h * k3)
                incr = h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            else:
                def f(s, yy, jj):
                    return self.drift(s, yy), self.drift_jacobian(s, yy) @ jj
                k1, l1 = f(s0, y, J)
                k2, l2 = f(sm, y + 0.5 * h * k1, J + 0.5 * h * l1)
                k3, l3 = f(sm, y + 0.5 * h * k2, J + 0.5 * h * l2)
                k4, l4 = f(s1, y + h * k3, J + h * l3)
                incr = h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                jincr = h / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
                self._guard(J, jincr)
                J = J + jincr
            self._guard(y, incr)
            y = y + incr
            if checkpoints is not None:
                checkpoints.append((float(s1), y.copy()))
        return y, J

    def flow_forward(self, phi0: np.ndarray, t_end: float) -> np.ndarray:
        """``S_{t_end}(phi0)`` (batched)."""
        phi0 = check_field(self.geometry, phi0)
        y, _ = self._integrate(self._grid(t_end), phi0)
        return y[0] if phi0.ndim == 1 else y

    def transport_evaluate(self, psi: np.ndarray, tau: float | None = None,
                           keep_checkpoints: bool = False) -> TransportResult:
        """``T_tau(psi)``: integrate backwards from ``s = tau`` with value ``psi``."""
        psi = check_field(self.geometry, psi)
        tau = self.tau_max if tau is None else tau
        grid = self._grid(tau)
        cps = [] if keep_checkpoints else None
        out, _ = self._integrate(grid[::-1], psi, checkpoints=cps)
        back, _ = self._integrate(grid, out)
        psi2 = np.atleast_2d(psi)
        err = np.linalg.norm(back - psi2, axis=1)
        limit = 10.0 * self.step_tol * np.maximum(np.linalg.norm(psi2, axis=1), 1.0)
        flagged = err > limit
        if np.any(flagged):
            log.warning("%d of %d samples failed the round-trip check", int(flagged.sum()), flagged.size)
        if psi.ndim == 1:
            return TransportResult(psi, out[0], err, flagged, tau, cps or [])
        return TransportResult(psi, out, err, flagged, tau, cps or [])

    def jacobian_propagate(self, phi0: np.ndarray, frame: np.ndarray, t_end: float):
        """Propagate directions ``w`` to ``grad S_t(phi0) w``.

        ``frame`` holds directions as columns, shape ``(n, k)`` (shared) or
        ``(F, n, k)``.  Returns ``(S_t(phi0), frame_t)``.
        """
        phi0 = np.atleast_2d(check_field(self.geometry, phi0))
        n = self.geometry.num_sites
        if n > DENSE_SITE_CAP:
            raise ConfigurationError(f"frame propagation capped at {DENSE_SITE_CAP} sites", field="geometry")
        frame = np.asarray(frame, dtype=float)
        if frame.ndim == 1:
            frame = frame[:, None]
        if frame.ndim == 2:
            frame = np.broadcast_to(frame, (phi0.shape[0],) + frame.shape).copy()
        return self._integrate(self._grid(t_end), phi0, frame=frame)


def flow_forward(integ: FlowIntegrator, phi0, t_end):
    return integ.flow_forward(phi0, t_end)


def transport_evaluate(integ: FlowIntegrator, psi, tau=None) -> TransportResult:
    return integ.transport_evaluate(psi, tau)


def jacobian_propagate(integ: FlowIntegrator, phi0, frame, t_end):
    return integ.jacobian_propagate(phi0, frame, t_end)


def velocity_field(integ: FlowIntegrator, t, phi):
    return integ.velocity_field(t, phi)


def lipschitz_report(integ: FlowIntegrator, probes: np.ndarray, profile: BEProfile,
                     tau: float | None = None, fd_step: float = 1e-3, seed: int = 0,
                     slack: float = 0.01) -> LipschitzReport:
    """Empirical ``sup |grad T_tau|_op`` over probes against the profile bound.

    For each probe ``psi`` we compute ``phi0 = T_tau(psi)`` and the full
    Jacobian ``grad S_tau(phi0)``; ``|grad T_tau(psi)|_op`` is the inverse of
    its smallest singular value.
    """
    tau = integ.tau_max if tau is None else tau
    psi = np.atleast_2d(getattr(probes, "samples", probes))
    n = integ.geometry.num_sites
    res = integ.transport_evaluate(psi, tau)
    phi0 = np.atleast_2d(res.output)
    _, J = integ.jacobian_propagate(phi0, np.eye(n), tau)
    sig = np.linalg.svd(J, compute_uv=False)
    smin = sig[:, -1]
    empirical = float(np.max(1.0 / smin))

    gen = np.random.default_rng(seed)
    u = gen.standard_normal(psi.shape)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    psi_near = psi + fd_step * u
    t_near = np.atleast_2d(integ.transport_evaluate(psi_near, tau).output)
    near = np.linalg.norm(t_near - phi0, axis=1) / fd_step
    if psi.shape[0] > 1:
        far = np.linalg.norm(np.roll(phi0, 1, axis=0) - phi0, axis=1) / np.linalg.norm(
            np.roll(psi, 1, axis=0) - psi, axis=1)
        fd = float(max(near.max(), far.max()))
    else:
        fd = float(near.max())

    lam = profile.lambda_at(2.0 * tau)
    lower = math.exp(lam / 2.0)
    frame_slack = float(max(0.0, 1.0 - smin.min() / lower))
    return LipschitzReport(
        empirical=empirical,
        theoretical=math.exp(-lam / 2.0),
        opposite_sign_bound=math.exp(lam / 2.0),
        fd_ratio=fd,
        lambda_2tau=lam,
        tau=tau,
        n_probes=psi.shape[0],
        sigma_min=smin,
        frame_bound_ok=frame_slack <= slack,
        frame_slack=frame_slack,
    )


def pushforward_ensemble(integ: FlowIntegrator, n: int, seed: int, tau: float | None = None,
                         chunk: int = 1000) -> FieldEnsemble:
    """``n`` free-field samples mapped through ``T_tau``."""
    geom, mass = integ.geometry, integ.mass
    tau = integ.tau_max if tau is None else tau
    cov = covariance(geom, mass)
    outs, errs, flags = [], [], []
    for lo in range(0, n, chunk):
        psi = sample_gaussian(cov, seed, min(chunk, n - lo), tag="gff", start=lo)
        res = integ.transport_evaluate(psi, tau)
        outs.append(np.atleast_2d(res.output))
        errs.append(res.round_trip_error)
        flags.append(res.flagged)
    out = np.concatenate(outs)
    err = np.concatenate(errs)
    flagged = np.concatenate(flags)
    meta = {
        "tau": tau,
        "n_steps": int(integ.s_grid.size - 1),
        "tol": integ.tol,
        "step_tol": integ.step_tol,
        "n_inner": getattr(integ.renorm, "n_inner", 0),
        "renorm_seed": getattr(integ.renorm, "seed", None),
        "max_round_trip_error": float(err.max(initial=0.0)),
        "excluded": int(flagged.sum()),
    }
    return FieldEnsemble(out[~flagged], geom, "transport-nu", seed=seed, metadata=meta)
