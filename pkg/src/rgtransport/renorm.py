"""Renormalised potential ``V_t(phi) = -log E_{C_t}[exp(-V_0(phi + zeta))]``.

Derivatives come from differentiating under the expectation with tilt
weights ``w_i ~ exp(-V_0(phi + zeta_i))``::

    grad V_t = <grad V_0>_w
    hess V_t = <hess V_0>_w - Cov_w(grad V_0)

Noise is ``zeta_i(t) = C_t^{1/2} xi_i`` with a frozen white-noise table
``xi`` (antithetic pairs by default), so with common random numbers the
estimate is a smooth deterministic function of ``(t, phi)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigurationError, DegenerateEstimateError
from .gaussian import HEAT_KERNEL, SpectralMultiplier, apply_multiplier
from .lattice import LatticeGeometry, MassParams, check_field, mode_eigenvalues
from .potentials import DENSE_SITE_CAP, PotentialModel, QuadraticModel, ZeroPotential

log = logging.getLogger(__name__)

LOW_ESS = 10.0
N_BATCHES = 20


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    se: float
    n: int
    ess: float

    def __post_init__(self):
        if self.se < 0:
            raise ValueError("standard error must be nonnegative")


@dataclass(frozen=True, eq=False)
class DerivativeEstimate:
    gradient: np.ndarray
    gradient_se: np.ndarray
    hessian: np.ndarray
    hessian_se: np.ndarray
    n: int
    ess: float

    @property
    def low_ess(self) -> bool:
        return self.ess < LOW_ESS


def _ess(w: np.ndarray) -> np.ndarray:
    s1 = w.sum(axis=-1)
    s2 = np.square(w).sum(axis=-1)
    return s1 * s1 / s2


class RenormEstimator:
    """Monte-Carlo estimator of ``V_t`` and its derivatives."""

    exact = False

    def __init__(self, model: PotentialModel, geometry: LatticeGeometry, mass: MassParams,
                 schedule=HEAT_KERNEL, n_inner: int = 1024, seed: int = 0,
                 common_random_numbers: bool = True, antithetic: bool = True,
                 chunk_elems: int = 4_000_000):
        if n_inner < 2:
            raise ConfigurationError("n_inner must be at least 2", field="numerics.n_inner")
        if antithetic and n_inner % 2:
            n_inner += 1
        self.model = model
        self.geometry = geometry
        self.mass = mass
        self.schedule = schedule
        self.n_inner = n_inner
        self.seed = seed
        self.common_random_numbers = common_random_numbers
        self.antithetic = antithetic
        self.chunk_elems = chunk_elems
        self.eigenvalues = mode_eigenvalues(geometry, mass)
        self._calls = 0
        self._frozen = self._draw_white(0)
        self._noise_cache: dict[float, tuple] = {}

    # -- noise ---------------------------------------------------------------
    def _draw_white(self, index: int) -> np.ndarray:
        n = self.geometry.num_sites
        half = self.n_inner // 2 if self.antithetic else self.n_inner
        xi = rng.standard_normal(self.seed, f"renorm-inner-{index}", (half, n))
        return np.concatenate([xi, -xi]) if self.antithetic else xi

    @property
    def units(self) -> np.ndarray:
        """Independent sampling unit of each inner sample (pairs if antithetic)."""
        idx = np.arange(self.n_inner)
        return idx % (self.n_inner // 2) if self.antithetic else idx

    def white(self) -> np.ndarray:
        if self.common_random_numbers:
            return self._frozen
        self._calls += 1
        return self._draw_white(self._calls)

    def cov(self, t: float) -> SpectralMultiplier:
        return SpectralMultiplier(self.geometry, self.mass, self.schedule.cumulative(t, self.eigenvalues))

    def rate(self, t: float) -> SpectralMultiplier:
        return SpectralMultiplier(self.geometry, self.mass, self.schedule.rate(t, self.eigenvalues))

    def noise(self, t: float) -> np.ndarray:
        if t < 0:
            raise ConfigurationError(f"t must be nonnegative, got {t}", field="t")
        root = self.cov(t).map(np.sqrt)
        return apply_multiplier(root, self.white())

    def _noise_pair(self, t: float):
        """``(zeta, prepared)`` for time ``t``; cached under common random numbers."""
        if not self.common_random_numbers:
            zeta = self.noise(t)
            return zeta, self.model.prepare_noise(zeta)
        hit = self._noise_cache.get(t)
        if hit is None:
            if len(self._noise_cache) > 64:
                self._noise_cache.clear()
            zeta = self.noise(t)
            hit = (zeta, self.model.prepare_noise(zeta))
            self._noise_cache[t] = hit
        return hit

    def _prepared(self, t: float):
        return self._noise_pair(t)[1]

    def _chunks(self, F: int):
        per = max(1, self.chunk_elems // (self.n_inner * self.geometry.num_sites))
        for lo in range(0, F, per):
            yield slice(lo, min(F, lo + per))

    def _log_weights(self, phi, noise):
        logw = -self.model.noise_values(phi, noise)
        if not np.all(np.isfinite(logw)):
            raise DegenerateEstimateError("non-finite potential values in the tilt")
        return logw

    @staticmethod
    def _normalised(logw):
        w = np.exp(logw - logw.max(axis=-1, keepdims=True))
        total = w.sum(axis=-1, keepdims=True)
        if np.any(total <= 0):
            raise DegenerateEstimateError("all tilt weights underflowed")
        return w / total

    # -- V_t -----------------------------------------------------------------
    def vt(self, t: float, phi: np.ndarray) -> MCEstimate:
        phi = check_field(self.geometry, phi)
        noise = self._prepared(t)
        logw = self._log_weights(phi[None], noise)[0]
        shift = logw.max()
        w = np.exp(logw - shift)
        mean_w = w.mean()
        if not mean_w > 0:
            raise DegenerateEstimateError("all tilt weights underflowed")
        units = self.units
        n_units = units.max() + 1
        wu = np.bincount(units, weights=w, minlength=n_units) / np.bincount(units, minlength=n_units)
        se = float(wu.std(ddof=1) / math.sqrt(n_units) / mean_w)
        return MCEstimate(mean=float(-(math.log(mean_w) + shift)), se=se, n=self.n_inner,
                          ess=float(_ess(w)))

    def vt_batch(self, t: float, phi: np.ndarray) -> np.ndarray:
        phi = np.atleast_2d(check_field(self.geometry, phi))
        noise = self._prepared(t)
        logw = self._log_weights(phi, noise)
        shift = logw.max(axis=-1)
        return -(np.log(np.exp(logw - shift[:, None]).mean(axis=-1)) + shift)

    # -- derivatives ----------------------------------------------------------
    def gradient(self, t: float, phi: np.ndarray) -> np.ndarray:
        """Batched ``grad V_t``; input and output shape ``(F, n)`` or ``(n,)``."""
        phi = check_field(self.geometry, phi)
        single = phi.ndim == 1
        phis = np.atleast_2d(phi)
        noise = self._prepared(t)
        out = np.empty_like(phis)
        for sl in self._chunks(phis.shape[0]):
            w = self._normalised(self._log_weights(phis[sl], noise))
            out[sl] = self.model.noise_weighted_gradient(phis[sl], noise, w)
        return out[0] if single else out

    def hessian(self, t: float, phi: np.ndarray) -> np.ndarray:
        """Batched dense ``hess V_t``, shape ``(F, n, n)`` or ``(n, n)``."""
        phi = check_field(self.geometry, phi)
        n = self.geometry.num_sites
        if n > DENSE_SITE_CAP:
            raise ConfigurationError(f"dense Hessian capped at {DENSE_SITE_CAP} sites", field="geometry")
        single = phi.ndim == 1
        phis = np.atleast_2d(phi)
        noise = self._prepared(t)
        out = np.empty((phis.shape[0], n, n))
        idx = np.arange(n)
        for sl in self._chunks(phis.shape[0]):
            w = self._normalised(self._log_weights(phis[sl], noise))
            g = self.model.noise_gradients(phis[sl], noise)
            mean_g = np.einsum("fi,fin->fn", w, g)
            centred = (g - mean_g[:, None, :]) * np.sqrt(w)[:, :, None]
            h = -np.einsum("fia,fib->fab", centred, centred)
            hv = self.model.noise_weighted_hessian(phis[sl], noise, w)
            if hv.ndim == 2:
                h[:, idx, idx] += hv
            else:
                h += hv
            out[sl] = 0.5 * (h + np.swapaxes(h, 1, 2))
        return out[0] if single else out

    def hessian_vector(self, t: float, phi: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``hess V_t(phi) v`` without forming the matrix."""
        phi = check_field(self.geometry, phi)
        zeta, noise = self._noise_pair(t)
        w = self._normalised(self._log_weights(phi[None], noise))[0]
        g = self.model.noise_gradients(phi[None], noise)[0]
        mean_g = w @ g
        gv = (g - mean_g) @ v
        x = phi[None, :] + zeta
        if self.model.local:
            hv = (w @ self.model.hessian(x)) * v
        else:
            hv = np.einsum("i,inm,m->n", w, self.model.hessian(x), v)
        return hv - (w * gv) @ (g - mean_g)

    def _sample_arrays(self, t: float, phi: np.ndarray):
        zeta, noise = self._noise_pair(t)
        logw = self._log_weights(phi[None], noise)[0]
        g = self.model.noise_gradients(phi[None], noise)[0]
        hv = self.model.hessian(phi[None, :] + zeta)
        return logw, g, hv

    def _batches(self):
        units = self.units
        n_units = units.max() + 1
        batch_of_unit = np.arange(n_units) * N_BATCHES // n_units
        return batch_of_unit[units]

    @staticmethod
    def _derivs_from(logw, g, hv, local, mask=None):
        if mask is not None:
            logw, g, hv = logw[mask], g[mask], hv[mask]
        w = np.exp(logw - logw.max())
        w /= w.sum()
        mean_g = w @ g
        c = (g - mean_g) * np.sqrt(w)[:, None]
        h = -(c.T @ c)
        if local:
            h[np.diag_indices_from(h)] += w @ hv
        else:
            h += np.einsum("i,iab->ab", w, hv)
        return mean_g, 0.5 * (h + h.T)

    def derivatives(self, t: float, phi: np.ndarray) -> DerivativeEstimate:
        """Gradient and Hessian at a single field, with batch-jackknife errors."""
        phi = check_field(self.geometry, phi)
        if self.geometry.num_sites > DENSE_SITE_CAP:
            raise ConfigurationError(f"dense Hessian capped at {DENSE_SITE_CAP} sites", field="geometry")
        logw, g, hv = self._sample_arrays(t, phi)
        local = self.model.local
        grad, hess = self._derivs_from(logw, g, hv, local)
        batch = self._batches()
        reps = [self._derivs_from(logw, g, hv, local, batch != b) for b in range(N_BATCHES)]
        gse, hse = _jackknife_se([r[0] for r in reps]), _jackknife_se([r[1] for r in reps])
        w = np.exp(logw - logw.max())
        ess = float(_ess(w))
        if ess < LOW_ESS:
            log.warning("effective sample size %.1f below %g at t=%g", ess, LOW_ESS, t)
        return DerivativeEstimate(grad, gse, hess, hse, self.n_inner, ess)


def _jackknife_se(replicates) -> np.ndarray:
    arr = np.asarray(replicates)
    b = arr.shape[0]
    return np.sqrt((b - 1) / b * np.square(arr - arr.mean(axis=0)).sum(axis=0))


class GaussianRenorm:
    """Closed-form ``V_t`` for quadratic (and zero) potentials.

    With ``V_0 = (phi, B phi)/2`` diagonal in Fourier space,
    ``V_t(phi) = (phi, B (1 + C_t B)^{-1} phi)/2 + sum_k log(1 + C_t b)/2``.
    """

    exact = True

    def __init__(self, model: PotentialModel, geometry: LatticeGeometry, mass: MassParams,
                 schedule=HEAT_KERNEL):
        if isinstance(model, ZeroPotential):
            bvals = np.zeros(geometry.shape)
        elif isinstance(model, QuadraticModel):
            bvals = model.b.values
        else:
            raise TypeError(f"no closed form for {type(model).__name__}")
        self.model = model
        self.geometry = geometry
        self.mass = mass
        self.schedule = schedule
        self.eigenvalues = mode_eigenvalues(geometry, mass)
        self.bvals = np.asarray(bvals, dtype=float)
        self.n_inner = 0

    def cov(self, t):
        return SpectralMultiplier(self.geometry, self.mass, self.schedule.cumulative(t, self.eigenvalues))

    def rate(self, t):
        return SpectralMultiplier(self.geometry, self.mass, self.schedule.rate(t, self.eigenvalues))

    def _mult(self, t) -> SpectralMultiplier:
        c = self.schedule.cumulative(t, self.eigenvalues)
        return SpectralMultiplier(self.geometry, self.mass, self.bvals / (1.0 + c * self.bvals))

    def vt(self, t, phi) -> MCEstimate:
        phi = check_field(self.geometry, phi)
        c = self.schedule.cumulative(t, self.eigenvalues)
        val = 0.5 * float(phi @ apply_multiplier(self._mult(t), phi)) + 0.5 * float(np.log1p(c * self.bvals).sum())
        return MCEstimate(val, 0.0, 0, math.inf)

    def vt_batch(self, t, phi):
        phi = np.atleast_2d(check_field(self.geometry, phi))
        c = self.schedule.cumulative(t, self.eigenvalues)
        quad = 0.5 * np.sum(phi * apply_multiplier(self._mult(t), phi), axis=-1)
        return quad + 0.5 * float(np.log1p(c * self.bvals).sum())

    def gradient(self, t, phi):
        return apply_multiplier(self._mult(t), check_field(self.geometry, phi))

    def hessian(self, t, phi):
        phi = check_field(self.geometry, phi)
        h = self._mult(t).dense()
        return np.broadcast_to(h, phi.shape[:-1] + h.shape).copy()

    def hessian_vector(self, t, phi, v):
        return apply_multiplier(self._mult(t), v)

    def derivatives(self, t, phi) -> DerivativeEstimate:
        g = self.gradient(t, phi)
        h = self.hessian(t, phi)
        return DerivativeEstimate(g, np.zeros_like(g), h, np.zeros_like(h), 0, math.inf)


def make_renormalizer(model, geometry, mass, schedule=HEAT_KERNEL, exact: str | bool = "auto", **kwargs):
    """Closed form when available (``exact='auto'``), Monte Carlo otherwise."""
    closed = isinstance(model, (QuadraticModel, ZeroPotential))
    if exact is True or (exact == "auto" and closed):
        return GaussianRenorm(model, geometry, mass, schedule)
    return RenormEstimator(model, geometry, mass, schedule, **kwargs)


def estimate_vt(est, t: float, phi: np.ndarray) -> MCEstimate:
    return est.vt(t, phi)


def estimate_vt_derivatives(est, t: float, phi: np.ndarray) -> DerivativeEstimate:
    return est.derivatives(t, phi)


# ---------------------------------------------------------------------------
# Polchinski equation residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualEstimate:
    residual: float
    se: float
    dvdt: float
    laplacian_term: float
    gradient_term: float
    scale: float
    inconclusive: bool

    def consistent_with_zero(self, k: float = 3.0, budget: float = 0.0) -> bool:
        return abs(self.residual) <= k * self.se + budget


def pde_residual(est, t: float, phi: np.ndarray, h_t: float) -> ResidualEstimate:
    """``dV/dt - (1/2) Lap_{dC} V + (1/2) (grad V)^2_{dC}`` at ``(t, phi)``.

    Time derivative by centred differences under common random numbers;
    uncertainty by jackknife over batches of inner samples.
    """
    if not (t > h_t > 0):
        raise ConfigurationError("need t > h_t > 0", field="h_t")
    geom = est.geometry
    if geom.num_sites > 64:
        raise ConfigurationError("PDE residual needs a dense dC_t; capped at 64 sites", field="geometry")
    phi = check_field(geom, phi)
    cdot = est.rate(t).dense()

    if getattr(est, "exact", False):
        vp, vm = est.vt(t + h_t, phi).mean, est.vt(t - h_t, phi).mean
        d = est.derivatives(t, phi)
        dvdt = (vp - vm) / (2 * h_t)
        lap = 0.5 * float(np.sum(cdot * d.hessian))
        grad = 0.5 * float(d.gradient @ cdot @ d.gradient)
        res = dvdt - lap + grad
        return ResidualEstimate(res, 0.0, dvdt, lap, grad, max(abs(dvdt), abs(lap), abs(grad)), False)

    if not est.common_random_numbers:
        raise ConfigurationError("PDE residual requires common random numbers", field="numerics.crn")
    lw_p = est._log_weights(phi[None], est._prepared(t + h_t))[0]
    lw_m = est._log_weights(phi[None], est._prepared(t - h_t))[0]
    logw, g, hv = est._sample_arrays(t, phi)
    local = est.model.local

    def residual(mask=None):
        lp, lm = (lw_p, lw_m) if mask is None else (lw_p[mask], lw_m[mask])
        vp = -(np.log(np.mean(np.exp(lp - lp.max()))) + lp.max())
        vm = -(np.log(np.mean(np.exp(lm - lm.max()))) + lm.max())
        grad, hess = est._derivs_from(logw, g, hv, local, mask)
        dvdt = (vp - vm) / (2 * h_t)
        lap = 0.5 * float(np.sum(cdot * hess))
        gt = 0.5 * float(grad @ cdot @ grad)
        return np.array([dvdt - lap + gt, dvdt, lap, gt])

    full = residual()
    batch = est._batches()
    reps = [residual(batch != b) for b in range(N_BATCHES)]
    se = float(_jackknife_se(reps)[0])
    scale = float(max(abs(full[1]), abs(full[2]), abs(full[3])))
    inconclusive = se > 10 * max(scale, 1e-300)
    return ResidualEstimate(float(full[0]), se, float(full[1]), float(full[2]), float(full[3]), scale, inconclusive)


# ---------------------------------------------------------------------------
# Bakry-Emery profile
# ---------------------------------------------------------------------------

def default_time_grid(a0: float, n: int = 64, t_min: float = 1e-3, t_max: float | None = None) -> np.ndarray:
    """``0`` followed by ``n`` geometric points on ``[t_min, t_max]``."""
    if t_max is None:
        # past the knee exp(-t a0) < 1e-6
        t_max = min(14.0 / a0, 1e4)
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, n)])


@dataclass
class BEProfile:
    t: np.ndarray
    lambda_dot: np.ndarray
    lambda_t: np.ndarray
    lambda_inf: float
    tail: float
    tail_bound: float
    decay_rate: float
    provenance: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.t[0] == 0.0 and self.lambda_t[0] != 0.0:
            raise ValueError("integrated profile must start at 0")

    @property
    def lipschitz_bound(self) -> float:
        return math.exp(-self.lambda_inf / 2.0)

    @property
    def sup_abs_lambda(self) -> float:
        return float(max(np.max(np.abs(self.lambda_t)), abs(self.lambda_inf)))

    def lambda_at(self, t: float) -> float:
        """Integrated profile at ``t``; exponential tail beyond the grid."""
        if t <= self.t[-1]:
            return float(np.interp(t, self.t, self.lambda_t))
        extra = self.tail * -math.expm1(-self.decay_rate * (t - self.t[-1]))
        return float(self.lambda_t[-1] + extra)

    def to_dict(self) -> dict:
        return {
            "t": self.t.tolist(),
            "lambda_dot": self.lambda_dot.tolist(),
            "lambda_t": self.lambda_t.tolist(),
            "lambda_inf": self.lambda_inf,
            "tail": self.tail,
            "tail_bound": self.tail_bound,
            "lipschitz_bound": self.lipschitz_bound,
            "opposite_sign_lipschitz": math.exp(self.lambda_inf / 2.0),
            "sup_abs_lambda": self.sup_abs_lambda,
            "empirical": True,
            "provenance": self.provenance,
            "warnings": list(self.warnings),
        }


def integrate_lambda(t: np.ndarray, lambda_dot: np.ndarray, decay_rate: float):
    """Cumulative trapezoid of ``lambda_dot`` plus an exponential tail.

    Returns ``(lambda_t, lambda_inf, tail, tail_bound, warnings)``.
    """
    t = np.asarray(t, dtype=float)
    ld = np.asarray(lambda_dot, dtype=float)
    if t.ndim != 1 or t.shape != ld.shape or np.any(np.diff(t) <= 0):
        raise ConfigurationError("time grid must be increasing and match lambda_dot", field="t_grid")
    warnings = []
    # constant extrapolation on [0, t[0]] when the grid does not start at 0
    lam = ld[0] * t[0] + np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (ld[1:] + ld[:-1]))])
    if math.exp(-t[-1] * decay_rate) > 1e-6:
        warnings.append(f"t_max={t[-1]:.4g} is short of the knee exp(-t a0) < 1e-6")
    scale = np.max(np.abs(ld), initial=0.0)
    if scale > 0 and np.max(np.abs(np.diff(ld))) > 0.2 * scale:
        warnings.append("adjacent lambda_dot values jump by more than 20%; refine the grid")
    tail = float(ld[-1] / decay_rate)
    lam_inf = float(lam[-1] + tail)
    return lam, lam_inf, tail, abs(tail), warnings


def _sqrt_rate_dense(est, t) -> np.ndarray:
    return est.rate(t).map(np.sqrt).dense()


def conjugated_min_eig(est, t: float, phis: np.ndarray) -> np.ndarray:
    """``lambda_min(Q_t hess V_t(phi) Q_t)`` for each field in ``phis``."""
    phis = np.atleast_2d(phis)
    n = est.geometry.num_sites
    if n <= DENSE_SITE_CAP:
        q = _sqrt_rate_dense(est, t)
        h = est.hessian(t, phis)
        m = q[None] @ h @ q[None]
        m = 0.5 * (m + np.swapaxes(m, 1, 2))
        return np.linalg.eigvalsh(m)[:, 0]
    import scipy.sparse.linalg as sla
    qm = est.rate(t).map(np.sqrt)
    out = []
    for phi in phis:
        op = sla.LinearOperator((n, n), matvec=lambda v, phi=phi: apply_multiplier(
            qm, est.hessian_vector(t, phi, apply_multiplier(qm, v))), dtype=float)
        val = sla.eigsh(op, k=1, which="SA", tol=1e-8, return_eigenvectors=False)
        out.append(float(val[0]))
    return np.array(out)


def _refine(est, t, phi, value, iters=20, step=0.2, seed=0):
    """SPSA descent on ``lambda_min`` as a function of the probe field."""
    g = rng.stream(seed, f"spsa-{t!r}")
    best, best_val = phi.copy(), value
    cur = phi.copy()
    for k in range(iters):
        c = 0.1 / (k + 1) ** 0.101
        delta = g.choice([-1.0, 1.0], size=phi.shape)
        fp, fm = conjugated_min_eig(est, t, np.stack([cur + c * delta, cur - c * delta]))
        grad = (fp - fm) / (2 * c) * delta
        cur = cur - step / (k + 1) ** 0.602 * grad / max(np.linalg.norm(grad), 1e-12) * math.sqrt(phi.size)
        val = conjugated_min_eig(est, t, cur)[0]
        if val < best_val:
            best, best_val = cur.copy(), val
    return best, best_val


def be_profile(est, t_grid: np.ndarray, probes, adversarial: bool = False,
               adversarial_iters: int = 20, include_extremal: bool = True) -> BEProfile:
    """Empirical multiscale Bakry-Emery profile over a probe ensemble.

    ``lambda_dot(t)`` is the smallest eigenvalue of ``Q_t hess V_t(phi) Q_t``
    minimised over the probes (optionally refined adversarially).  This is a
    non-rigorous estimate: the true criterion quantifies over every field.
    """
    samples = getattr(probes, "samples", probes)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if include_extremal:
        samples = np.concatenate([samples, est.model.extremal_fields()])
    if samples.shape[0] == 0:
        raise ConfigurationError("probe ensemble is empty", field="probes")
    check_field(est.geometry, samples)
    t_grid = np.asarray(t_grid, dtype=float)
    zero_model = isinstance(est.model, ZeroPotential)
    lam_dot = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        if zero_model:
            lam_dot[i] = 0.0
            continue
        vals = conjugated_min_eig(est, t, samples)
        j = int(np.argmin(vals))
        best = vals[j]
        if adversarial:
            _, best = _refine(est, t, samples[j], best, iters=adversarial_iters, seed=getattr(est, "seed", 0))
        lam_dot[i] = best
    a0 = float(est.eigenvalues.min())
    lam, lam_inf, tail, bound, warns = integrate_lambda(t_grid, lam_dot, a0)
    prov = {
        "model": est.model.name,
        "n_probes": int(samples.shape[0]),
        "probe_measure": getattr(probes, "measure", "array"),
        "adversarial": adversarial,
        "estimator": "exact" if getattr(est, "exact", False) else "monte-carlo",
        "n_inner": getattr(est, "n_inner", 0),
        "seed": getattr(est, "seed", None),
    }
    return BEProfile(t_grid, lam_dot, lam, lam_inf, tail, bound, a0, prov, warns)
