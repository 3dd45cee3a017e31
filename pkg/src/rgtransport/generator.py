"""Low-lying spectrum of ``-L`` for ``d eta ~ exp(-U) d phi`` on one or two sites.

The Dirichlet form ``int |grad f|^2 d eta`` is discretised on a tensor grid
over ``[-R, R]^n`` with densities at cell midpoints, which gives a symmetric
generalised eigenproblem.  Conjugating by the square root of the nodal
density makes it a standard symmetric problem; all weights are formed in the
log domain.  Eigenvalues are Richardson-extrapolated from grids with ``n``,
``n/2`` and ``n/4`` intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .errors import ConfigurationError, GridTooCoarseError
from .lattice import LatticeGeometry, MassParams, dense_precision, precision_opnorm
from .potentials import PotentialModel, ZeroPotential

# second-order convergence; a Gaussian density superconverges at fourth order
RATIO_RANGES = ((3.5, 4.5), (14.0, 18.0))


def _axis_operator(U_nodes, U_mid, h, axis):
    """Contribution of one coordinate direction, as COO triplets."""
    shape = U_nodes.shape
    idx = np.arange(U_nodes.size).reshape(shape)
    lo = [slice(None)] * U_nodes.ndim
    hi = [slice(None)] * U_nodes.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    lo, hi = tuple(lo), tuple(hi)
    u_lo, u_hi = U_nodes[lo], U_nodes[hi]
    # S_ii gets exp(U_i - U_mid) from each adjacent edge; S_ij = -exp((U_i+U_j)/2 - U_mid)
    diag = np.zeros(shape)
    diag[lo] += np.exp(u_lo - U_mid)
    diag[hi] += np.exp(u_hi - U_mid)
    off = -np.exp(0.5 * (u_lo + u_hi) - U_mid)
    i, j = idx[lo].ravel(), idx[hi].ravel()
    rows = np.concatenate([idx.ravel(), i, j])
    cols = np.concatenate([idx.ravel(), j, i])
    vals = np.concatenate([diag.ravel(), off.ravel(), off.ravel()]) / (h * h)
    return rows, cols, vals


def dirichlet_spectrum(potential, n_sites: int, R: float, n: int, k: int) -> np.ndarray:
    """Lowest ``k`` eigenvalues of the discretised ``-L`` on ``n`` intervals per axis.

    ``potential`` maps an array of fields ``(..., n_sites)`` to ``U`` values.
    """
    if n_sites not in (1, 2):
        raise ConfigurationError("grid eigensolve supports one or two sites", field="geometry")
    x = np.linspace(-R, R, n + 1)
    h = x[1] - x[0]
    mid = 0.5 * (x[1:] + x[:-1])
    if n_sites == 1:
        U = potential(x[:, None])
        Um = potential(mid[:, None])
        d = np.zeros(n + 1)
        d[:-1] += np.exp(U[:-1] - Um)
        d[1:] += np.exp(U[1:] - Um)
        e = -np.exp(0.5 * (U[:-1] + U[1:]) - Um)
        return scipy.linalg.eigh_tridiagonal(d / h**2, e / h**2, select="i", select_range=(0, k - 1),
                                             eigvals_only=True)
    X, Y = np.meshgrid(x, x, indexing="ij")
    U = potential(np.stack([X, Y], axis=-1))
    parts = []
    for axis in (0, 1):
        grids = [x, x]
        grids[axis] = mid
        Mx, My = np.meshgrid(*grids, indexing="ij")
        parts.append(_axis_operator(U, potential(np.stack([Mx, My], axis=-1)), h, axis))
    rows, cols, vals = (np.concatenate(p) for p in zip(*parts))
    size = U.size
    S = sp.csc_matrix((vals, (rows, cols)), shape=(size, size))
    vals = sla.eigsh(S, k=k, sigma=-0.1, which="LM", return_eigenvectors=False, tol=1e-12)
    return np.sort(vals)


def richardson(coarse4, coarse2, fine, scale: float = 1.0, check: bool = True):
    """Richardson extrapolation from three nested grids.

    Returns ``(extrapolated, ratios)``.  The observed ratio sets the order
    used for extrapolation; it must lie in one of ``RATIO_RANGES``.
    """
    d1 = np.asarray(coarse4) - np.asarray(coarse2)
    d2 = np.asarray(coarse2) - np.asarray(fine)
    floor = 1e-11 * max(scale, 1.0)
    resolved = (np.abs(d1) > 100 * floor) & (np.abs(d2) > floor)
    ratios = np.full(d1.shape, np.nan)
    ratios[resolved] = d1[resolved] / d2[resolved]
    if check:
        ok = np.zeros(d1.shape, dtype=bool)
        for lo, hi in RATIO_RANGES:
            ok |= (ratios >= lo) & (ratios <= hi)
        bad = resolved & ~ok
        if np.any(bad):
            raise GridTooCoarseError(f"Richardson ratios {ratios[bad]} outside {RATIO_RANGES}; refine the grid")
    factor = np.where(resolved & (ratios > 10.0), 15.0, 3.0)
    return np.asarray(fine) - d2 / factor, ratios


@dataclass
class SpectrumComparison:
    gamma: np.ndarray
    nu: np.ndarray
    c: float
    holds: np.ndarray
    holds_flat: np.ndarray
    ratios_gamma: np.ndarray
    ratios_nu: np.ndarray
    R: float
    n: int

    @property
    def all_hold(self) -> bool:
        return bool(np.all(self.holds))

    def to_dict(self) -> dict:
        return {
            "lambda_gamma": self.gamma.tolist(),
            "lambda_nu": self.nu.tolist(),
            "c": self.c,
            "c2_lambda_nu": (self.c**2 * self.nu).tolist(),
            "holds": self.holds.tolist(),
            "holds_flat": self.holds_flat.tolist(),
            "richardson_ratio_gamma": [None if math.isnan(r) else r for r in self.ratios_gamma],
            "richardson_ratio_nu": [None if math.isnan(r) else r for r in self.ratios_nu],
            "R": self.R,
            "n": self.n,
        }


def _potentials(model: PotentialModel, geom: LatticeGeometry, mass: MassParams):
    A = dense_precision(geom, mass)

    def gauss(phi):
        return 0.5 * np.einsum("...i,ij,...j->...", phi, A, phi)

    if isinstance(model, ZeroPotential):
        return gauss, gauss

    def full(phi):
        flat = phi.reshape(-1, phi.shape[-1])
        return gauss(phi) + model.value(flat).reshape(phi.shape[:-1])

    return gauss, full


def generator_eigs(model: PotentialModel, geom: LatticeGeometry, mass: MassParams,
                   R: float | None = None, n: int = 2000, k: int = 6, c: float = 1.0,
                   tol: float = 1e-12) -> SpectrumComparison:
    """Compare ``lambda_i(gamma)`` with ``c^2 lambda_i(nu)`` for ``i < k``."""
    if geom.num_sites not in (1, 2):
        raise ConfigurationError("generator spectra need one or two sites", field="geometry")
    if n % 4 or n < 16:
        raise ConfigurationError("grid intervals must be a multiple of 4 and at least 16", field="n")
    if R is None:
        R = 10.0 * math.sqrt(precision_opnorm(geom, mass))
    gauss, full = _potentials(model, geom, mass)
    edge = np.linspace(-R, R, 401)
    if geom.num_sites == 1:
        boundary, interior = np.array([[-R], [R]]), edge[:, None]
    else:
        ones = np.full_like(edge, R)
        boundary = np.concatenate([np.stack([edge, s * ones], -1) for s in (-1, 1)]
                                  + [np.stack([s * ones, edge], -1) for s in (-1, 1)])
        interior = np.stack(np.meshgrid(edge[::4], edge[::4], indexing="ij"), -1).reshape(-1, 2)
    for U in (gauss, full):
        if np.max(np.exp(np.min(U(interior)) - U(boundary))) > 1e-10:
            raise ConfigurationError("grid radius too small: boundary density above 1e-10", field="R")

    def extrap(U):
        ev = [dirichlet_spectrum(U, geom.num_sites, R, m, k) for m in (n // 4, n // 2, n)]
        return richardson(*ev, scale=float(np.max(np.abs(ev[-1]))))

    lg, rg = extrap(gauss)
    ln, rn = extrap(full)
    lg[0] = max(lg[0], 0.0)
    ln[0] = max(ln[0], 0.0)
    holds = lg <= c * c * ln + tol * np.maximum(1.0, np.abs(lg))
    holds_flat = lg <= c * ln + tol * np.maximum(1.0, np.abs(lg))
    return SpectrumComparison(lg, ln, c, holds, holds_flat, rg, rn, R, n)
