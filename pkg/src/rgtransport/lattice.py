"""Periodic lattice geometry, the discrete Laplacian and its Fourier spectrum.

Fields are plain ``numpy`` arrays whose last axis runs over the sites of the
torus in row-major order, ``x = sum_j x_j N**(d-1-j)``.  Leading axes are
batch axes, so a stack of ``n`` fields has shape ``(n, num_sites)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError, UnsupportedDimensionError


@dataclass(frozen=True)
class LatticeGeometry:
    d: int
    L: float
    eps: float
    N: int

    @property
    def num_sites(self) -> int:
        return self.N ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    def grid(self, phi: np.ndarray) -> np.ndarray:
        """View a (batched) flat field as ``(..., N, ..., N)``."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape[-1] != self.num_sites:
            raise ShapeError(f"field has {phi.shape[-1]} sites, geometry has {self.num_sites}")
        return phi.reshape(phi.shape[:-1] + self.shape)

    def flat(self, grid: np.ndarray) -> np.ndarray:
        return grid.reshape(grid.shape[: grid.ndim - self.d] + (self.num_sites,))

    def coordinates(self) -> np.ndarray:
        """Integer site coordinates, shape ``(num_sites, d)``, row-major."""
        idx = np.indices(self.shape).reshape(self.d, -1)
        return idx.T.copy()

    def shift(self, phi: np.ndarray, offset: tuple[int, ...]) -> np.ndarray:
        """Translate a field by a lattice vector (periodically)."""
        g = self.grid(phi)
        return self.flat(np.roll(g, offset, axis=self.axes))


@dataclass(frozen=True)
class MassParams:
    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigurationError(f"mass must be positive, got {self.m}", field="mass")


def build_geometry(d: int, L: float, eps: float) -> LatticeGeometry:
    if d not in (1, 2):
        raise UnsupportedDimensionError(f"dimension {d} not supported (only 1 or 2)", field="geometry.d")
    if not (L > 0 and eps > 0):
        raise ConfigurationError("L and eps must be positive", field="geometry")
    ratio = L / eps
    N = int(round(ratio))
    if N < 1 or abs(ratio - N) > 1e-9 * ratio:
        raise ConfigurationError(f"L/eps = {ratio!r} is not an integer", field="geometry.eps")
    return LatticeGeometry(d=d, L=float(L), eps=float(eps), N=N)


def check_field(geom: LatticeGeometry, phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0 or phi.shape[-1] != geom.num_sites:
        raise ShapeError(f"expected trailing axis of length {geom.num_sites}, got shape {phi.shape}")
    return phi


def laplacian_apply(geom: LatticeGeometry, phi: np.ndarray) -> np.ndarray:
    """Periodic nearest-neighbour Laplacian ``eps**-2 sum_{y~x} (phi_y - phi_x)``.

    Each site has 2d directed neighbours; on tori with N <= 2 the same
    neighbour can appear twice and is counted twice.
    """
    g = geom.grid(check_field(geom, phi))
    out = -2.0 * geom.d * g
    for ax in geom.axes:
        out = out + np.roll(g, 1, axis=ax) + np.roll(g, -1, axis=ax)
    return geom.flat(out) / geom.eps**2


def laplacian_symbol(geom: LatticeGeometry) -> np.ndarray:
    """Eigenvalues of ``-Delta^eps`` on the Fourier grid, shape ``geom.shape``."""
    k = np.arange(geom.N)
    one = 2.0 * (1.0 - np.cos(2.0 * np.pi * k / geom.N))
    total = np.zeros(geom.shape)
    for j in range(geom.d):
        bshape = [1] * geom.d
        bshape[j] = geom.N
        total = total + one.reshape(bshape)
    return total / geom.eps**2


def mode_eigenvalues(geom: LatticeGeometry, mass: MassParams | float) -> np.ndarray:
    """``a(k) = eps**d (-Delta^eps symbol + m)`` on the Fourier grid."""
    m = mass.m if isinstance(mass, MassParams) else float(mass)
    return geom.eps**geom.d * (laplacian_symbol(geom) + m)


def fourier_modes(geom: LatticeGeometry, mass: MassParams | float) -> list[tuple[tuple[int, ...], float]]:
    a = mode_eigenvalues(geom, mass)
    return [(tuple(int(v) for v in k), float(a[k])) for k in np.ndindex(*geom.shape)]


def precision_opnorm(geom: LatticeGeometry, mass: MassParams | float) -> float:
    """Largest eigenvalue of the covariance ``A_eps^{-1}``, i.e. ``1/a(0)``."""
    return float(1.0 / mode_eigenvalues(geom, mass).min())


def dense_operator(geom: LatticeGeometry, apply) -> np.ndarray:
    """Materialise a linear map on fields as a symmetric-indexed matrix."""
    eye = np.eye(geom.num_sites)
    return np.asarray(apply(eye)).T


def dense_precision(geom: LatticeGeometry, mass: MassParams | float) -> np.ndarray:
    """``A_eps = eps**d (-Delta^eps + m)`` built from the stencil, not from the FFT."""
    m = mass.m if isinstance(mass, MassParams) else float(mass)
    lap = dense_operator(geom, lambda e: laplacian_apply(geom, e))
    return geom.eps**geom.d * (-lap + m * np.eye(geom.num_sites))


def mode_vector(geom: LatticeGeometry, k: tuple[int, ...], kind: str = "cos") -> np.ndarray:
    """Real Fourier mode ``cos(2 pi k.x/N)`` (or ``sin``) sampled on the sites."""
    phase = 2.0 * np.pi * geom.coordinates() @ np.asarray(k, dtype=float) / geom.N
    return np.cos(phase) if kind == "cos" else np.sin(phase)


def mode_power(geom: LatticeGeometry, samples: np.ndarray) -> np.ndarray:
    """Per-sample ``|hat phi(k)|^2 / |Lambda|``; its mean is the mode variance."""
    g = geom.grid(samples)
    return np.abs(np.fft.fftn(g, axes=geom.axes)) ** 2 / geom.num_sites
