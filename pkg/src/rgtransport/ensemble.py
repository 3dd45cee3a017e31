"""Seeded collections of lattice fields and block-based error bars."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeGeometry, check_field

MEASURES = ("gff", "mcmc-nu", "transport-nu", "bridge-nu")


@dataclass(eq=False)
class FieldEnsemble:
    """Samples of shape ``(count, num_sites)``.

    ``n_blocks`` is the number of contiguous blocks that may be treated as
    independent when forming error bars (one per chain for MCMC output).
    """

    samples: np.ndarray
    geometry: LatticeGeometry
    measure: str
    seed: int | None = None
    metadata: dict = field(default_factory=dict)
    n_blocks: int | None = None

    def __post_init__(self):
        self.samples = np.atleast_2d(check_field(self.geometry, self.samples))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("ensemble contains non-finite values")
        if self.n_blocks is None:
            self.n_blocks = min(50, self.count)

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    def blocks(self) -> np.ndarray:
        """Block label of each sample."""
        return np.arange(self.count) * self.n_blocks // self.count

    def mean_se(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean of per-sample ``values`` (leading axis = samples) with block SE."""
        return block_mean_se(values, self.n_blocks)

    def jackknife(self, stat, *arrays) -> tuple[np.ndarray, np.ndarray]:
        return jackknife(stat, arrays, self.n_blocks)


def block_mean_se(values, n_blocks: int):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    labels = np.arange(n) * n_blocks // n
    sums = np.zeros((n_blocks,) + values.shape[1:])
    np.add.at(sums, labels, values)
    counts = np.bincount(labels, minlength=n_blocks).reshape((-1,) + (1,) * (values.ndim - 1))
    means = sums / counts
    return values.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(n_blocks)


def jackknife(stat, arrays, n_blocks: int):
    """Delete-one-block jackknife of ``stat(*arrays)`` (samples on axis 0)."""
    arrays = [np.asarray(a) for a in arrays]
    n = arrays[0].shape[0]
    labels = np.arange(n) * n_blocks // n
    full = np.asarray(stat(*arrays), dtype=float)
    reps = np.array([stat(*[a[labels != b] for a in arrays]) for b in range(n_blocks)], dtype=float)
    se = np.sqrt((n_blocks - 1) / n_blocks * np.square(reps - reps.mean(axis=0)).sum(axis=0))
    return full, se


def combined_se(*ses) -> float:
    return float(math.sqrt(sum(float(s) ** 2 for s in ses)))
