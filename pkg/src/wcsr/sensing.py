"""Compressive sensing operators, measurement budgets and noisy projections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .spectrum import OccupancyProfile


@dataclass
class SensingEnsemble:
    matrix: np.ndarray
    noise_std: float = 0.0
    design: str = "uniform"

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 1:
            raise ValueError(f"sensing matrix must be 2-D with m >= 1 rows, got shape {self.matrix.shape}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @property
    def num_measurements(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_bands(self) -> int:
        return self.matrix.shape[1]


@dataclass
class MeasurementSet:
    y: np.ndarray
    row_indices: np.ndarray
    matrix: np.ndarray
    node_id: int | None = None

    def __post_init__(self):
        if len(self.y) != len(self.row_indices) or len(self.y) != self.matrix.shape[0]:
            raise ValueError("measurement vector length must equal the number of rows")


def required_measurements(profile: OccupancyProfile, c: float = 2.0) -> int:
    """Blockwise ``k log(n/k)`` measurement budget.

    Each block with ``k_j = ceil(p_j n_j) > 0`` contributes
    ``ceil(c k_j max(1, ln(n_j / k_j)))``; empty blocks contribute nothing.
    """
    if c <= 0:
        raise ValueError("oversampling constant c must be > 0")
    total = 0
    for b in profile.blocks:
        # guard against p*n landing a hair above an integer
        k = math.ceil(round(b.avg_occupancy * b.num_bands, 9))
        if k == 0:
            continue
        total += math.ceil(c * k * max(1.0, math.log(b.num_bands / k)))
    return total


def build_sensing_matrix(
    m: int,
    profile: OccupancyProfile,
    design: str = "uniform",
    rng: np.random.Generator | None = None,
    noise_std: float = 0.0,
) -> SensingEnsemble:
    """Gaussian sensing matrix, optionally shaped toward denser blocks.

    ``nonuniform`` scales the columns of block j by ``sqrt(p_j / p_bar)`` and
    then renormalises so that the expected Frobenius norm stays ``sqrt(n)``.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    rng = np.random.default_rng(rng)
    n = profile.num_bands
    A = rng.standard_normal((m, n)) / math.sqrt(m)
    if design == "uniform":
        pass
    elif design == "nonuniform":
        p = profile.occupancies()
        if np.any(p == 0.0):
            raise ValueError("nonuniform design needs every block occupancy > 0 (apply a floor)")
        sizes = profile.sizes()
        p_bar = float(sizes @ p) / n
        s = np.sqrt(p / p_bar)
        # E||A||_F^2 = sum_j n_j s_j^2 after column scaling
        renorm = math.sqrt(n / float(sizes @ (s * s)))
        A *= np.repeat(s * renorm, sizes)[None, :]
    else:
        raise ValueError(f"unknown design {design!r}")
    return SensingEnsemble(A, noise_std, design)


def measure(
    ensemble: SensingEnsemble,
    x: np.ndarray,
    rng: np.random.Generator | None = None,
    rows=None,
    node_id: int | None = None,
) -> MeasurementSet:
    """``y = A[rows] x + w`` with ``w ~ N(0, noise_std^2)``."""
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != ensemble.num_bands:
        raise ValueError(f"x has shape {x.shape}, expected ({ensemble.num_bands},)")
    if rows is None:
        idx = np.arange(ensemble.num_measurements)
        sub = ensemble.matrix
    else:
        idx = np.asarray(rows, dtype=np.int64)
        sub = np.ascontiguousarray(ensemble.matrix[idx])
    y = kernels.row_matvec(sub, x)
    if ensemble.noise_std > 0:
        rng = np.random.default_rng(rng)
        y = y + ensemble.noise_std * rng.standard_normal(y.shape[0])
    return MeasurementSet(y, idx, sub, node_id)


def dump_matrix(ensemble: SensingEnsemble, path, fmt: str = "csv") -> Path:
    """Write the sensing matrix row-major: one CSV line per row, or ``.npy``."""
    path = Path(path)
    try:
        if fmt == "csv":
            np.savetxt(path, ensemble.matrix, delimiter=",", fmt="%.17g")
        elif fmt == "npy":
            np.save(path, ensemble.matrix)
        else:
            raise ValueError(f"unknown matrix dump format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write sensing matrix to {path}: {exc}") from exc
    return path


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
