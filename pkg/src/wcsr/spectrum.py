"""Synthetic heterogeneous wideband occupancy and per-node observations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BlockSpec:
    start_band: int
    num_bands: int
    avg_occupancy: float

    def __post_init__(self):
        if self.num_bands < 1:
            raise ValueError(f"block num_bands must be >= 1, got {self.num_bands}")
        if not 0.0 <= self.avg_occupancy <= 1.0:
            raise ValueError(f"block avg_occupancy must lie in [0, 1], got {self.avg_occupancy}")
        if self.start_band < 0:
            raise ValueError(f"block start_band must be >= 0, got {self.start_band}")

    @property
    def stop_band(self) -> int:
        return self.start_band + self.num_bands


@dataclass(frozen=True)
class OccupancyProfile:
    """Partition of ``num_bands`` narrowbands into contiguous blocks."""

    num_bands: int
    blocks: tuple[BlockSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ValueError("profile needs at least one block")
        pos = 0
        for b in self.blocks:
            if b.start_band != pos:
                raise ValueError(
                    f"blocks must be contiguous and ordered: expected start {pos}, got {b.start_band}"
                )
            pos = b.stop_band
        if pos != self.num_bands:
            raise ValueError(f"blocks cover [0, {pos}) but num_bands is {self.num_bands}")

    @classmethod
    def from_blocks(cls, sizes, occupancies) -> OccupancyProfile:
        """Build a profile from per-block sizes and average occupancies."""
        if len(sizes) != len(occupancies):
            raise ValueError("sizes and occupancies must have equal length")
        blocks = []
        start = 0
        for size, p in zip(sizes, occupancies):
            blocks.append(BlockSpec(start, int(size), float(p)))
            start += int(size)
        return cls(start, tuple(blocks))

    @classmethod
    def from_dict(cls, d: dict) -> OccupancyProfile:
        blocks = d["blocks"]
        sizes = [b["num_bands"] for b in blocks]
        occ = [b["avg_occupancy"] for b in blocks]
        prof = cls.from_blocks(sizes, occ)
        if "num_bands" in d and d["num_bands"] != prof.num_bands:
            raise ValueError(f"num_bands {d['num_bands']} disagrees with block sizes sum {prof.num_bands}")
        return prof

    def to_dict(self) -> dict:
        return {
            "num_bands": self.num_bands,
            "blocks": [{"num_bands": b.num_bands, "avg_occupancy": b.avg_occupancy} for b in self.blocks],
        }

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def sizes(self) -> np.ndarray:
        return np.array([b.num_bands for b in self.blocks], dtype=np.int64)

    def occupancies(self) -> np.ndarray:
        return np.array([b.avg_occupancy for b in self.blocks], dtype=float)

    def band_occupancy(self) -> np.ndarray:
        """Per-band average occupancy (length ``num_bands``)."""
        return np.repeat(self.occupancies(), self.sizes())

    def expected_sparsity(self) -> float:
        return float(self.sizes() @ self.occupancies())


@dataclass(frozen=True)
class AmplitudeDist:
    """Amplitude law for occupied bands: ``constant`` or ``lognormal``."""

    kind: str = "constant"
    value: float = 1.0
    sigma_db: float = 0.0

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, float(self.value))
        if self.kind == "lognormal":
            # value is the median amplitude; spread is given in dB of power
            db = rng.normal(0.0, self.sigma_db, size)
            return self.value * 10.0 ** (db / 20.0)
        raise ValueError(f"unknown amplitude distribution {self.kind!r}")


@dataclass
class WidebandSnapshot:
    time_index: int
    occupancy: np.ndarray
    amplitudes: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.occupancy)


def draw_snapshot(
    profile: OccupancyProfile,
    amplitude_dist: AmplitudeDist | None = None,
    rng: np.random.Generator | None = None,
    time_index: int = 0,
) -> WidebandSnapshot:
    """Draw one occupancy snapshot; band i in block j is busy w.p. p_j."""
    rng = np.random.default_rng(rng)
    amplitude_dist = amplitude_dist or AmplitudeDist()
    p = profile.band_occupancy()
    occ = (rng.random(profile.num_bands) < p).astype(np.int8)
    amps = np.zeros(profile.num_bands)
    idx = np.flatnonzero(occ)
    amps[idx] = amplitude_dist.sample(idx.size, rng)
    return WidebandSnapshot(time_index, occ, amps)


@dataclass(frozen=True)
class PropagationModel:
    f_max: float = 60e9
    path_loss_exponent: float = 2.0
    ref_distance: float = 1.0
    ref_loss_db: float = 0.0
    tx_power_dbm: float = 0.0
    sensitivity_dbm: float = -math.inf
    fading: str = "none"

    def __post_init__(self):
        if self.ref_distance <= 0:
            raise ValueError("ref_distance must be > 0")
        if self.fading not in ("none", "rayleigh"):
            raise ValueError(f"fading must be 'none' or 'rayleigh', got {self.fading!r}")

    def path_loss_db(self, d) -> np.ndarray | float:
        return self.ref_loss_db + 10.0 * self.path_loss_exponent * np.log10(np.asarray(d) / self.ref_distance)

    @staticmethod
    def free_space_ref_loss_db(f_hz: float, d0: float = 1.0) -> float:
        """Friis free-space loss at ``d0`` metres, for filling ``ref_loss_db``."""
        c = 299_792_458.0
        return 20.0 * math.log10(4.0 * math.pi * d0 * f_hz / c)

    @classmethod
    def from_dict(cls, d: dict) -> PropagationModel:
        return cls(**d)


@dataclass(frozen=True)
class SensorNode:
    id: int
    position: tuple[float, float]
    num_branches: int = 4
    noise_std: float = 0.0

    def __post_init__(self):
        if self.num_branches < 1:
            raise ValueError(f"node {self.id}: num_branches must be >= 1")
        if self.noise_std < 0:
            raise ValueError(f"node {self.id}: noise_std must be >= 0")


def rayleigh_gain(size, rng: np.random.Generator) -> np.ndarray:
    """Rayleigh amplitude gains with unit mean-square."""
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return np.sqrt(0.5 * (re * re + im * im))


def observe_at_node(
    snapshot: WidebandSnapshot,
    node: SensorNode,
    source_position,
    prop: PropagationModel,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Band amplitudes seen by ``node`` for a single primary source.

    Amplitudes are attenuated by the log-distance loss (in amplitude, i.e.
    ``10**(-PL/20)``), optionally multiplied by per-band Rayleigh gains, and
    bands whose received power ``tx_power_dbm + 20 log10(amp)`` falls below
    the sensitivity are dropped to zero.
    """
    d = math.dist(node.position, source_position)
    if d <= 0.0:
        raise ValueError(f"node {node.id} coincides with the source position")
    rng = np.random.default_rng(rng)
    pl = float(prop.path_loss_db(d))
    obs = snapshot.amplitudes * 10.0 ** (-pl / 20.0)
    if prop.fading == "rayleigh":
        obs = obs * rayleigh_gain(obs.shape[0], rng)
    obs = np.where(snapshot.occupancy > 0, obs, 0.0)
    with np.errstate(divide="ignore"):
        rx_dbm = prop.tx_power_dbm + 20.0 * np.log10(np.abs(obs))
    obs[rx_dbm < prop.sensitivity_dbm] = 0.0
    return obs


def detection_range(prop: PropagationModel) -> float:
    """Distance at which received power drops to the sensitivity level."""
    margin = prop.tx_power_dbm - prop.ref_loss_db - prop.sensitivity_dbm
    if margin < 0:
        raise ValueError(f"link budget is negative at the reference distance ({margin:.3g} dB)")
    return prop.ref_distance * 10.0 ** (margin / (10.0 * prop.path_loss_exponent))
