"""Fusion-center recovery from branch-limited sensor nodes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .recovery import SOLVERS, RecoveryResult, SolverOptions, solve
from .sensing import SensingEnsemble
from .spectrum import OccupancyProfile, SensorNode


class MeasurementShortfall(ValueError):
    """Fewer stacked measurements than the fusion center needs."""

    def __init__(self, have: int, need: int):
        super().__init__(f"measurement shortfall: have {have}, need {need}")
        self.have = have
        self.need = need


@dataclass
class PartialScan:
    node_id: int
    rows: np.ndarray
    y_partial: np.ndarray
    row_indices: np.ndarray
    round_index: int = 0

    def __post_init__(self):
        if self.rows.shape[0] != self.y_partial.shape[0]:
            raise ValueError("partial scan rows and measurements disagree in length")

    def to_record(self) -> dict:
        return {
            "node_id": int(self.node_id),
            "row_indices": [int(i) for i in self.row_indices],
            "y": [float(v) for v in self.y_partial],
        }


@dataclass(frozen=True)
class FusionConfig:
    required_m: int
    cluster_radius: float = 50.0
    solver: str = "weighted_csr"
    sequential_fallback: bool = False
    epsilon: float = 0.1
    sparsity: int | None = None

    def __post_init__(self):
        if self.required_m < 1:
            raise ValueError("required_m must be >= 1")
        if self.cluster_radius <= 0:
            raise ValueError("cluster_radius must be > 0")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")


def cluster_nodes(nodes, radius: float) -> list[list[SensorNode]]:
    """Greedy radius clustering.

    Repeatedly seeds a cluster at the unassigned node with the most
    unassigned nodes within ``radius`` (itself included, ties to the lowest
    id) and absorbs all of them.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    nodes = sorted(nodes, key=lambda nd: nd.id)
    if not nodes:
        return []
    pos = np.array([nd.position for nd in nodes], dtype=float)
    within = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1) <= radius
    free = np.ones(len(nodes), dtype=bool)
    clusters = []
    while free.any():
        counts = (within & free[None, :]).sum(axis=1)
        counts[~free] = -1
        seed = int(np.argmax(counts))
        members = np.flatnonzero(within[seed] & free)
        free[members] = False
        clusters.append([nodes[i] for i in members])
    return clusters


def perturb_observation(x_base, gamma: float, rng=None) -> np.ndarray:
    """Return ``x_u`` on the support of ``x_base`` with ``||x_u - x_base|| = gamma ||x_base||``."""
    if gamma < 0:
        raise ValueError("gap must be >= 0")
    x_base = np.asarray(x_base, dtype=float)
    if gamma == 0:
        return x_base.copy()
    base_norm = np.linalg.norm(x_base)
    if base_norm == 0:
        raise ValueError("cannot perturb an all-zero observation by a relative gap")
    rng = np.random.default_rng(rng)
    supp = np.flatnonzero(x_base)
    delta = np.zeros_like(x_base)
    d = rng.standard_normal(supp.size)
    while not np.any(d):  # pragma: no cover - probability zero
        d = rng.standard_normal(supp.size)
    delta[supp] = d * (gamma * base_norm / np.linalg.norm(d))
    return x_base + delta


def node_stream(base_seed: int, node_id: int, round_index: int = 0) -> np.random.Generator:
    """Independent random stream for one node's scan in one round."""
    return np.random.default_rng([base_seed, node_id, round_index])


def _base_seed(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(np.random.default_rng(rng).integers(2**63))


def collect_scans(cluster, observations, master: SensingEnsemble, rng=None, round_index: int = 0):
    """One parallel scan round: each node measures with its own block of rows.

    Nodes are served in id order and receive consecutive, disjoint row
    blocks of ``master``; round ``r`` starts at row ``r * sum(branches)``.
    ``observations`` maps node id to the amplitude vector that node sees
    (a sequence aligned with ``cluster`` is accepted too).
    """
    if not isinstance(observations, dict):
        observations = {nd.id: obs for nd, obs in zip(cluster, observations)}
    nodes = sorted(cluster, key=lambda nd: nd.id)
    per_round = sum(nd.num_branches for nd in nodes)
    if per_round < 1:
        raise ValueError("cluster has no branches")
    start = round_index * per_round
    if master.num_measurements < start + per_round:
        raise ValueError(
            f"master matrix has {master.num_measurements} rows, round {round_index} needs {start + per_round}"
        )
    base = _base_seed(rng)
    scans = []
    for nd in nodes:
        idx = np.arange(start, start + nd.num_branches)
        start += nd.num_branches
        rows = np.ascontiguousarray(master.matrix[idx])
        x = np.ascontiguousarray(observations[nd.id], dtype=float)
        y = kernels.row_matvec(rows, x)
        if nd.noise_std > 0:
            y = y + nd.noise_std * node_stream(base, nd.id, round_index).standard_normal(idx.size)
        scans.append(PartialScan(nd.id, rows, y, idx, round_index))
    return scans


def make_rescan(cluster, observations, master: SensingEnsemble, rng=None):
    """Callable ``round_index -> scans`` for sequential fallback rounds."""
    base = _base_seed(rng)

    def rescan(round_index):
        return collect_scans(cluster, observations, master, base, round_index)

    return rescan


def stack_scans(scans):
    scans = sorted(scans, key=lambda s: (s.round_index, s.node_id))
    A = np.vstack([s.rows for s in scans])
    y = np.concatenate([s.y_partial for s in scans])
    return A, y


def fuse_and_recover(
    scans,
    cfg: FusionConfig,
    profile: OccupancyProfile,
    opts: SolverOptions | None = None,
    rescan=None,
) -> RecoveryResult:
    """Stack partial scans and run the configured solver once ``required_m`` rows arrived.

    With ``sequential_fallback`` the same nodes are asked for further scan
    rounds through ``rescan(round_index)`` until enough rows are in; without
    it a shortfall raises :class:`MeasurementShortfall`. Only the first
    ``required_m`` rows (arrival order) are used.
    """
    scans = list(scans)
    if not scans:
        raise ValueError("no scans to fuse")
    have = sum(s.y_partial.size for s in scans)
    rounds = 1 + max(s.round_index for s in scans)
    if have < cfg.required_m:
        if not cfg.sequential_fallback:
            raise MeasurementShortfall(have, cfg.required_m)
        if rescan is None:
            raise ValueError("sequential fallback needs a rescan callable")
        while have < cfg.required_m:
            more = rescan(rounds)
            got = sum(s.y_partial.size for s in more)
            if got == 0:
                raise MeasurementShortfall(have, cfg.required_m)
            scans.extend(more)
            have += got
            rounds += 1
    A, y = stack_scans(scans)
    A = np.ascontiguousarray(A[: cfg.required_m])
    y = np.ascontiguousarray(y[: cfg.required_m])
    res = solve(cfg.solver, y, A, profile, opts or SolverOptions(), k=cfg.sparsity, epsilon=cfg.epsilon)
    res.info.update(
        scan_rounds=rounds,
        rows_used=int(A.shape[0]),
        values_shipped=int(have),
        nodes=sorted({s.node_id for s in scans}),
    )
    return res


def adapt_measurement_budget(m_required: int, branches_per_node: int) -> int:
    """Number of cooperating nodes needed to gather ``m_required`` rows in one round."""
    if branches_per_node < 1:
        raise ValueError("branches_per_node must be >= 1")
    return math.ceil(m_required / branches_per_node)
