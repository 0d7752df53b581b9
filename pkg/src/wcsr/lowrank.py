"""Locality-aware low-rank completion of the bands x nodes occupancy matrix.

Pipeline: anchor grid -> nearest-anchor clusters -> per-cluster SVT
completion -> Gaussian-kernel merge into one global matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class OccupancyMatrix:
    values: np.ndarray
    mask: np.ndarray
    node_positions: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask).astype(bool)
        self.node_positions = np.asarray(self.node_positions, dtype=float).reshape(-1, 2)
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask must share one shape")
        if self.node_positions.shape[0] != self.values.shape[1]:
            raise ValueError("need one position per column (node)")

    @property
    def shape(self):
        return self.values.shape

    def columns(self, idx) -> OccupancyMatrix:
        idx = np.asarray(idx, dtype=np.int64)
        return OccupancyMatrix(self.values[:, idx], self.mask[:, idx], self.node_positions[idx])

    def observed(self) -> np.ndarray:
        """Values with unobserved entries zeroed."""
        return np.where(self.mask, self.values, 0.0)


@dataclass(frozen=True)
class AnchorGrid:
    anchors: np.ndarray
    radius: float

    @property
    def q(self) -> int:
        return len(self.anchors)


@dataclass
class CompletionResult:
    X_hat: np.ndarray
    rank_estimate: int
    fit_error: float
    iterations: int
    columns: np.ndarray | None = None
    history: list = field(default_factory=list)


def build_anchor_grid(region, R: float) -> AnchorGrid:
    """Square lattice of spacing ``R*sqrt(2)`` over ``region=(xmin, ymin, xmax, ymax)``.

    Anchors sit at cell centres, clipped into the region, so every point of
    the region lies within ``R`` of some anchor.
    """
    if R <= 0:
        raise ValueError("R must be > 0")
    xmin, ymin, xmax, ymax = map(float, region)
    if xmax < xmin or ymax < ymin:
        raise ValueError("region must have xmax >= xmin and ymax >= ymin")
    s = R * math.sqrt(2.0)

    def axis(lo, hi):
        cells = max(1, math.ceil((hi - lo) / s - 1e-9))
        return np.minimum(lo + (np.arange(cells) + 0.5) * s, hi)

    xs, ys = axis(xmin, xmax), axis(ymin, ymax)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return AnchorGrid(np.column_stack([gx.ravel(), gy.ravel()]), float(R))


def _distances(positions, anchors) -> np.ndarray:
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    return np.linalg.norm(positions[:, None, :] - np.asarray(anchors)[None, :, :], axis=-1)


def assign_to_anchors(positions, grid: AnchorGrid) -> np.ndarray:
    """Index of the nearest anchor per node; ties go to the lowest index."""
    if grid.q == 0:
        raise ValueError("anchor grid is empty")
    return np.argmin(_distances(positions, grid.anchors), axis=1)


def required_samples(n: int, u: int, r: int, C: float = 1.0) -> int:
    """``ceil(C alpha^(5/4) r ln alpha)`` with ``alpha = max(n, u)``."""
    if r < 0:
        raise ValueError("rank must be >= 0")
    if C <= 0:
        raise ValueError("C must be > 0")
    alpha = max(n, u)
    if r == 0 or alpha <= 1:
        return 0
    return math.ceil(C * alpha**1.25 * r * math.log(alpha))


def sample_mask(n: int, u: int, f: float, mode: str = "random", rng=None) -> np.ndarray:
    """Each node observes ``ceil(f n)`` bands: random, or one random contiguous run."""
    if not 0 < f <= 1:
        raise ValueError("per-node fraction must lie in (0, 1]")
    rng = np.random.default_rng(rng)
    c = math.ceil(f * n - 1e-12)
    mask = np.zeros((n, u), dtype=bool)
    for v in range(u):
        if mode == "random":
            mask[rng.choice(n, size=c, replace=False), v] = True
        elif mode == "contiguous":
            start = int(rng.integers(0, n - c + 1))
            mask[start : start + c, v] = True
        else:
            raise ValueError(f"unknown mask mode {mode!r}")
    return mask


def svt_shrink(Y, tau: float):
    """Soft-threshold the singular values of ``Y``; returns ``(X, kept_singular_values)``."""
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    X = (U[:, keep] * s[keep]) @ Vt[keep]
    return X, s[keep]


def complete_svt(
    observed: OccupancyMatrix,
    tau: float | None = None,
    delta: float | None = None,
    tol: float = 1e-4,
    max_iter: int = 500,
) -> CompletionResult:
    """Singular value thresholding for nuclear-norm matrix completion.

    Iterates ``X = shrink_tau(Y)``, ``Y += delta * P_mask(M - X)`` from the
    usual kicked start ``Y0 = k0 delta P_mask(M)``. Stops once the relative
    residual on observed entries is below ``tol``.
    """
    P = observed.mask
    if not P.any():
        raise ValueError("no observed entries to complete from")
    n, c = P.shape
    PM = observed.observed()
    f = P.mean()
    tau = 5.0 * math.sqrt(n * c) if tau is None else float(tau)
    delta = 1.2 / f if delta is None else float(delta)
    norm_pm = np.linalg.norm(PM)
    if norm_pm == 0.0:
        return CompletionResult(np.zeros_like(PM), 0, 0.0, 0)
    k0 = max(1, math.ceil(tau / (delta * np.linalg.norm(PM, 2))))
    Y = k0 * delta * PM
    X = np.zeros_like(PM)
    s = np.zeros(0)
    history = []
    rel = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        X, s = svt_shrink(Y, tau)
        resid = np.where(P, PM - X, 0.0)
        rel = float(np.linalg.norm(resid) / norm_pm)
        history.append(rel)
        if rel < tol:
            break
        Y += delta * resid
    rank = int(np.sum(s > 1e-6 * s.max())) if s.size else 0
    return CompletionResult(X, rank, rel, it, history=history)


def kernel_weights(distances, h: float) -> np.ndarray:
    """Normalised Gaussian kernel weights ``exp(-d^2 / 2h^2)``."""
    d = np.asarray(distances, dtype=float)
    k = np.exp(-(d * d) / (2.0 * h * h))
    total = k.sum()
    if total == 0.0:
        # far-field underflow: fall back to the nearest anchor
        k = (d == d.min()).astype(float)
        total = k.sum()
    return k / total


def merge_global(
    local_results,
    grid: AnchorGrid,
    positions,
    bandwidth: float | None = None,
    neighbor_predictions: dict | None = None,
) -> OccupancyMatrix:
    """Kernel-weighted merge of per-cluster completions into one matrix.

    ``local_results[c]`` is the completion for anchor ``c`` (``None`` for an
    empty cluster) with ``columns`` holding its global node indices. For a
    node ``v`` the merged column averages its own-cluster prediction with
    predictions from other clusters whose anchor is within ``2R``; those come
    from ``neighbor_predictions[(c, v)]`` and otherwise default to the
    own-cluster value.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    h = grid.radius if bandwidth is None else float(bandwidth)
    neighbor_predictions = neighbor_predictions or {}
    u = positions.shape[0]
    own = {}
    n = None
    for c, res in enumerate(local_results):
        if res is None:
            continue
        n = res.X_hat.shape[0]
        for j, v in enumerate(res.columns):
            own[int(v)] = (c, res.X_hat[:, j])
    if n is None:
        raise ValueError("no local completion results to merge")
    dist = _distances(positions, grid.anchors)
    out = np.zeros((n, u))
    for v in range(u):
        if v not in own:
            raise ValueError(f"node {v} is not covered by any cluster result")
        c_own, x_own = own[v]
        clusters = [c_own]
        preds = [x_own]
        for c, res in enumerate(local_results):
            if c == c_own or res is None or dist[v, c] > 2.0 * grid.radius:
                continue
            clusters.append(c)
            preds.append(neighbor_predictions.get((c, v), x_own))
        w = kernel_weights(dist[v, clusters], h)
        out[:, v] = np.asarray(preds).T @ w
    return OccupancyMatrix(out, np.ones_like(out, dtype=bool), positions)


def complete_local(
    observed: OccupancyMatrix,
    grid: AnchorGrid,
    bandwidth: float | None = None,
    refine_boundary: bool = False,
    **svt_kwargs,
) -> OccupancyMatrix:
    """Cluster nodes by anchor, complete each cluster, and merge.

    With ``refine_boundary`` a node within ``2R`` of a foreign anchor gets a
    prediction from that cluster by re-completing it with the node's
    observed column appended (one extra completion per such pair).
    """
    assign = assign_to_anchors(observed.node_positions, grid)
    results = []
    for c in range(grid.q):
        cols = np.flatnonzero(assign == c)
        if cols.size == 0 or not observed.mask[:, cols].any():
            results.append(None if cols.size == 0 else CompletionResult(np.zeros((observed.shape[0], cols.size)), 0, 0.0, 0, cols))
            continue
        res = complete_svt(observed.columns(cols), **svt_kwargs)
        res.columns = cols
        results.append(res)
    preds = {}
    if refine_boundary:
        dist = _distances(observed.node_positions, grid.anchors)
        for v in range(observed.shape[1]):
            for c, res in enumerate(results):
                if res is None or c == assign[v] or dist[v, c] > 2.0 * grid.radius:
                    continue
                cols = np.append(res.columns, v)
                ext = complete_svt(observed.columns(cols), **svt_kwargs)
                preds[(c, v)] = ext.X_hat[:, -1]
    return merge_global(results, grid, observed.node_positions, bandwidth, preds)


def complete_global(observed: OccupancyMatrix, **svt_kwargs) -> OccupancyMatrix:
    """Single SVT completion over all nodes (no locality)."""
    res = complete_svt(observed, **svt_kwargs)
    return OccupancyMatrix(res.X_hat, np.ones(observed.shape, dtype=bool), observed.node_positions)


def binarize_occupancy(X, theta: float | None = None, observed: OccupancyMatrix | None = None) -> np.ndarray:
    """Occupied iff value exceeds ``theta``.

    Default ``theta`` is half the median nonzero observed amplitude (taken
    from ``observed`` when given, else from ``X``).
    """
    X = np.asarray(X, dtype=float)
    if theta is None:
        ref = observed.values[observed.mask] if observed is not None else X.ravel()
        nz = np.abs(ref[ref != 0])
        theta = 0.5 * float(np.median(nz)) if nz.size else 0.0
    if theta < 0:
        raise ValueError("theta must be >= 0")
    return (X > theta).astype(np.int8)
