"""Sparse recovery solvers, support detection and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .spectrum import OccupancyProfile

POWER_ITERATIONS = 100


@dataclass(frozen=True)
class SolverOptions:
    lam: float = 0.0
    max_iter: int = 2000
    tol: float = 1e-6
    step_rule: str = "fixed_lipschitz"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.step_rule != "fixed_lipschitz":
            raise ValueError(f"unsupported step rule {self.step_rule!r}")


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    support: np.ndarray
    iterations: int
    residual_norm: float
    objective: float
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Metrics:
    nmse: float
    p_detect: float
    p_false_alarm: float


def universal_lambda(sigma: float, n: int, alpha: float = 1.0) -> float:
    """``alpha * sigma * sqrt(2 ln n)``."""
    return alpha * sigma * math.sqrt(2.0 * math.log(n))


def block_weights(profile: OccupancyProfile, epsilon: float = 0.1) -> np.ndarray:
    """Per-band weights ``1/(p_j + epsilon)`` normalised to unit mean.

    Denser blocks get smaller weights, which lowers their soft-threshold
    level in the weighted problem.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    p = profile.band_occupancy() + epsilon
    if np.any(p <= 0):
        raise ValueError("epsilon = 0 requires every block occupancy > 0")
    raw = 1.0 / p
    return raw / raw.mean()


def soft_threshold(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


def lipschitz_constant(A) -> float:
    return float(kernels.power_iteration(np.ascontiguousarray(A, dtype=float), POWER_ITERATIONS))


def _result(A, y, x, iterations, objective, **info) -> RecoveryResult:
    r = y - A @ x
    return RecoveryResult(
        x_hat=x,
        support=np.flatnonzero(x),
        iterations=int(iterations),
        residual_norm=float(np.linalg.norm(r)),
        objective=float(objective),
        info=info,
    )


def solve_weighted_csr(y, A, w, opts: SolverOptions | None = None) -> RecoveryResult:
    """Minimise ``0.5||y - Ax||^2 + lam * sum_i w_i |x_i|`` by monotone FISTA.

    Step size is ``1/L`` with ``L`` the top eigenvalue of ``A^T A`` from
    power iteration. Iteration stops when the relative change of the
    proximal point drops below ``opts.tol`` or after ``opts.max_iter``.
    """
    opts = opts or SolverOptions()
    A = np.ascontiguousarray(A, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    m, n = A.shape
    if y.shape != (m,):
        raise ValueError(f"y has shape {y.shape}, expected ({m},)")
    if w.shape != (n,):
        raise ValueError(f"weights have shape {w.shape}, expected ({n},)")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    L = lipschitz_constant(A)
    if L == 0.0:
        x = np.zeros(n)
        return _result(A, y, x, 0, 0.5 * float(y @ y), lipschitz=L, converged=True)
    thresh = opts.lam * w
    x, it, obj = kernels.mfista(A, y, thresh, L, opts.max_iter, opts.tol)
    return _result(A, y, np.asarray(x), it, obj, lipschitz=L, converged=it < opts.max_iter)


def solve_lasso(y, A, opts: SolverOptions | None = None) -> RecoveryResult:
    """Unweighted LASSO; same iterates as Weighted-CSR with unit weights."""
    n = np.shape(A)[1]
    return solve_weighted_csr(y, A, np.ones(n), opts)


def solve_omp(y, A, k: int, rtol: float = 1e-12) -> RecoveryResult:
    """Orthogonal matching pursuit with ``k`` greedy selections.

    Ties in the correlation go to the lowest band index. Refits use a
    minimum-norm least-squares solve, so a rank-deficient selection is fine.
    Stops early once the residual is zero (relative to ``||y||``).
    """
    A = np.ascontiguousarray(A, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    m, n = A.shape
    if not 1 <= k <= m:
        raise ValueError(f"OMP sparsity budget must satisfy 1 <= k <= m={m}, got {k}")
    coef, selected, count = kernels.omp_loop(A, y, int(k), rtol)
    x = np.zeros(n)
    if count:
        x[np.asarray(selected)] = coef
    res = _result(A, y, x, count, 0.0, selected=np.asarray(selected).copy())
    res.objective = 0.5 * res.residual_norm**2
    return res


def solve_cosamp(y, A, k: int, max_iter: int = 50, tol: float = 1e-6) -> RecoveryResult:
    """CoSaMP: merge top-2k proxy with current support, refit, prune to k."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = A.shape
    if k < 1:
        raise ValueError("CoSaMP sparsity budget must be >= 1")
    x = np.zeros(n)
    r = y.copy()
    y_norm = np.linalg.norm(y)
    prev = y_norm
    it = 0
    if y_norm == 0.0:
        return _result(A, y, x, 0, 0.0)
    for it in range(1, max_iter + 1):
        proxy = np.abs(A.T @ r)
        # stable sort keeps the lowest index first among ties
        omega = np.argsort(-proxy, kind="stable")[: 2 * k]
        T = np.union1d(omega, np.flatnonzero(x))
        b = np.linalg.lstsq(A[:, T], y, rcond=None)[0]
        keep = np.argsort(-np.abs(b), kind="stable")[:k]
        x = np.zeros(n)
        x[T[keep]] = b[keep]
        r = y - A @ x
        cur = np.linalg.norm(r)
        if cur <= tol * y_norm or abs(prev - cur) <= tol * max(prev, 1e-300):
            break
        prev = cur
    res = _result(A, y, x, it, 0.0)
    res.objective = 0.5 * res.residual_norm**2
    return res


def default_threshold(x_hat, sigma: float) -> float:
    """``3 sigma`` when noisy, else ``1e-6 max|x_hat|``."""
    if sigma > 0:
        return 3.0 * sigma
    return 1e-6 * float(np.max(np.abs(x_hat))) if np.size(x_hat) else 0.0


def detect_support(x_hat, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError("threshold must be >= 0")
    return (np.abs(np.asarray(x_hat)) > tau).astype(np.int8)


def evaluate(x_hat, x_true, occupancy_true, tau: float) -> Metrics:
    """NMSE plus detection / false-alarm rates of the thresholded estimate.

    Undefined quantities (NMSE for ``x_true = 0``, a rate over an empty
    class) are reported as NaN.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    occ = np.asarray(occupancy_true).astype(bool)
    if x_hat.shape != x_true.shape or occ.shape != x_true.shape:
        raise ValueError("x_hat, x_true and occupancy_true must share one shape")
    denom = float(x_true @ x_true)
    nmse = float(np.sum((x_hat - x_true) ** 2) / denom) if denom > 0 else math.nan
    det = detect_support(x_hat, tau).astype(bool)
    n_occ = int(occ.sum())
    n_empty = occ.size - n_occ
    pd = float(np.sum(det & occ) / n_occ) if n_occ else math.nan
    pfa = float(np.sum(det & ~occ) / n_empty) if n_empty else math.nan
    return Metrics(nmse, pd, pfa)


SOLVERS = ("weighted_csr", "lasso", "omp", "cosamp")


def solve(name: str, y, A, profile: OccupancyProfile, opts: SolverOptions, k: int | None = None,
          epsilon: float = 0.1) -> RecoveryResult:
    """Dispatch to one of :data:`SOLVERS` by name.

    Greedy solvers default their sparsity budget to the profile's expected
    number of occupied bands, clipped to ``[1, m]``.
    """
    if name == "weighted_csr":
        return solve_weighted_csr(y, A, block_weights(profile, epsilon), opts)
    if name == "lasso":
        return solve_lasso(y, A, opts)
    m = np.shape(A)[0]
    if k is None:
        k = int(round(profile.expected_sparsity()))
    k = min(max(k, 1), m)
    if name == "omp":
        return solve_omp(y, A, k)
    if name == "cosamp":
        return solve_cosamp(y, A, k)
    raise ValueError(f"unknown solver {name!r}; expected one of {SOLVERS}")
