"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Setting ``WCSR_DISABLE_NUMBA=1``
(or running without numba installed) selects the numpy implementations.
Both backends follow the same arithmetic recipe, so results agree to
floating-point rounding; within one backend they are bit-reproducible.
"""

import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

USE_NUMBA = njit is not None and os.environ.get("WCSR_DISABLE_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def soft_threshold_np(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


def row_matvec_np(A, x):
    # row-wise reduction: each entry depends only on its own row, so a
    # sub-block of rows yields the same bits as the full product
    return (A * x).sum(axis=1)


def power_iteration_np(A, n_iter):
    n = A.shape[1]
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(n_iter):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam = float(v @ w)
        v = w / nw
    return lam


def _objective_np(r, x, thresh):
    return 0.5 * float(r @ r) + float(np.abs(x) @ thresh)


def mfista_np(A, y, thresh, L, max_iter, tol):
    """Monotone FISTA for 0.5||y - Ax||^2 + sum_i thresh_i |x_i|.

    Returns ``(x, iterations, objective)``.
    """
    n = A.shape[1]
    x = np.zeros(n)
    z = np.zeros(n)
    u_prev = np.zeros(n)
    Ax = np.zeros(A.shape[0])
    Az = np.zeros(A.shape[0])
    f_x = _objective_np(-y, x, thresh)
    t = 1.0
    step_thresh = thresh / L
    it = 0
    for it in range(1, max_iter + 1):
        grad = A.T @ (Az - y)
        u = soft_threshold_np(z - grad / L, step_thresh)
        Au = A @ u
        f_u = _objective_np(Au - y, u, thresh)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if f_u <= f_x:
            x_new, Ax_new, f_new = u, Au, f_u
        else:
            x_new, Ax_new, f_new = x, Ax, f_x
        c1 = t / t_new
        c2 = (t - 1.0) / t_new
        z = x_new + c1 * (u - x_new) + c2 * (x_new - x)
        Az = Ax_new + c1 * (Au - Ax_new) + c2 * (Ax_new - Ax)
        diff = np.linalg.norm(u - u_prev)
        nrm = np.linalg.norm(u)
        x, Ax, f_x, t = x_new, Ax_new, f_new, t_new
        u_prev = u
        if diff <= tol * nrm or (diff == 0.0 and nrm == 0.0):
            break
    return x, it, f_x


def omp_np(A, y, k, rtol):
    """Greedy OMP loop. Returns ``(coef, selected, n_selected)``.

    Selection uses column-normalised correlations; all-zero columns never win.
    """
    m, n = A.shape
    norms = np.sqrt((A * A).sum(axis=0))
    inv = np.where(norms > 0.0, 1.0 / np.where(norms > 0.0, norms, 1.0), 0.0)
    r = y.copy()
    y_norm = np.linalg.norm(y)
    selected = np.full(k, -1, dtype=np.int64)
    used = np.zeros(n, dtype=np.bool_)
    coef = np.zeros(0)
    count = 0
    for _ in range(k):
        if np.linalg.norm(r) <= rtol * y_norm or y_norm == 0.0:
            break
        corr = np.abs(A.T @ r) * inv
        corr[used] = -1.0
        j = int(np.argmax(corr))
        selected[count] = j
        used[j] = True
        count += 1
        sub = A[:, selected[:count]]
        coef = np.linalg.lstsq(sub, y, rcond=None)[0]
        r = y - sub @ coef
    return coef, selected[:count], count


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if njit is not None:

    @njit(cache=True, nogil=True)
    def soft_threshold_nb(v, thresh):
        out = np.empty_like(v)
        for i in range(v.shape[0]):
            a = abs(v[i]) - thresh[i]
            if a > 0.0:
                out[i] = a if v[i] > 0.0 else -a
            else:
                out[i] = 0.0
        return out

    @njit(cache=True, nogil=True)
    def row_matvec_nb(A, x):
        m, n = A.shape
        out = np.zeros(m)
        for i in range(m):
            s = 0.0
            for j in range(n):
                s += A[i, j] * x[j]
            out[i] = s
        return out

    @njit(cache=True, nogil=True)
    def _matvec(A, x, out):
        m, n = A.shape
        for i in range(m):
            s = 0.0
            for j in range(n):
                s += A[i, j] * x[j]
            out[i] = s

    @njit(cache=True, nogil=True)
    def _rmatvec(A, r, out):
        m, n = A.shape
        for j in range(n):
            out[j] = 0.0
        for i in range(m):
            ri = r[i]
            for j in range(n):
                out[j] += A[i, j] * ri

    @njit(cache=True, nogil=True)
    def power_iteration_nb(A, n_iter):
        m, n = A.shape
        v = np.ones(n) / np.sqrt(n)
        Av = np.empty(m)
        w = np.empty(n)
        lam = 0.0
        for _ in range(n_iter):
            _matvec(A, v, Av)
            _rmatvec(A, Av, w)
            nw = np.sqrt(np.sum(w * w))
            if nw == 0.0:
                return 0.0
            lam = np.sum(v * w)
            v = w / nw
        return lam

    @njit(cache=True, nogil=True)
    def mfista_nb(A, y, thresh, L, max_iter, tol):
        m, n = A.shape
        x = np.zeros(n)
        z = np.zeros(n)
        u = np.zeros(n)
        u_prev = np.zeros(n)
        Ax = np.zeros(m)
        Az = np.zeros(m)
        Au = np.zeros(m)
        grad = np.zeros(n)
        r = np.empty(m)
        f_x = 0.5 * np.sum(y * y)
        t = 1.0
        it = 0
        for it in range(1, max_iter + 1):
            for i in range(m):
                r[i] = Az[i] - y[i]
            _rmatvec(A, r, grad)
            for j in range(n):
                v = z[j] - grad[j] / L
                a = abs(v) - thresh[j] / L
                if a > 0.0:
                    u[j] = a if v > 0.0 else -a
                else:
                    u[j] = 0.0
            _matvec(A, u, Au)
            f_u = 0.0
            for i in range(m):
                d = Au[i] - y[i]
                f_u += d * d
            f_u *= 0.5
            for j in range(n):
                f_u += thresh[j] * abs(u[j])
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            c1 = t / t_new
            c2 = (t - 1.0) / t_new
            take_u = f_u <= f_x
            diff = 0.0
            nrm = 0.0
            for j in range(n):
                xn = u[j] if take_u else x[j]
                z[j] = xn + c1 * (u[j] - xn) + c2 * (xn - x[j])
                x[j] = xn
                d = u[j] - u_prev[j]
                diff += d * d
                nrm += u[j] * u[j]
                u_prev[j] = u[j]
            for i in range(m):
                axn = Au[i] if take_u else Ax[i]
                Az[i] = axn + c1 * (Au[i] - axn) + c2 * (axn - Ax[i])
                Ax[i] = axn
            if take_u:
                f_x = f_u
            t = t_new
            diff = np.sqrt(diff)
            nrm = np.sqrt(nrm)
            if diff <= tol * nrm or (diff == 0.0 and nrm == 0.0):
                break
        return x, it, f_x

    @njit(cache=True, nogil=True)
    def omp_nb(A, y, k, rtol):
        m, n = A.shape
        r = y.copy()
        y_norm = np.sqrt(np.sum(y * y))
        selected = np.full(k, -1, dtype=np.int64)
        used = np.zeros(n, dtype=np.bool_)
        coef = np.zeros(0)
        corr = np.empty(n)
        inv = np.zeros(n)
        for j in range(n):
            s = 0.0
            for i in range(m):
                s += A[i, j] * A[i, j]
            if s > 0.0:
                inv[j] = 1.0 / np.sqrt(s)
        count = 0
        for _ in range(k):
            if y_norm == 0.0 or np.sqrt(np.sum(r * r)) <= rtol * y_norm:
                break
            _rmatvec(A, r, corr)
            best = -1
            best_val = -1.0
            for j in range(n):
                if used[j]:
                    continue
                c = abs(corr[j]) * inv[j]
                if c > best_val:
                    best_val = c
                    best = j
            selected[count] = best
            used[best] = True
            count += 1
            sub = np.empty((m, count))
            for c_i in range(count):
                sub[:, c_i] = A[:, selected[c_i]]
            coef = np.linalg.lstsq(sub, y)[0]
            r = y - sub @ coef
        return coef, selected[:count], count


if USE_NUMBA:
    soft_threshold = soft_threshold_nb
    row_matvec = row_matvec_nb
    power_iteration = power_iteration_nb
    mfista = mfista_nb
    omp_loop = omp_nb
else:
    soft_threshold = soft_threshold_np
    row_matvec = row_matvec_np
    power_iteration = power_iteration_np
    mfista = mfista_np
    omp_loop = omp_np

BACKEND = "numba" if USE_NUMBA else "numpy"
