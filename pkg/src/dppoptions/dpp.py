"""Determinantal point process kernels, likelihoods and greedy MAP inference."""

from __future__ import annotations

import io
import math

import numpy as np

SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-8
UNIT_NORM_TOL = 1e-9


def _as_square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def check_kernel(L):
    """Validate a DPP kernel: square, symmetric and positive semidefinite."""
    L = _as_square(L, "kernel")
    if L.size and np.max(np.abs(L - L.T)) > SYMMETRY_TOL:
        raise ValueError("kernel is not symmetric")
    if L.size:
        lam = np.linalg.eigvalsh(L)
        scale = max(1.0, float(lam[-1]))
        if lam[0] < -PSD_TOL * scale:
            raise ValueError(f"kernel is not PSD (smallest eigenvalue {lam[0]:.3e})")
    return L


def _fix_signs(vecs):
    # largest-magnitude component positive; first index wins near-ties
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        mag = np.abs(col)
        idx = int(np.flatnonzero(mag >= mag.max() - 1e-9)[0])
        if col[idx] < 0:
            vecs[:, k] = -col
    return vecs


def jacobi_eigh(M, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns unsorted eigenvalues and the accumulated rotation matrix whose
    columns are the eigenvectors.
    """
    A = _as_square(M).copy()
    n = A.shape[0]
    V = np.eye(n)
    if n < 2:
        return np.diag(A).copy(), V
    scale = max(np.abs(A).max(), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    return np.diag(A).copy(), V


def symmetric_eigensystem(M, method="lapack"):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Eigenvector signs are fixed so the largest-magnitude component of each
    column is positive. ``method="jacobi"`` uses the pure cyclic Jacobi solver
    instead of LAPACK.
    """
    M = _as_square(M)
    if M.size and np.max(np.abs(M - M.T)) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric")
    M = 0.5 * (M + M.T)
    if method == "lapack":
        lam, vecs = np.linalg.eigh(M)
    elif method == "jacobi":
        lam, vecs = jacobi_eigh(M)
        order = np.argsort(lam, kind="stable")
        lam, vecs = lam[order], vecs[:, order]
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    return lam, _fix_signs(vecs)


def build_kernel(q, B, normalized=True):
    """Gram kernel ``Diag(q) B^T B Diag(q)`` from qualities and feature columns."""
    q = np.asarray(q, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise ValueError("feature matrix must be 2-D (D x N)")
    if q.ndim != 1 or q.shape[0] != B.shape[1]:
        raise ValueError(f"quality length {q.shape} does not match {B.shape[1]} feature columns")
    if np.any(q < 0):
        raise ValueError("qualities must be nonnegative")
    if normalized and B.shape[1]:
        norms = np.linalg.norm(B, axis=0)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
        if bad.size:
            raise ValueError(f"feature column {int(bad[0])} is not unit norm (norm {norms[bad[0]]:.6g})")
    Bq = B * q
    L = Bq.T @ Bq
    return 0.5 * (L + L.T)


def _check_subset(W, n):
    W = [int(i) for i in W]
    if any(b <= a for a, b in zip(W, W[1:])):
        raise ValueError("subset indices must be strictly increasing")
    if W and (W[0] < 0 or W[-1] >= n):
        raise IndexError(f"subset index out of range for kernel of size {n}")
    return W


def log_det_psd(A):
    """log det of a PSD matrix; -inf when singular to machine precision."""
    n = A.shape[0]
    if n == 0:
        return 0.0
    lam = np.linalg.eigvalsh(0.5 * (A + A.T))
    if lam[0] <= n * np.finfo(float).eps * max(float(lam[-1]), 1.0):
        return -math.inf
    return float(np.sum(np.log(lam)))


def dpp_log_likelihood(L, W):
    """``log det(L_W) - log det(L + I)``; -inf when ``L_W`` is singular."""
    L = _as_square(L, "kernel")
    W = _check_subset(W, L.shape[0])
    num = log_det_psd(L[np.ix_(W, W)])
    if num == -math.inf:
        return -math.inf
    _, den = np.linalg.slogdet(L + np.eye(L.shape[0]))
    return num - float(den)


def expected_cardinality(L):
    """Expected size of a DPP sample, ``sum lam/(lam+1)`` over kernel eigenvalues."""
    L = _as_square(L, "kernel")
    if L.shape[0] == 0:
        return 0.0
    lam = np.linalg.eigvalsh(0.5 * (L + L.T))
    scale = max(1.0, float(lam[-1]))
    if lam[0] < -PSD_TOL * scale:
        raise ValueError(f"kernel is not PSD (smallest eigenvalue {lam[0]:.3e})")
    lam = np.clip(lam, 0.0, None)
    return float(np.sum(lam / (lam + 1.0)))


def expected_cardinality_from_features(B, q=None):
    """Same as ``expected_cardinality(build_kernel(q, B))`` without forming N x N.

    The nonzero spectrum of ``B^T B`` equals that of ``B B^T``, so the smaller
    of the two Gram matrices is decomposed.
    """
    B = np.asarray(B, dtype=float)
    if B.shape[1] == 0:
        return 0.0
    if q is not None:
        B = B * np.asarray(q, dtype=float)
    G = B @ B.T if B.shape[0] <= B.shape[1] else B.T @ B
    lam = np.clip(np.linalg.eigvalsh(G), 0.0, None)
    return float(np.sum(lam / (lam + 1.0)))


def greedy_map_path(L, max_size, stop_on_nonpositive_gain=False, min_log_gain=0.0):
    """Fast greedy MAP inference with incremental Cholesky updates.

    Returns ``(order, gains)``: items in selection order and the log marginal
    gain ``log d_j^2`` each one contributed. The first item is always taken.
    Afterwards selection stops when ``max_size`` items are chosen or the best
    gain drops below ``min_log_gain`` (at or below it when
    ``stop_on_nonpositive_gain`` is set). Equal gains go to the lowest index.
    """
    L = _as_square(L, "kernel")
    n = L.shape[0]
    if not 1 <= max_size <= n:
        raise ValueError(f"max_size must be in [1, {n}], got {max_size}")
    cis = np.zeros((max_size, n))
    d2 = np.diag(L).astype(float).copy()
    available = np.ones(n, dtype=bool)
    order, gains = [], []
    with np.errstate(divide="ignore", invalid="ignore"):
        while len(order) < max_size:
            if not available.any():
                break
            logs = np.log(d2)
            logs[~(d2 > 0)] = -np.inf
            logs[~available] = np.nan
            top = np.nanmax(logs)
            if np.isfinite(top):
                # roundoff-level differences count as ties
                j = int(np.argmax(logs >= top - 1e-12))
            else:
                j = int(np.argmax(available))
            gain = float(logs[j])
            if order:
                if gain < min_log_gain or (stop_on_nonpositive_gain and gain <= min_log_gain):
                    break
            elif gain == -math.inf:
                break
            order.append(j)
            gains.append(gain)
            available[j] = False
            k = len(order) - 1
            if k + 1 >= max_size:
                break
            dj = math.sqrt(d2[j])
            e = (L[j, :] - cis[:k, j] @ cis[:k, :]) / dj
            cis[k, :] = e
            d2 = d2 - e * e
            d2[~available] = 0.0
    return order, gains


def greedy_map_batch(L, max_size, stop_on_nonpositive_gain=False, min_log_gain=0.0):
    """``greedy_map_path`` run in lock-step over a stack of kernels (B, n, n).

    Returns a (B, n) boolean selection mask and the (B,) sum of log gains,
    which is ``log det`` of each selected submatrix.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 3 or L.shape[1] != L.shape[2]:
        raise ValueError(f"expected a (B, n, n) kernel stack, got {L.shape}")
    nb, n, _ = L.shape
    if not 1 <= max_size <= n:
        raise ValueError(f"max_size must be in [1, {n}], got {max_size}")
    rows = np.arange(nb)
    cis = np.zeros((nb, max_size, n))
    d2 = np.diagonal(L, axis1=1, axis2=2).copy()
    available = np.ones((nb, n), dtype=bool)
    active = np.ones(nb, dtype=bool)
    logdet = np.zeros(nb)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(max_size):
            logs = np.log(d2)
            logs[~(d2 > 0)] = -np.inf
            logs[~available] = -np.inf
            top = logs.max(axis=1)
            j = np.argmax(logs >= (top - 1e-12)[:, None], axis=1)
            gain = logs[rows, j]
            if k == 0:
                ok = np.isfinite(gain)
            elif stop_on_nonpositive_gain:
                ok = gain > min_log_gain
            else:
                ok = gain >= min_log_gain
            active &= ok
            if not active.any():
                break
            a = np.flatnonzero(active)
            ja = j[a]
            available[a, ja] = False
            logdet[a] += gain[a]
            if k + 1 >= max_size:
                break
            dj = np.sqrt(d2[a, ja])
            e = (L[a, ja, :] - np.einsum("bk,bkn->bn", cis[a, :k, ja], cis[a, :k, :])) / dj[:, None]
            cis[a, k, :] = e
            d2[a] = d2[a] - e * e
            d2[~available] = 0.0
    logdet[~(~available).any(axis=1)] = -math.inf
    return ~available, logdet


def greedy_map(L, max_size, stop_on_nonpositive_gain=False, min_log_gain=0.0):
    """Greedy MAP subset as a sorted index list. See ``greedy_map_path``."""
    order, _ = greedy_map_path(L, max_size, stop_on_nonpositive_gain, min_log_gain)
    return sorted(order)


def format_kernel(L):
    """Row-major text: first line N, then one whitespace-separated row per line."""
    L = _as_square(L, "kernel")
    buf = io.StringIO()
    buf.write(f"{L.shape[0]}\n")
    for row in L:
        buf.write(" ".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def parse_kernel(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    n = int(lines[0])
    rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError("malformed kernel text")
    return np.array(rows, dtype=float).reshape(n, n)
