"""State-transition graphs, Laplacian spectra and spectral state features."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass

import numpy as np

from .dpp import _fix_signs, symmetric_eigensystem

ZERO_EIG_TOL = 1e-8


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionGraph:
    n_states: int
    edges: tuple  # sorted (i, j) pairs with i < j

    @property
    def adjacency(self):
        A = np.zeros((self.n_states, self.n_states), dtype=np.int64)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1)

    def components(self):
        """Connected components as sorted index lists, ordered by smallest member."""
        parent = list(range(self.n_states))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, j in self.edges:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        groups = {}
        for s in range(self.n_states):
            groups.setdefault(find(s), []).append(s)
        return sorted(groups.values(), key=lambda g: g[0])


@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: np.ndarray  # (D,) ascending
    eigenvectors: np.ndarray  # (|S|, D), columns orthonormal
    normalized: bool = False

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    @property
    def n_states(self):
        return self.eigenvectors.shape[0]

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.eigenvalues, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.eigenvectors, dtype="<f8").tobytes())
        h.update(b"n" if self.normalized else b"u")
        return h.hexdigest()


def build_graph(transitions, n_states):
    """Undirected graph with an edge wherever some transition links two distinct states."""
    edges = set()
    for tr in transitions:
        s, s2 = int(tr[0]), int(tr[-1])
        if not (0 <= s < n_states and 0 <= s2 < n_states):
            raise IndexError(f"transition ({s}, {s2}) outside {n_states} states")
        if s != s2:
            edges.add((min(s, s2), max(s, s2)))
    return TransitionGraph(n_states, tuple(sorted(edges)))


def laplacian(g, normalized=False):
    A = g.adjacency
    deg = A.sum(axis=1)
    L = np.diag(deg) - A  # integer arithmetic keeps row sums exactly zero
    if not normalized:
        return L.astype(float)
    if np.any(deg == 0):
        raise ValueError(f"isolated vertex {int(np.flatnonzero(deg == 0)[0])} under normalized Laplacian")
    dinv = 1.0 / np.sqrt(deg)
    return L * dinv[:, None] * dinv[None, :]


def spectrum(L, D, normalized=False):
    """The D smallest eigenpairs of a graph Laplacian."""
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if not 1 <= D <= n:
        raise ValueError(f"feature dimension {D} exceeds matrix size {n}")
    lam, vecs = symmetric_eigensystem(L)
    lam = np.where(np.abs(lam) < ZERO_EIG_TOL, 0.0, lam)
    return LaplacianSpectrum(lam[:D].copy(), np.ascontiguousarray(vecs[:, :D]), normalized)


def graph_spectrum(g, D, normalized=False):
    """Spectrum of a possibly disconnected graph, computed per component.

    Each component's eigenvectors are embedded with zeros elsewhere; pairs are
    merged by eigenvalue (ties broken by component order) and the D smallest
    kept, so every zero-eigenvalue vector is a component indicator.
    """
    comps = g.components()
    if len(comps) == 1:
        return spectrum(laplacian(g, normalized), D, normalized)
    if not 1 <= D <= g.n_states:
        raise ValueError(f"feature dimension {D} exceeds matrix size {g.n_states}")
    L = laplacian(g, normalized)
    pairs = []
    for ci, comp in enumerate(comps):
        sub = L[np.ix_(comp, comp)]
        lam, vecs = symmetric_eigensystem(sub)
        for k in range(len(comp)):
            v = np.zeros(g.n_states)
            v[comp] = vecs[:, k]
            val = 0.0 if abs(lam[k]) < ZERO_EIG_TOL else float(lam[k])
            pairs.append((val, ci, k, v))
    pairs.sort(key=lambda p: (p[0], p[1], p[2]))
    pairs = pairs[:D]
    lam = np.array([p[0] for p in pairs])
    vecs = np.stack([p[3] for p in pairs], axis=1)
    return LaplacianSpectrum(lam, vecs, normalized)


def state_features(spec):
    """Unit-norm rows ``b(s) = v(s)/||v(s)||`` for every state, shape (|S|, D)."""
    raw = spec.eigenvectors
    norms = np.linalg.norm(raw, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise ValueError(f"state {int(bad[0])} has a zero spectral feature")
    return raw / norms[:, None]


def state_feature(spec, s):
    v = spec.eigenvectors[s]
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError(f"state {s} has a zero spectral feature")
    return v / n


def fiedler(spec):
    """Eigenvector of the second-smallest eigenvalue; refuses disconnected graphs."""
    if spec.dim < 2:
        raise ValueError("spectrum has fewer than two eigenpairs")
    if spec.eigenvalues[1] <= ZERO_EIG_TOL:
        raise DisconnectedGraphError("graph is disconnected (repeated zero eigenvalue)")
    return spec.eigenvectors[:, 1].copy()


# Tabular eigenfunction learning: minimise G + P over a |S| x D table F.

def _spectral_weights(D):
    # sum_{l=1}^{D} sum_{i<=l} counts column i (0-based) D - i times
    return np.arange(D, 0, -1, dtype=float)


def _empirical(pairs, n_states):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    rho = np.bincount(pairs.ravel(), minlength=n_states).astype(float)
    rho /= rho.sum()
    return pairs, rho


def _pair_weights(pairs, weights):
    if weights is None:
        return np.full(pairs.shape[0], 1.0 / pairs.shape[0])
    return np.asarray(weights, dtype=float)


def compress_pairs(pairs):
    """Distinct (s, s') pairs and their sample frequencies (summing to 1)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    return uniq, counts / counts.sum()


def spectral_loss(F, pairs, rho, penalty_weight, weights=None):
    """Graph-drawing loss G plus the orthonormality penalty P for features F.

    ``weights`` optionally gives each pair's sample frequency (default uniform).
    """
    D = F.shape[1]
    w = _spectral_weights(D)
    diff = F[pairs[:, 0]] - F[pairs[:, 1]]
    G = 0.5 * float(_pair_weights(pairs, weights) @ np.sum(w * diff**2, axis=1))
    C = F.T @ (rho[:, None] * F)
    E = C - np.eye(D)
    # sum over l of ||E[:l,:l]||_F^2: entry (i,j) appears D - max(i,j) times
    idx = np.arange(D)
    mult = D - np.maximum.outer(idx, idx)
    P = penalty_weight * float(np.sum(mult * E**2))
    return G + P


def spectral_loss_grad(F, pairs, rho, penalty_weight, weights=None):
    D = F.shape[1]
    w = _spectral_weights(D)
    diff = F[pairs[:, 0]] - F[pairs[:, 1]]
    gd = diff * w * _pair_weights(pairs, weights)[:, None]
    grad = np.zeros_like(F)
    np.add.at(grad, pairs[:, 0], gd)
    np.add.at(grad, pairs[:, 1], -gd)
    C = F.T @ (rho[:, None] * F)
    E = C - np.eye(D)
    idx = np.arange(D)
    mult = D - np.maximum.outer(idx, idx)
    # d/dF sum mult*E^2 = 2 rho F (mult*E + (mult*E)^T)
    ME = mult * E
    grad += penalty_weight * 2.0 * (rho[:, None] * F) @ (ME + ME.T)
    return grad


def learn_spectrum_sgd(pairs, n_states, D, penalty_weight=1.0, steps=5000, step_size=0.05,
                       seed=0, batch_size=None, init=None):
    """Learn a |S| x D table of Laplacian eigenfunction estimates.

    ``pairs`` are sampled (s, s') transitions. With ``batch_size=None`` every
    step uses the whole sample (deterministic gradient descent with momentum);
    otherwise minibatches are drawn from a seeded generator. The state
    distribution of the penalty is the empirical endpoint distribution.
    Returns the raw feature table; rows are normalised by ``state_features``
    style post-processing in callers.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        raise ValueError("empty transition sample")
    pairs, rho = _empirical(pairs, n_states)
    rng = np.random.default_rng(seed)
    if init is None:
        F = rng.normal(scale=1.0, size=(n_states, D))
        F /= np.sqrt(max(np.sum(rho[:, None] * F**2, axis=0).max(), 1e-12))
    else:
        F = np.array(init, dtype=float)
    vel = np.zeros_like(F)
    # the full-sample loss only depends on how often each distinct pair occurs
    uniq, freq = compress_pairs(pairs)
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(steps):
            if batch_size is None:
                g = spectral_loss_grad(F, uniq, rho, penalty_weight, freq)
            else:
                g = spectral_loss_grad(F, pairs[rng.integers(0, pairs.shape[0], batch_size)], rho, penalty_weight)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"spectral loss diverged at step {step}")
            vel = 0.9 * vel - step_size * g
            F = F + vel
        loss = spectral_loss(F, uniq, rho, penalty_weight, freq)
    if not np.isfinite(loss):
        raise FloatingPointError("spectral loss diverged")
    return F


def learned_spectrum(F):
    """Wrap a learned feature table as a LaplacianSpectrum-like feature source.

    Columns are orthonormalised (QR, with the sign fix of the exact path) so the
    result can stand in for exact eigenvectors. Eigenvalues are Rayleigh-free
    placeholders (NaN) since the table alone does not determine them.
    """
    Q, _ = np.linalg.qr(F)
    Q = _fix_signs(Q)
    return LaplacianSpectrum(np.full(F.shape[1], np.nan), Q, False)


def format_graph(g):
    buf = io.StringIO()
    buf.write(f"{g.n_states} {len(g.edges)}\n")
    for i, j in g.edges:
        buf.write(f"{i} {j}\n")
    return buf.getvalue()


def parse_graph(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    n, m = (int(x) for x in lines[0].split())
    edges = [tuple(int(x) for x in ln.split()) for ln in lines[1:1 + m]]
    if len(edges) != m:
        raise ValueError("edge count mismatch")
    return build_graph(edges, n)


def format_spectrum(spec):
    """One eigenpair per line: eigenvalue followed by the eigenvector entries."""
    buf = io.StringIO()
    buf.write(f"{spec.n_states} {spec.dim} {'normalized' if spec.normalized else 'unnormalized'}\n")
    for k in range(spec.dim):
        vals = [spec.eigenvalues[k]] + list(spec.eigenvectors[:, k])
        buf.write(" ".join(repr(float(x)) for x in vals) + "\n")
    return buf.getvalue()


def parse_spectrum(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    n, D, kind = lines[0].split()
    n, D = int(n), int(D)
    rows = np.array([[float(x) for x in ln.split()] for ln in lines[1:1 + D]])
    if rows.shape != (D, n + 1):
        raise ValueError("malformed spectrum text")
    return LaplacianSpectrum(rows[:, 0].copy(), np.ascontiguousarray(rows[:, 1:].T), kind == "normalized")
