"""Landmarks, DPP coverage/consistency/diversity terms and the per-trajectory Q-values.

State features are passed as an (|S|, D) array of unit rows. Trajectory
features are unit vectors (the normalised sum of landmark features).
"""

from __future__ import annotations

import math

import numpy as np

from .dpp import (
    build_kernel,
    dpp_log_likelihood,
    expected_cardinality_from_features,
    greedy_map_batch,
    greedy_map_path,
)
from .policies import log_softmax, softmax

# d_j^2 below this counts as linearly dependent on the landmarks chosen so far
LANDMARK_MIN_GAIN = math.log(1e-10)
LOG_UNIFORM_ACTION = math.log(0.25)


def state_kernel(states, features):
    """Quality-one Gram kernel over every visited state, repeats included."""
    B = features[np.asarray(states, dtype=np.int64)].T
    return build_kernel(np.ones(B.shape[1]), B, normalized=False)


def first_visits(states):
    """Boolean mask of positions that are the first visit to their state (works on (..., T+1))."""
    states = np.asarray(states)
    eq = states[..., :, None] == states[..., None, :]
    return ~np.tril(eq, -1).any(axis=-1)


def landmark_positions(states, features, S):
    """Trajectory positions picked by greedy MAP on the visited-state kernel.

    Only first visits are candidates, so a revisited state can never be
    picked twice and the answer does not hinge on roundoff between copies.
    """
    if len(states) == 0:
        raise ValueError("empty trajectory")
    states = np.asarray(states, dtype=np.int64)
    B = features[states] * first_visits(states)[:, None]
    L = B @ B.T
    order, _ = greedy_map_path(L, min(S, L.shape[0]), stop_on_nonpositive_gain=True,
                               min_log_gain=LANDMARK_MIN_GAIN)
    return sorted(order)


def extract_landmarks(states, features, S):
    """Distinct landmark states of a trajectory, in order of first visit.

    Repeated visits are never selected twice; when fewer than S distinct
    directions exist every independent state is returned.
    """
    pos = landmark_positions(states, features, S)
    return [int(states[p]) for p in pos]


def batch_trajectory_terms(states, features, S):
    """Landmarks, coverage and landmark log-probability of an (N, T+1) array of trajectories.

    Returns (positions mask (N, T+1), f (N,), landmark log-prob (N,)). The
    landmark log-determinant comes from the Cholesky gains of greedy MAP.
    """
    states = np.asarray(states, dtype=np.int64)
    B = features[states]  # (N, T+1, D)
    Bf = B * first_visits(states)[..., None]
    L = Bf @ Bf.transpose(0, 2, 1)
    mask, num = greedy_map_batch(L, min(S, L.shape[1]), stop_on_nonpositive_gain=True,
                                 min_log_gain=LANDMARK_MIN_GAIN)
    G = B.transpose(0, 2, 1) @ B if B.shape[2] <= B.shape[1] else B @ B.transpose(0, 2, 1)
    lam = np.clip(np.linalg.eigvalsh(G), 0.0, None)
    f = np.sum(lam / (lam + 1.0), axis=1)
    llp = num - np.sum(np.log1p(lam), axis=1)
    return mask, f, llp


def trajectory_feature(landmarks, features):
    """Unit-normalised sum of landmark features."""
    if len(landmarks) == 0:
        raise ValueError("no landmarks")
    v = features[np.asarray(landmarks, dtype=np.int64)].sum(axis=0)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("landmark features cancel to zero")
    return v / n


def f_coverage(states, features):
    """Expected cardinality of the DPP over all T+1 visited states."""
    return expected_cardinality_from_features(features[np.asarray(states, dtype=np.int64)].T)


def g_consistency(traj_features):
    """Expected cardinality over the M trajectories of one (start, option) pair."""
    return expected_cardinality_from_features(np.asarray(traj_features, dtype=float).T)


def h_diversity(traj_features):
    """Expected cardinality over the union of all options' trajectories at one start."""
    return expected_cardinality_from_features(np.asarray(traj_features, dtype=float).T)


def _card_from_gram(G):
    lam = np.clip(np.linalg.eigvalsh(G), 0.0, None)
    return np.sum(lam / (lam + 1.0), axis=-1)


def _gram(X):
    # the smaller of X^T X and X X^T has the same nonzero spectrum
    n, D = X.shape[-2:]
    Xt = np.swapaxes(X, -1, -2)
    return Xt @ X if D <= n else X @ Xt


def batch_cardinality(traj_features):
    """Expected cardinality of each set in a (..., n, D) stack of feature rows."""
    return _card_from_gram(_gram(np.asarray(traj_features, dtype=float)))


def leave_one_out_cardinality(traj_features):
    """Expected cardinality of the set with each member removed in turn.

    Accepts (n, D) or a stacked (..., n, D); the result has shape (..., n).
    """
    X = np.asarray(traj_features, dtype=float)
    n, D = X.shape[-2:]
    if n == 1:
        return np.zeros(X.shape[:-1])
    if D <= n:
        G = np.swapaxes(X, -1, -2) @ X
        stack = G[..., None, :, :] - X[..., :, :, None] * X[..., :, None, :]
    else:
        G = X @ np.swapaxes(X, -1, -2)
        keep = ~np.eye(n, dtype=bool)
        idx = np.stack([np.flatnonzero(keep[i]) for i in range(n)])  # (n, n-1)
        stack = G[..., idx[:, :, None], idx[:, None, :]]
    return _card_from_gram(stack)


def landmark_log_prob(states, features, positions):
    """log P_DPP(G | tau) over the trajectory's state kernel."""
    return dpp_log_likelihood(state_kernel(states, features), positions)


def kl_to_uniform(logprobs):
    """Single-trajectory estimate ``sum_t log pi(a_t|s_t,c) - log(1/4)``."""
    lp = np.asarray(logprobs, dtype=float)
    return float(np.sum(lp) - lp.size * LOG_UNIFORM_ACTION)


def exact_kl_to_uniform(maze_table, probs, s0, T):
    """Exact trajectory KL to the random walk for a tabular policy by forward recursion.

    ``probs`` is (|S|, 4) action probabilities for one option.
    """
    n = probs.shape[0]
    dist = np.zeros(n)
    dist[s0] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        per_state = np.sum(np.where(probs > 0, probs * (np.log(probs) - LOG_UNIFORM_ACTION), 0.0), axis=1)
    total = 0.0
    for _ in range(T):
        total += float(dist @ per_state)
        nxt = np.zeros(n)
        for a in range(probs.shape[1]):
            np.add.at(nxt, maze_table[:, a], dist * probs[:, a])
        dist = nxt
    return total


def entropy_prior(prior_logits, start_dist):
    """``H(C|S) = E_{s0}[-sum_c P(c|s0) log P(c|s0)]`` for tabular prior logits."""
    start_dist = np.asarray(start_dist, dtype=float)
    lp = log_softmax(prior_logits)
    p = np.exp(lp)
    ent = -np.sum(np.where(p > 0, p * np.where(p > 0, lp, 0.0), 0.0), axis=1)
    return float(start_dist @ ent)


def q_policy_m(decoder_logprob, landmark_logprob, logprobs, f, g, h, M, beta, alpha1, alpha2, alpha3):
    """Q-value of the m-th of M trajectories for one (start, option) pair."""
    weight = math.exp(landmark_logprob) if landmark_logprob > -math.inf else 0.0
    return (weight * decoder_logprob / M
            - beta / M * float(np.sum(logprobs))
            + alpha1 / M * f
            - alpha2 * g
            + alpha3 * h)


def q_prior(prior_logits_s0, c, q_policy_values):
    """``-log P(c|s0) + sum_m Q_m``."""
    return float(-log_softmax(prior_logits_s0)[c] + np.sum(q_policy_values))


def prior_gradient(prior_logits_s0, q_values):
    """Exact expectation over options of ``grad log P(c|s0) * Q(c)`` w.r.t. the logits.

    Rows of a (G, C) stack are handled independently.
    """
    p = softmax(prior_logits_s0)
    q = np.asarray(q_values, dtype=float)
    return p * (q - np.sum(p * q, axis=-1, keepdims=True))
