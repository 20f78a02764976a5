"""Evaluation metrics for a trained option set: coverage, diversity and final-state spread."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import objectives as obj
from .gridworld import TrajectoryRecord, rollout_batch, transition_table


@dataclass
class MetricsReport:
    coverage: float  # mean single-trajectory coverage over all options
    diversity: float  # expected cardinality over the union of trajectories
    mean_distance: float  # mean sqrt(x^2 + y^2) of final states relative to the start
    std_x: float
    std_y: float
    seed: int
    config_hash: str

    def __post_init__(self):
        if self.mean_distance < 0 or self.std_x < 0 or self.std_y < 0:
            raise ValueError("distances and standard deviations must be nonnegative")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def trajectory_features(states, features, S):
    """Unit trajectory features and landmark masks for an (N, T+1) state array."""
    states = np.asarray(states, dtype=np.int64)
    mask, f, _ = obj.batch_trajectory_terms(states, features, S)
    summed = np.einsum("nt,ntd->nd", mask.astype(float), features[states])
    return summed / np.linalg.norm(summed, axis=1, keepdims=True), mask, f


def final_offsets(maze, states, start):
    """(N, 2) final-state (x, y) offsets from the start cell, in cells."""
    x0, y0 = maze.xy(start)
    return np.array([maze.xy(int(s[-1])) for s in states], dtype=float).reshape(-1, 2) - (x0, y0)


def compute_metrics(maze, states, features, S, seed=0, config_hash=""):
    """Metrics over an (N, T+1) array of state trajectories that all begin at the same start."""
    states = np.asarray(states, dtype=np.int64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("need at least one trajectory")
    tf, _, f = trajectory_features(states, features, min(S, states.shape[1]))
    xy = final_offsets(maze, states, int(states[0, 0]))
    return MetricsReport(
        coverage=float(np.mean(f)),
        diversity=obj.h_diversity(tf),
        mean_distance=float(np.mean(np.hypot(xy[:, 0], xy[:, 1]))),
        std_x=float(np.std(xy[:, 0])),
        std_y=float(np.std(xy[:, 1])),
        seed=int(seed),
        config_hash=config_hash,
    )


def rollout_options(maze, policies, per_option, T, rng, start=None):
    """``per_option`` fresh rollouts of every option from one start state, as records."""
    if policies.n_states != maze.n_states:
        raise ValueError(f"checkpoint has {policies.n_states} states but the maze has {maze.n_states}")
    if start is None:
        start = (maze.start_states or (0,))[0]
    C = policies.n_options
    opts = np.repeat(np.arange(C), per_option)
    states, actions, logp = rollout_batch(transition_table(maze), np.full(opts.size, start),
                                          policies.action_probs, opts, T, rng)
    return [TrajectoryRecord(int(c), st.tolist(), ac.tolist(), lp.tolist())
            for c, st, ac, lp in zip(opts, states, actions, logp)]


def evaluate(maze, policies, config, features, per_option=10, seed=0):
    """Fresh-rollout metrics of a trained option set."""
    rng = np.random.default_rng(seed)
    records = rollout_options(maze, policies, per_option, config.horizon, rng)
    states = np.array([r.states for r in records], dtype=np.int64)
    report = compute_metrics(maze, states, features, config.landmarks, seed, config.digest())
    return report, records


def fiedler_span(states, fiedler_vec):
    """Mean over trajectories of max - min Fiedler value along each trajectory."""
    v = np.asarray(fiedler_vec)[np.asarray(states, dtype=np.int64)]
    return float(np.mean(v.max(axis=-1) - v.min(axis=-1)))


def summarize(reports):
    """Mean and population std of each numeric metric over several reports."""
    out = {}
    for key in ("coverage", "diversity", "mean_distance", "std_x", "std_y"):
        vals = np.array([getattr(r, key) for r in reports], dtype=float)
        out[key] = (float(vals.mean()), float(vals.std()) if len(vals) > 1 else 0.0)
    return out


def is_finite_report(r):
    return all(math.isfinite(getattr(r, k)) for k in ("coverage", "diversity", "mean_distance", "std_x", "std_y"))
