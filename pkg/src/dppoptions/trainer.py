"""Option discovery training loop: batch collection, objective evaluation and updates."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import objectives as obj
from .gridworld import N_ACTIONS, build_maze, parse_maze, rollout_batch, transition_table, all_transitions
from .policies import Decoder, OptionPolicySet, log_softmax, softmax
from .spectral import (
    build_graph,
    graph_spectrum,
    learn_spectrum_sgd,
    learned_spectrum,
    state_features,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
ABLATIONS = ("ib", "ib+l1", "full")


@dataclass
class OptionConfig:
    n_options: int = 10
    horizon: int = 50
    trajectories_per_pair: int = 5
    trajectories_per_iteration: int = 100
    landmarks: int = 10
    feature_dim: int = 30
    beta: float = 1e-3
    alpha1: float = 1e-4
    alpha2: float = 1e-2
    alpha3: float = 1e-2
    lr_policy: float = 1.0
    lr_prior: float = 1.0
    lr_decoder: float = 1.0
    decoder_steps: int = 5
    iterations: int = 200
    seed: int = 0
    ablation: str = "full"
    maze: str = "four_room"
    maze_size: int = 11
    corridor_length: int = 31
    corridor_chambers: int = 4
    chamber_size: int = 3
    maze_file: str = ""
    spectrum: str = "exact"
    spectrum_period: int = 0
    normalized_laplacian: bool = False
    # "loo": leave-one-out baselines; "mean": per-(s0, c) mean of Q
    baseline: str = "loo"
    # downstream selector
    selector_iterations: int = 300
    selector_episodes: int = 20
    selector_decisions: int = 10
    selector_option_steps: int = 10
    selector_lr: float = 1.0
    step_penalty: float = 0.01
    goal: tuple = ()

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        for name in ("beta", "alpha1", "alpha2", "alpha3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.trajectories_per_pair < 1:
            raise ValueError("trajectories_per_pair must be at least 1")
        if self.n_options < 1:
            raise ValueError("need at least one option")
        if self.landmarks > self.horizon + 1:
            raise ValueError("landmark count cannot exceed horizon + 1")
        if self.baseline not in ("loo", "mean"):
            raise ValueError("baseline must be 'loo' or 'mean'")
        if self.spectrum not in ("exact", "learned"):
            raise ValueError("spectrum must be 'exact' or 'learned'")
        self.goal = tuple(int(v) for v in self.goal)

    @property
    def weights(self):
        """(beta, alpha1, alpha2, alpha3) after applying the ablation."""
        if self.ablation == "ib":
            return self.beta, 0.0, 0.0, 0.0
        if self.ablation == "ib+l1":
            return self.beta, self.alpha1, 0.0, 0.0
        return self.beta, self.alpha1, self.alpha2, self.alpha3

    @property
    def groups_per_iteration(self):
        return max(1, self.trajectories_per_iteration // (self.n_options * self.trajectories_per_pair))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["goal"] = list(self.goal)
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path, **overrides):
    """Read a flat ``key: value`` YAML file into an OptionConfig."""
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must be a key/value mapping")
    known = {f.name for f in dataclasses.fields(OptionConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return OptionConfig(**data)


def make_maze(config):
    if config.maze_file:
        with open(config.maze_file) as fh:
            return parse_maze(fh.read())
    if config.maze == "four_room":
        return build_maze("four_room", size=config.maze_size)
    if config.maze == "corridor":
        return build_maze("corridor", length=config.corridor_length,
                          chambers=config.corridor_chambers, chamber_size=config.chamber_size)
    raise ValueError(f"unknown maze {config.maze!r}")


def maze_spectrum(maze, config):
    g = build_graph(all_transitions(maze), maze.n_states)
    D = min(config.feature_dim, maze.n_states)
    return graph_spectrum(g, D, config.normalized_laplacian)


def random_walk_pairs(maze, n_steps, rng):
    table = transition_table(maze)
    starts = maze.start_states or (0,)
    s = starts[int(rng.integers(len(starts)))]
    pairs = []
    for a in rng.integers(0, N_ACTIONS, size=n_steps):
        s2 = int(table[s, a])
        pairs.append((s, s2))
        s = s2
    return pairs


@dataclass
class Batch:
    starts: np.ndarray  # (G,)
    states: np.ndarray  # (G, C, M, T+1)
    actions: np.ndarray  # (G, C, M, T)
    logp: np.ndarray  # (G, C, M, T)

    @property
    def shape(self):
        return self.actions.shape[:3]


@dataclass
class BatchTerms:
    landmarks: list  # [g][c][m] -> landmark states
    traj_features: np.ndarray  # (G, C, M, D)
    f: np.ndarray  # (G, C, M)
    landmark_logprob: np.ndarray  # (G, C, M)
    decoder_logprob: np.ndarray  # (G, C, M)
    kl: np.ndarray  # (G, C, M)
    g: np.ndarray  # (G, C)
    h: np.ndarray  # (G,)
    g_loo: np.ndarray  # (G, C, M)
    h_loo: np.ndarray  # (G, C, M)
    q: np.ndarray  # (G, C, M)
    q_prior: np.ndarray  # (G, C)
    advantage: np.ndarray  # (G, C, M)


@dataclass
class ObjectiveReport:
    iteration: int
    ib: float
    l1: float
    l2: float
    l3: float
    total: float
    entropy: float
    kl: float
    decoder_weight: float = 0.0
    terms: BatchTerms | None = field(default=None, repr=False)

    CSV_FIELDS = ("iteration", "ib", "l1", "l2", "l3", "total", "entropy", "kl")

    def row(self):
        return [self.iteration] + [repr(float(getattr(self, k))) for k in self.CSV_FIELDS[1:]]


def write_reports_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ObjectiveReport.CSV_FIELDS)
        for r in reports:
            w.writerow(r.row())


def collect_batch(table, policies, config, rng, start_states):
    """Roll out M trajectories of every option from each sampled start state."""
    G = config.groups_per_iteration
    C, M, T = config.n_options, config.trajectories_per_pair, config.horizon
    starts = np.asarray(start_states, dtype=np.int64)[rng.integers(0, len(start_states), size=G)]
    s0 = np.repeat(starts, C * M)
    opts = np.tile(np.repeat(np.arange(C), M), G)
    states, actions, logp = rollout_batch(table, s0, policies.action_probs, opts, T, rng)
    return Batch(starts,
                 states.reshape(G, C, M, T + 1),
                 actions.reshape(G, C, M, T),
                 logp.reshape(G, C, M, T))


def evaluate_batch(batch, features, policies, config):
    """All objective terms, Q-values and leave-one-out advantages of a batch."""
    G, C, M = batch.shape
    beta, a1, a2, a3 = config.weights
    D = features.shape[1]
    S = config.landmarks
    T1 = batch.states.shape[-1]
    flat_states = batch.states.reshape(-1, T1)
    mask, f, llp = obj.batch_trajectory_terms(flat_states, features, S)
    counts = mask.sum(axis=1)
    summed = np.einsum("nt,ntd->nd", mask.astype(float), features[flat_states])
    norms = np.linalg.norm(summed, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ValueError("landmark features cancel to zero")
    tf = (summed / norms).reshape(G, C, M, D)
    bags = (summed / counts[:, None]).reshape(G, C, M, D)
    f = f.reshape(G, C, M)
    llp = llp.reshape(G, C, M)
    landmarks = [[[flat_states[(gi * C + c) * M + m][mask[(gi * C + c) * M + m]].tolist()
                   for m in range(M)] for c in range(C)] for gi in range(G)]
    starts_rep = np.repeat(batch.starts, C * M)
    opts = np.tile(np.repeat(np.arange(C), M), G)
    dec = policies.decoder.logprob(starts_rep, bags.reshape(-1, D), opts).reshape(G, C, M)
    kl = batch.logp.sum(axis=-1) - batch.logp.shape[-1] * obj.LOG_UNIFORM_ACTION

    g = obj.batch_cardinality(tf)
    g_loo = obj.leave_one_out_cardinality(tf)
    flat = tf.reshape(G, C * M, D)
    h = obj.batch_cardinality(flat)
    h_loo = obj.leave_one_out_cardinality(flat).reshape(G, C, M)

    weight = np.where(np.isfinite(llp), np.exp(llp), 0.0)
    per_traj = (weight * dec - beta * batch.logp.sum(axis=-1) + a1 * f) / M
    q = per_traj - a2 * g[:, :, None] + a3 * h[:, None, None]
    q_prior = -log_softmax(policies.prior[batch.starts]) + q.sum(axis=-1)

    # leave-one-out baselines never depend on the trajectory they are subtracted from
    if M > 1:
        loo_mean = (per_traj.sum(axis=-1, keepdims=True) - per_traj) / (M - 1)
    else:
        loo_mean = np.zeros_like(per_traj)
    adv = (per_traj - loo_mean) - a2 * (g[:, :, None] - g_loo) + a3 * (h[:, None, None] - h_loo)
    if config.baseline == "mean":
        # cancels g and h entirely, kept for comparison
        adv = q - q.mean(axis=-1, keepdims=True)
    return BatchTerms(landmarks, tf, f, llp, dec, kl, g, h, g_loo, h_loo, q, q_prior, adv), bags


def policy_gradient(batch, weights, coeff, policy_logits):
    """``sum coeff * grad log pi(a_t|s_t,c)`` over a batch, for tabular logits (C, |S|, 4).

    ``coeff`` has shape (G, C, M) and multiplies every step of the trajectory.
    """
    G, C, M = batch.shape
    T = batch.actions.shape[-1]
    c_idx = np.broadcast_to(np.arange(C)[None, :, None, None], (G, C, M, T)).ravel()
    s_idx = batch.states[..., :-1].ravel()
    a_idx = batch.actions.ravel()
    w = np.broadcast_to((weights[:, :, None] * coeff)[..., None], (G, C, M, T)).ravel()
    probs = softmax(policy_logits[c_idx, s_idx])
    score = -probs
    score[np.arange(a_idx.size), a_idx] += 1.0
    grad = np.zeros_like(policy_logits)
    np.add.at(grad, (c_idx, s_idx), w[:, None] * score)
    return grad


def gradient_step(batch, policies, config, features, start_dist=None, iteration=0):
    """One collect-then-update step; returns (new policies, ObjectiveReport)."""
    G, C, M = batch.shape
    beta, a1, a2, a3 = config.weights
    terms, bags = evaluate_batch(batch, features, policies, config)
    prior_p = softmax(policies.prior[batch.starts])  # (G, C)

    g_theta = policy_gradient(batch, prior_p, terms.advantage, policies.policy) / G
    g_prior = np.zeros_like(policies.prior)
    np.add.at(g_prior, batch.starts, obj.prior_gradient(policies.prior[batch.starts], terms.q_prior) / G)
    if not (np.all(np.isfinite(g_theta)) and np.all(np.isfinite(g_prior))):
        raise FloatingPointError(f"non-finite gradient at iteration {iteration}")

    new = policies.copy()
    new.policy += config.lr_policy * g_theta
    new.prior += config.lr_prior * g_prior
    D = features.shape[1]
    starts_rep = np.repeat(batch.starts, C * M)
    opts = np.tile(np.repeat(np.arange(C), M), G)
    new.decoder.update(starts_rep, bags.reshape(-1, D), opts, config.lr_decoder, config.decoder_steps)

    if start_dist is None:
        start_dist = np.zeros(policies.n_states)
        np.add.at(start_dist, batch.starts, 1.0 / G)
    entropy = obj.entropy_prior(policies.prior, start_dist)
    weight = np.where(np.isfinite(terms.landmark_logprob), np.exp(terms.landmark_logprob), 0.0)
    dec_term = float(np.mean(np.sum(prior_p * (weight * terms.decoder_logprob).mean(-1), axis=1)))
    kl = float(np.mean(np.sum(prior_p * terms.kl.mean(-1), axis=1)))
    l1 = float(np.mean(np.sum(prior_p * terms.f.mean(-1), axis=1)))
    l2 = float(np.mean(np.sum(prior_p * terms.g, axis=1)))
    l3 = float(np.mean(terms.h))
    ib = entropy + dec_term - beta * kl
    total = ib + a1 * l1 - a2 * l2 + a3 * l3
    report = ObjectiveReport(iteration, ib, l1, l2, l3, total, entropy, kl,
                             decoder_weight=float(weight.mean()), terms=terms)
    return new, report


def features_for(maze, config, rng, policies_batch_pairs=None, init=None):
    if config.spectrum == "exact":
        spec = maze_spectrum(maze, config)
        return state_features(spec), spec
    pairs = policies_batch_pairs if policies_batch_pairs is not None else random_walk_pairs(maze, 20000, rng)
    D = min(config.feature_dim, maze.n_states)
    F = learn_spectrum_sgd(pairs, maze.n_states, D, seed=int(rng.integers(2**31)), init=init)
    spec = learned_spectrum(F)
    return state_features(spec), spec


def train(maze, config, features=None, callback=None):
    """Run the option discovery loop; returns (policies, reports, spectrum digest)."""
    rng = np.random.default_rng(config.seed)
    table = transition_table(maze)
    starts = list(maze.start_states) or [0]
    spec = None
    learned_init = None
    replay = []
    if features is None:
        features, spec = features_for(maze, config, rng)
        if config.spectrum == "learned":
            learned_init = spec.eigenvectors
    D = features.shape[1]
    policies = OptionPolicySet.uniform(maze.n_states, config.n_options, D)
    start_dist = np.zeros(maze.n_states)
    start_dist[starts] = 1.0 / len(starts)
    reports = []
    for it in range(config.iterations):
        batch = collect_batch(table, policies, config, rng, starts)
        if config.spectrum == "learned" and config.spectrum_period:
            st = batch.states.reshape(-1, batch.states.shape[-1])
            replay.extend(zip(st[:, :-1].ravel().tolist(), st[:, 1:].ravel().tolist()))
        policies, report = gradient_step(batch, policies, config, features, start_dist, it)
        if callback is not None:
            callback(it, policies, report, batch)
        report.terms = None
        reports.append(report)
        if (config.spectrum == "learned" and config.spectrum_period
                and (it + 1) % config.spectrum_period == 0 and it + 1 < config.iterations):
            features, spec = features_for(maze, config, rng, replay, init=learned_init)
        log.debug("iter %d total %.5f l1 %.3f l3 %.3f", it, report.total, report.l1, report.l3)
    digest = spec.digest() if spec is not None else hashlib.sha256(
        np.ascontiguousarray(features, dtype="<f8").tobytes()).hexdigest()
    return policies, reports, digest


def save_checkpoint(path, policies, config, spectrum_digest):
    d = policies.decoder
    blob = {
        "format": "dppoptions-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "spectrum_sha256": spectrum_digest,
        "prior": policies.prior.tolist(),
        "policy": policies.policy.tolist(),
        "decoder": {"w_start": d.w_start.tolist(), "w_feat": d.w_feat.tolist(), "bias": d.bias.tolist()},
        "selector": policies.selector.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(blob, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != "dppoptions-checkpoint":
        raise ValueError(f"{path} is not a checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    cfg = blob["config"]
    config = OptionConfig(**cfg)
    d = blob["decoder"]
    policies = OptionPolicySet(
        np.array(blob["prior"], dtype=float),
        np.array(blob["policy"], dtype=float),
        Decoder(np.array(d["w_start"], dtype=float), np.array(d["w_feat"], dtype=float),
                np.array(d["bias"], dtype=float)),
        np.array(blob["selector"], dtype=float),
    )
    return policies, config, blob["spectrum_sha256"]
