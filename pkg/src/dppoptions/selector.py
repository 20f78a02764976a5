"""Downstream option selector: REINFORCE over option-level decisions with frozen options."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import rollout_batch, transition_table
from .policies import softmax


@dataclass
class SelectorResult:
    logits: np.ndarray  # (|S|, C)
    returns: np.ndarray  # mean episode return per iteration
    success: np.ndarray  # fraction of episodes reaching the goal per iteration


def goal_state(maze, goal=()):
    if goal:
        return maze.state_of(tuple(goal))
    if maze.goals:
        return maze.goal_states[0]
    raise ValueError("selector task needs a goal cell")


def run_episodes(table, policies, logits, s0, goal, n_episodes, decisions, option_steps, step_penalty, rng):
    """Sample episodes of option-level decisions.

    Each decision draws an option from ``softmax(logits[s])`` and runs its
    frozen policy for ``option_steps`` primitive steps or until the goal is
    hit. Reward is +1 on reaching the goal and ``-step_penalty`` per step.
    Returns (decision states (E, K), chosen options (E, K), taken mask (E, K),
    per-decision rewards (E, K), reached (E,)).
    """
    E = n_episodes
    s = np.full(E, s0, dtype=np.int64)
    done = np.zeros(E, dtype=bool)
    rew = np.zeros((E, decisions))
    dec_states = np.zeros((E, decisions), dtype=np.int64)
    dec_opts = np.zeros((E, decisions), dtype=np.int64)
    taken = np.zeros((E, decisions), dtype=bool)
    C = logits.shape[1]
    for k in range(decisions):
        live = ~done
        if not live.any():
            break
        p = softmax(logits[s])
        cdf = np.cumsum(p, axis=1)
        u = rng.random(E) * cdf[:, -1]
        c = np.minimum((u[:, None] >= cdf).sum(axis=1), C - 1)
        dec_states[:, k] = s
        dec_opts[:, k] = c
        taken[:, k] = live
        traj, _, _ = rollout_batch(table, s, policies.action_probs, c, option_steps, rng)
        hit = traj[:, 1:] == goal
        first = np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, option_steps)
        reached = live & hit.any(axis=1)
        rew[live, k] -= step_penalty * first[live]
        rew[reached, k] += 1.0
        s = np.where(live, traj[:, -1], s)
        done |= reached
    return dec_states, dec_opts, taken, rew, done


def train_selector(maze, policies, config, init_from_prior=False, seed=None, goal=None):
    """Train the option selector on a sparse goal task with the options held fixed."""
    if policies.n_options < 1:
        raise ValueError("selector needs at least one option")
    g = goal_state(maze, config.goal if goal is None else goal)
    table = transition_table(maze)
    s0 = (maze.start_states or (0,))[0]
    if s0 == g:
        raise ValueError("goal coincides with the start state")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    logits = policies.prior.copy() if init_from_prior else np.zeros_like(policies.prior)
    returns, success = [], []
    for _ in range(config.selector_iterations):
        st, opts, taken, rew, reached = run_episodes(
            table, policies, logits, s0, g, config.selector_episodes, config.selector_decisions,
            config.selector_option_steps, config.step_penalty, rng)
        returns.append(rew.sum(axis=1).mean())
        success.append(reached.mean())
        # reward-to-go with a per-decision mean baseline over the episodes still running
        togo = np.cumsum(rew[:, ::-1], axis=1)[:, ::-1]
        n_live = np.maximum(taken.sum(axis=0), 1)
        base = (togo * taken).sum(axis=0) / n_live
        adv = (togo - base) * taken
        grad = np.zeros_like(logits)
        e_idx, k_idx = np.nonzero(taken)
        s_idx = st[e_idx, k_idx]
        score = -softmax(logits[s_idx])
        score[np.arange(s_idx.size), opts[e_idx, k_idx]] += 1.0
        np.add.at(grad, s_idx, adv[e_idx, k_idx, None] * score)
        logits = logits + config.selector_lr * grad / config.selector_episodes
    return SelectorResult(logits, np.array(returns), np.array(success))


def iterations_to_threshold(returns, threshold, window=10):
    """First iteration at which the trailing-window mean return reaches ``threshold``.

    Returns ``len(returns)`` when it never does.
    """
    r = np.asarray(returns, dtype=float)
    for i in range(len(r)):
        if r[max(0, i - window + 1):i + 1].mean() >= threshold and i + 1 >= min(window, len(r)):
            return i
    return len(r)


def compare_inits(maze, policies, config, threshold, seed=None, window=10):
    """Iterations to threshold for (uniform init, prior init), sharing one seed."""
    out = []
    for init in (False, True):
        res = train_selector(maze, policies, config, init_from_prior=init, seed=seed)
        out.append(iterations_to_threshold(res.returns, threshold, window))
    return tuple(out)
