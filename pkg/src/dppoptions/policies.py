"""Tabular softmax parameter tables for the prior, option policies, decoder and selector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import N_ACTIONS


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=float)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = np.asarray(z, dtype=float)
    m = np.max(z, axis=axis, keepdims=True)
    return z - m - np.log(np.sum(np.exp(z - m), axis=axis, keepdims=True))


@dataclass
class Decoder:
    """Linear softmax classifier over [one-hot start state, mean landmark feature]."""

    w_start: np.ndarray  # (|S|, C)
    w_feat: np.ndarray  # (D, C)
    bias: np.ndarray  # (C,)

    @classmethod
    def zeros(cls, n_states, dim, n_options):
        return cls(np.zeros((n_states, n_options)), np.zeros((dim, n_options)), np.zeros(n_options))

    @property
    def n_options(self):
        return self.bias.shape[0]

    def logits(self, s0, bag):
        s0 = np.atleast_1d(np.asarray(s0, dtype=np.int64))
        bag = np.atleast_2d(np.asarray(bag, dtype=float))
        return self.w_start[s0] + bag @ self.w_feat + self.bias

    def logprob(self, s0, bag, c):
        lp = log_softmax(self.logits(s0, bag))
        return lp[np.arange(lp.shape[0]), np.atleast_1d(c)]

    def nll(self, s0, bag, c):
        return float(-np.mean(self.logprob(s0, bag, c)))

    def nll_grad(self, s0, bag, c):
        """Gradient of the mean negative log-likelihood, as (g_start, g_feat, g_bias)."""
        s0 = np.atleast_1d(np.asarray(s0, dtype=np.int64))
        bag = np.atleast_2d(np.asarray(bag, dtype=float))
        c = np.atleast_1d(np.asarray(c, dtype=np.int64))
        n = s0.shape[0]
        err = softmax(self.logits(s0, bag))
        err[np.arange(n), c] -= 1.0
        err /= n
        g_start = np.zeros_like(self.w_start)
        np.add.at(g_start, s0, err)
        return g_start, bag.T @ err, err.sum(axis=0)

    def update(self, s0, bag, c, lr, steps=1):
        """Gradient descent on the batch NLL; returns the loss before the update."""
        if len(np.atleast_1d(s0)) == 0:
            raise ValueError("empty decoder batch")
        loss = self.nll(s0, bag, c)
        for _ in range(steps):
            gs, gf, gb = self.nll_grad(s0, bag, c)
            self.w_start -= lr * gs
            self.w_feat -= lr * gf
            self.bias -= lr * gb
        return loss

    def copy(self):
        return Decoder(self.w_start.copy(), self.w_feat.copy(), self.bias.copy())


@dataclass
class OptionPolicySet:
    prior: np.ndarray  # (|S|, C) logits of P(c | s0)
    policy: np.ndarray  # (C, |S|, 4) logits of pi(a | s, c)
    decoder: Decoder
    selector: np.ndarray  # (|S|, C) logits of the downstream option selector

    @classmethod
    def uniform(cls, n_states, n_options, dim):
        return cls(
            np.zeros((n_states, n_options)),
            np.zeros((n_options, n_states, N_ACTIONS)),
            Decoder.zeros(n_states, dim, n_options),
            np.zeros((n_states, n_options)),
        )

    @property
    def n_options(self):
        return self.prior.shape[1]

    @property
    def n_states(self):
        return self.prior.shape[0]

    def prior_probs(self, s0):
        return softmax(self.prior[s0])

    def action_probs(self, states, options):
        return softmax(self.policy[np.asarray(options), np.asarray(states)])

    def policy_fn(self):
        """Callable ``(s, c) -> action probabilities`` for single-trajectory rollouts."""
        return lambda s, c: softmax(self.policy[c, s])

    def is_finite(self):
        d = self.decoder
        return all(np.all(np.isfinite(a)) for a in (self.prior, self.policy, self.selector,
                                                       d.w_start, d.w_feat, d.bias))

    def copy(self):
        return OptionPolicySet(self.prior.copy(), self.policy.copy(), self.decoder.copy(), self.selector.copy())
