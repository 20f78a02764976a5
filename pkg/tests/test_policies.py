import math

import numpy as np
import pytest

from dppoptions.policies import Decoder, OptionPolicySet, log_softmax, softmax


def test_zero_decoder_is_uniform():
    dec = Decoder.zeros(5, 3, 10)
    bag = np.random.default_rng(0).normal(size=(4, 3))
    for c in range(10):
        np.testing.assert_allclose(dec.logprob([0, 1, 2, 4], bag, [c] * 4), math.log(0.1))


def _toy(rng, n=200):
    # two options whose landmark bags live in disjoint regions of feature space
    c = rng.integers(0, 2, size=n)
    centers = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    bag = centers[c] + 0.1 * rng.normal(size=(n, 3))
    return np.zeros(n, dtype=np.int64), bag, c


def test_decoder_fits_separable_toy():
    rng = np.random.default_rng(1)
    s0, bag, c = _toy(rng)
    dec = Decoder.zeros(1, 3, 2)
    first = dec.update(s0, bag, c, lr=1.0, steps=1)
    for _ in range(50):
        dec.update(s0, bag, c, lr=1.0, steps=5)
    assert dec.nll(s0, bag, c) < first
    acc = np.mean(np.argmax(dec.logits(s0, bag), axis=1) == c)
    assert acc >= 0.95


def test_decoder_nll_gradient_finite_differences():
    rng = np.random.default_rng(2)
    dec = Decoder(rng.normal(size=(4, 3)), rng.normal(size=(5, 3)), rng.normal(size=3))
    s0 = rng.integers(0, 4, size=12)
    bag = rng.normal(size=(12, 5))
    c = rng.integers(0, 3, size=12)
    grads = dec.nll_grad(s0, bag, c)
    for arr, g in zip((dec.w_start, dec.w_feat, dec.bias), grads):
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + 1e-6
            up = dec.nll(s0, bag, c)
            arr[idx] = old - 1e-6
            dn = dec.nll(s0, bag, c)
            arr[idx] = old
            fd[idx] = (up - dn) / 2e-6
        assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_decoder_empty_batch():
    dec = Decoder.zeros(2, 2, 2)
    with pytest.raises(ValueError, match="empty"):
        dec.update(np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros(0, dtype=np.int64), 1.0)


def test_softmax_rows_are_distributions():
    z = np.random.default_rng(3).normal(size=(7, 5)) * 50
    p = softmax(z)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert np.all(p >= 0)
    np.testing.assert_allclose(np.exp(log_softmax(z)), p, atol=1e-12)


def test_policy_set_shapes_and_copy():
    ps = OptionPolicySet.uniform(6, 3, 4)
    assert ps.n_options == 3 and ps.n_states == 6
    np.testing.assert_allclose(ps.action_probs([0, 5], [1, 2]), 0.25)
    np.testing.assert_allclose(ps.prior_probs(2), 1 / 3)
    cp = ps.copy()
    cp.policy[0, 0, 0] = 5.0
    assert ps.policy[0, 0, 0] == 0.0
    assert ps.is_finite()
    cp.decoder.bias[0] = np.nan
    assert not cp.is_finite()
