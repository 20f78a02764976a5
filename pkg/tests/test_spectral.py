import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dppoptions import spectral as sp
from dppoptions.gridworld import all_transitions, four_room, parse_maze
from dppoptions.trainer import random_walk_pairs
from oracles import central_diff, cycle_eigenvalues, path_eigenvalues, path_laplacian, principal_angles_deg


def _path(n):
    return sp.build_graph([(i, 0, i + 1) for i in range(n - 1)], n)


def _cycle(n):
    return sp.build_graph([(i, 0, (i + 1) % n) for i in range(n)], n)


def test_build_graph_dedup_and_self_loops():
    g = sp.build_graph([(0, 0, 1), (1, 0, 0)], 2)
    assert g.edges == ((0, 1),)
    g = sp.build_graph([(2, 1, 2)], 3)
    assert g.edges == ()
    with pytest.raises(IndexError):
        sp.build_graph([(0, 0, 3)], 3)


def test_two_by_two_grid_is_four_cycle():
    maze = parse_maze("####\n#..#\n#..#\n####\n")
    g = sp.build_graph(all_transitions(maze), maze.n_states)
    assert list(g.degrees) == [2, 2, 2, 2]
    np.testing.assert_allclose(np.sort(sp.spectrum(sp.laplacian(g), 4).eigenvalues), cycle_eigenvalues(4), atol=1e-10)


def test_laplacian_examples():
    np.testing.assert_array_equal(sp.laplacian(_path(3)), path_laplacian(3))
    k2 = sp.laplacian(_path(2))
    np.testing.assert_array_equal(k2, [[1, -1], [-1, 1]])
    lam = sp.spectrum(sp.laplacian(_cycle(4), normalized=True), 4, True).eigenvalues
    np.testing.assert_allclose(lam, [0, 1, 1, 2], atol=1e-10)
    with pytest.raises(ValueError, match="isolated"):
        sp.laplacian(sp.build_graph([(0, 0, 1)], 3), normalized=True)


@pytest.mark.parametrize("n", [2, 3, 5, 8, 13])
def test_closed_form_spectra(n):
    np.testing.assert_allclose(sp.spectrum(sp.laplacian(_path(n)), n).eigenvalues, path_eigenvalues(n), atol=1e-8)
    if n >= 3:
        np.testing.assert_allclose(sp.spectrum(sp.laplacian(_cycle(n)), n).eigenvalues, cycle_eigenvalues(n), atol=1e-8)


def test_p3_spectrum_and_fiedler():
    spec = sp.spectrum(sp.laplacian(_path(3)), 2)
    np.testing.assert_allclose(spec.eigenvalues, [0, 1], atol=1e-12)
    np.testing.assert_allclose(spec.eigenvectors[:, 1], np.array([1, 0, -1]) / math.sqrt(2), atol=1e-12)
    np.testing.assert_allclose(sp.fiedler(spec), np.array([1, 0, -1]) / math.sqrt(2), atol=1e-12)
    with pytest.raises(ValueError):
        sp.spectrum(sp.laplacian(_path(3)), 4)


def test_k2_features():
    spec = sp.spectrum(sp.laplacian(_path(2)), 2)
    np.testing.assert_allclose(spec.eigenvalues, [0, 2], atol=1e-12)
    np.testing.assert_allclose(sp.state_feature(spec, 0), [1 / math.sqrt(2)] * 2, atol=1e-12)
    f = sp.fiedler(spec)
    assert abs(f[0] + f[1]) < 1e-12


def test_d1_feature_is_one():
    spec = sp.spectrum(sp.laplacian(_path(5)), 1)
    np.testing.assert_allclose(sp.state_features(spec), np.ones((5, 1)))


def test_disconnected_fiedler_refused_and_features_per_component():
    g = sp.build_graph([(0, 0, 1), (2, 0, 3)], 4)
    spec = sp.graph_spectrum(g, 3)
    assert spec.eigenvalues[0] == 0 and spec.eigenvalues[1] == 0
    with pytest.raises(sp.DisconnectedGraphError):
        sp.fiedler(spec)
    F = sp.state_features(spec)
    np.testing.assert_allclose(np.linalg.norm(F, axis=1), 1.0, atol=1e-12)
    # the zero-eigenvalue vectors are component indicators
    np.testing.assert_allclose(spec.eigenvectors[:, 0], [1 / math.sqrt(2)] * 2 + [0, 0], atol=1e-12)


def test_maze_spectrum_invariants():
    maze = four_room()
    g = sp.build_graph(all_transitions(maze), maze.n_states)
    L = sp.laplacian(g)
    assert np.all(L.sum(axis=1) == 0)
    spec = sp.spectrum(L, 30)
    assert spec.eigenvalues[0] == 0.0
    assert np.count_nonzero(spec.eigenvalues == 0.0) == 1
    v1 = spec.eigenvectors[:, 0]
    np.testing.assert_allclose(v1, np.full(maze.n_states, 1 / math.sqrt(maze.n_states)), atol=1e-8)
    np.testing.assert_allclose(spec.eigenvectors.T @ spec.eigenvectors, np.eye(30), atol=1e-8)
    F = sp.state_features(spec)
    np.testing.assert_allclose(np.linalg.norm(F, axis=1), 1.0, atol=1e-9)
    assert np.all(F[:, 0] > 0)


def test_barbell_bridge_raises_connectivity():
    left = [(0, 0, 1), (1, 0, 2), (0, 0, 2)]
    right = [(3, 0, 4), (4, 0, 5), (3, 0, 5)]
    g1 = sp.build_graph(left + right + [(2, 0, 3)], 6)
    g2 = sp.build_graph(left + right + [(2, 0, 3), (0, 0, 5)], 6)
    l1 = sp.spectrum(sp.laplacian(g1), 2).eigenvalues[1]
    l2 = sp.spectrum(sp.laplacian(g2), 2).eigenvalues[1]
    assert l2 > l1 > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_features_are_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    n = 7
    A = np.triu(rng.random((n, n)) < 0.5, 1)
    edges = [(i, 0, j) for i, j in zip(*np.nonzero(A))] + [(i, 0, i + 1) for i in range(n - 1)]
    perm = rng.permutation(n)
    g = sp.build_graph(edges, n)
    gp = sp.build_graph([(perm[i], 0, perm[j]) for i, _, j in edges], n)
    lam = sp.spectrum(sp.laplacian(g), n).eigenvalues
    if np.min(np.diff(lam)) < 1e-6:
        return  # eigenvectors of repeated eigenvalues are not unique
    F = sp.state_features(sp.spectrum(sp.laplacian(g), 3))
    Fp = sp.state_features(sp.spectrum(sp.laplacian(gp), 3))
    # sign conventions may flip whole columns after relabelling
    for k in range(3):
        a, b = F[:, k], Fp[perm, k]
        assert min(np.abs(a - b).max(), np.abs(a + b).max()) < 1e-8


def test_text_fixture_roundtrip():
    g = _cycle(5)
    assert sp.parse_graph(sp.format_graph(g)) == g
    spec = sp.spectrum(sp.laplacian(g), 3)
    back = sp.parse_spectrum(sp.format_spectrum(spec))
    assert np.array_equal(back.eigenvalues, spec.eigenvalues)
    assert np.array_equal(back.eigenvectors, spec.eigenvectors)
    assert back.digest() == spec.digest()


def _loss_setup(seed=0):
    maze = four_room(5)
    rng = np.random.default_rng(seed)
    pairs = np.array(random_walk_pairs(maze, 400, rng))
    pairs, rho = sp._empirical(pairs, maze.n_states)
    return maze, pairs, rho, rng


def test_spectral_loss_gradient_finite_differences():
    maze, pairs, rho, rng = _loss_setup()
    F = rng.normal(size=(maze.n_states, 3))
    for pw in (0.0, 1.0, 3.0):
        g = sp.spectral_loss_grad(F, pairs, rho, pw)
        num = central_diff(lambda X: sp.spectral_loss(X, pairs, rho, pw), F, eps=1e-5)
        assert np.linalg.norm(g - num) <= 1e-4 * np.linalg.norm(num)


def test_weighted_pairs_match_repeated_pairs():
    maze, pairs, rho, rng = _loss_setup(1)
    F = rng.normal(size=(maze.n_states, 4))
    uniq, freq = sp.compress_pairs(pairs)
    assert sp.spectral_loss(F, uniq, rho, 1.0, freq) == pytest.approx(sp.spectral_loss(F, pairs, rho, 1.0), rel=1e-12)
    np.testing.assert_allclose(sp.spectral_loss_grad(F, uniq, rho, 1.0, freq),
                               sp.spectral_loss_grad(F, pairs, rho, 1.0), atol=1e-12)


def test_exact_eigenvectors_tangentially_stationary():
    # G's gradient at exact eigenvectors is R F S with S symmetric, i.e. it is
    # normal to the constraint set F^T R F = I; the tangential part vanishes
    maze = four_room(5)
    pairs = np.array([(s, s2) for s, _, s2 in all_transitions(maze)])
    pairs, rho = sp._empirical(pairs, maze.n_states)
    np.testing.assert_allclose(rho, 1.0 / maze.n_states)  # symmetric dynamics
    g = sp.build_graph(all_transitions(maze), maze.n_states)
    spec = sp.spectrum(sp.laplacian(g), 4)
    F = spec.eigenvectors * math.sqrt(maze.n_states)
    grad = sp.spectral_loss_grad(F, pairs, rho, 1.0)
    RF = rho[:, None] * F
    S = np.linalg.lstsq(RF, grad, rcond=None)[0]
    resid = grad - RF @ S
    assert np.linalg.norm(resid) <= 1e-6
    np.testing.assert_allclose(S, S.T, atol=1e-6)
    assert sp.spectral_loss(F, pairs, rho, 1.0) == pytest.approx(
        sp.spectral_loss(F, pairs, rho, 0.0), abs=1e-12)  # penalty is zero there


def test_learned_k2_constant():
    pairs = [(0, 1), (1, 0)] * 10
    F = sp.learn_spectrum_sgd(pairs, 2, 1, steps=500, seed=3)
    assert abs(F[0, 0] - F[1, 0]) < 1e-6
    _, rho = sp._empirical(pairs, 2)
    assert sp.spectral_loss(F, np.array(pairs), rho, 0.0) < 1e-10


def test_learned_loss_close_to_exact():
    maze = four_room(5)
    rng = np.random.default_rng(2)
    pairs = random_walk_pairs(maze, 3000, rng)
    P, rho = sp._empirical(pairs, maze.n_states)
    g = sp.build_graph(all_transitions(maze), maze.n_states)
    V = sp.spectrum(sp.laplacian(g), 3).eigenvectors
    exact = V / np.sqrt(np.sum(rho[:, None] * V**2, axis=0))
    F = sp.learn_spectrum_sgd(pairs, maze.n_states, 3, steps=3000, seed=0)
    assert sp.spectral_loss(F, P, rho, 1.0) <= 1.1 * sp.spectral_loss(exact, P, rho, 1.0)


def test_learned_subspace_aligns_on_four_room():
    maze = four_room()
    rng = np.random.default_rng(0)
    pairs = random_walk_pairs(maze, 20000, rng)
    g = sp.build_graph(all_transitions(maze), maze.n_states)
    exact = sp.spectrum(sp.laplacian(g), 4).eigenvectors
    F = sp.learn_spectrum_sgd(pairs, maze.n_states, 4, steps=5000, seed=0)
    assert principal_angles_deg(F, exact).max() <= 15.0
    spec = sp.learned_spectrum(F)
    np.testing.assert_allclose(spec.eigenvectors.T @ spec.eigenvectors, np.eye(4), atol=1e-10)


def test_learn_errors_and_determinism():
    with pytest.raises(ValueError):
        sp.learn_spectrum_sgd([], 3, 2)
    pairs = [(0, 1), (1, 2), (2, 1)]
    a = sp.learn_spectrum_sgd(pairs, 3, 2, steps=50, seed=7, batch_size=2)
    b = sp.learn_spectrum_sgd(pairs, 3, 2, steps=50, seed=7, batch_size=2)
    assert np.array_equal(a, b)
    with pytest.raises(FloatingPointError):
        sp.learn_spectrum_sgd(pairs, 3, 2, steps=200, step_size=50.0, seed=0)
