import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diqre import behaviour, game
from diqre.game import (
    Game, behaviour_from_eb_scores, eb_reduced_tuples, expected_score_distribution, frequency_distribution,
    make_chsh_extended, make_correlator_game, make_empirical_behaviour_game,
)


def random_behaviour(rng, X, Y, A=2, B=2):
    t = rng.dirichlet(np.ones(A * B), size=(X, Y)).transpose(2, 0, 1).reshape(A, B, X, Y)
    return behaviour.Behaviour(t)


def test_ideal_chsh_scores(chsh):
    w = expected_score_distribution(chsh, behaviour.ideal_chsh_behaviour()).values
    half = 0.5
    expected = half * np.array([half + np.sqrt(2) / 4, 1.0, half - np.sqrt(2) / 4])
    assert np.allclose(w, expected, atol=1e-14)
    assert chsh.score_names == ("c_chsh", "c_align", "c_0")


def test_uniform_outputs_correlator_game():
    g = make_correlator_game(2, 2)
    w = expected_score_distribution(g, np.full((2, 2, 2, 2), 0.25)).values
    assert np.allclose(w[:4], g.mu.ravel() / 2)
    assert w[4] == pytest.approx(0.5)


def test_eb_scores_are_selected_probabilities(rng):
    g = make_empirical_behaviour_game(2, 3)
    p = random_behaviour(rng, 2, 3)
    w = expected_score_distribution(g, p).values
    for s, (a, b, x, y) in enumerate(eb_reduced_tuples(2, 3)):
        assert w[s] == pytest.approx(g.mu[x, y] * p.table[a, b, x, y], abs=1e-15)


def test_chsh_rule_entries(chsh):
    assert chsh.score_of(0, 0, 1, 1) == 2
    assert chsh.score_of(1, 1, 0, 2) == 1
    assert chsh.mu[1, 2] == 0


@pytest.mark.parametrize("x, y, free", [(2, 3, 11), (2, 2, 8)])
def test_eb_free_parameter_count(x, y, free):
    g = make_empirical_behaviour_game(x, y)
    assert g.n_scores == free + 1


def test_eb_needs_full_support():
    with pytest.raises(ValueError):
        make_empirical_behaviour_game(2, 2, mu=[[0.5, 0.5], [0.0, 0.0]])


def test_eb_catch_all_is_complement(rng):
    g = make_empirical_behaviour_game(2, 3)
    w = expected_score_distribution(g, random_behaviour(rng, 2, 3)).values
    assert w[-1] == pytest.approx(1 - w[:-1].sum(), abs=1e-14)


def test_correlator_game_counts():
    g = make_correlator_game(2, 2)
    assert g.n_scores == 5
    t = np.zeros((2, 2, 2, 2))
    t[0, 0] = t[1, 1] = 0.5
    assert expected_score_distribution(g, t).values[-1] == 0
    w = expected_score_distribution(g, np.full((2, 2, 2, 2), 0.25)).values
    assert np.allclose(w[:4], 1 / 8)


def test_frequency_distribution():
    f = frequency_distribution([1, 1, 0, 2], 4)
    assert np.array_equal(f.values, [0.25, 0.25, 0, 0.5])
    assert np.array_equal(frequency_distribution([0, 0, 0, 5], 5).values, [0, 0, 0, 1])
    with pytest.raises(ValueError):
        frequency_distribution([1, 1], 3)


def test_frequencies_concentrate(rng):
    gamma, w = 0.1, np.array([0.4, 0.5, 0.1])
    target = np.append(gamma * w, 1 - gamma)
    n = 10 ** 6
    counts = rng.multinomial(n, target)
    f = frequency_distribution(counts, n).values
    # Chernoff window at confidence 1e-6 per entry
    width = np.sqrt(3 * target * np.log(2e6) / n)
    assert np.all(np.abs(f - target) <= width)


def test_bad_games():
    mu = np.full((2, 2), 0.25)
    with pytest.raises(ValueError):
        Game(mu * 2, np.zeros((2, 2, 2, 2), int), ("a",))
    with pytest.raises(ValueError):
        Game(mu, np.full((2, 2, 2, 2), 3), ("a", "b"))
    with pytest.raises(ValueError):
        Game(mu, np.zeros((2, 2, 2, 2), int), ("a", "a"))


def test_alphabet_mismatch(chsh):
    with pytest.raises(ValueError):
        expected_score_distribution(chsh, np.full((2, 2, 2, 2), 0.25))


@given(st.integers(0, 2 ** 32 - 1))
def test_scores_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    for g in (make_chsh_extended(), make_empirical_behaviour_game(2, 3), make_correlator_game(2, 2)):
        X, Y = g.mu.shape
        w = expected_score_distribution(g, random_behaviour(rng, X, Y)).values
        assert abs(w.sum() - 1) <= 1e-12


@given(st.integers(0, 2 ** 32 - 1))
def test_eb_reconstruction_roundtrip(seed):
    rng = np.random.default_rng(seed)
    g = make_empirical_behaviour_game(2, 3)
    # no-signalling input: a qubit strategy
    s = behaviour.QubitSetup(rng.uniform(0.1, np.pi / 4), rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 3),
                             eta=rng.uniform(0.5, 1))
    p = behaviour.behaviour_from_setup(s)
    w = expected_score_distribution(g, p).values
    rebuilt = behaviour_from_eb_scores(g, w)
    assert np.allclose(rebuilt, p.table, atol=1e-12)
    assert np.allclose(expected_score_distribution(g, rebuilt).values, w, atol=1e-14)


@pytest.mark.parametrize("name", ["chsh", "eb23", "ab22"])
def test_serialization_roundtrip(name):
    g = game.builtin_game(name)
    back = Game.from_dict(json.loads(json.dumps(g.to_dict())))
    assert back.score_names == g.score_names
    support = g.mu > 0
    assert np.array_equal(back.rule[:, :, support], g.rule[:, :, support])
    assert np.array_equal(back.mu, g.mu)


def test_with_perp():
    s = game.ScoreDistribution(np.array([0.5, 0.5]))
    p = s.with_perp(0.1)
    assert p.includes_perp and np.allclose(p.values, [0.05, 0.05, 0.9])


def test_deterministic_vectors_chsh(chsh):
    det = game.deterministic_score_vectors(chsh)
    # every local deterministic strategy wins CHSH on at most 3 of 4 question pairs
    assert det[:, 0].max() == pytest.approx(3 / 8)
    assert np.allclose(det.sum(axis=1), 1)
    assert len(det) <= 2 ** 2 * 2 ** 3
    for row in det:
        assert any(np.allclose(row, r) for r in det)
    assert len({tuple(r) for r in det}) == len(det)
