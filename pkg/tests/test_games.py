import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfglab import games
from mfglab.errors import InvalidArgument

finite = st.floats(-100, 100, allow_nan=False)


def test_prisoners_dilemma_unique_pure_equilibrium():
    g = games.prisoners_dilemma()
    assert games.pure_nash(g) == [(0, 0)]
    assert g.row_labels[0] == "accuse"


def test_accusing_is_dominant():
    g = games.prisoners_dilemma()
    for j in range(2):
        assert games.best_response(g, 1, j) == {0}
        assert games.best_response(g, 2, j) == {0}


def test_matching_pennies_has_no_pure_equilibrium():
    assert games.pure_nash(games.matching_pennies()) == []


def test_matching_pennies_mixed_is_uniform():
    prof = games.mixed_nash_2x2(games.matching_pennies())
    assert np.allclose(prof.p, (0.5, 0.5), atol=1e-10)
    assert np.allclose(prof.q, (0.5, 0.5), atol=1e-10)
    assert games.deviation_gain(games.matching_pennies(), prof) <= 1e-12


def test_ties_are_kept():
    g = games.BimatrixGame(np.ones((2, 3)), np.zeros((2, 3)))
    assert games.best_response(g, 1, 2) == {0, 1}
    assert games.best_response(g, 2, 1) == {0, 1, 2}
    assert len(games.pure_nash(g)) == 6


def test_bad_inputs():
    with pytest.raises(InvalidArgument):
        games.BimatrixGame(np.ones((2, 2)), np.ones((2, 3)))
    with pytest.raises(InvalidArgument):
        games.BimatrixGame(np.array([[np.nan]]), np.zeros((1, 1)))
    with pytest.raises(InvalidArgument):
        games.best_response(games.prisoners_dilemma(), 3, 0)
    with pytest.raises(InvalidArgument):
        games.cournot(1.0, 2.0)
    with pytest.raises(InvalidArgument):
        games.cournot(1.0, -0.5)


def test_cournot_worked_example():
    assert games.cournot(4.0, 1.0) == (1.0, 1.0)


@given(st.floats(0, 50), st.floats(0.01, 50))
def test_cournot_closed_form_and_best_response_fixed_point(c, margin):
    a = c + margin
    q1, q2 = games.cournot(a, c)
    assert q1 == q2 == (a - c) / 3
    assert abs(games.cournot_best_response(a, c, q2) - q1) <= 1e-12 * max(1.0, a)


@given(st.lists(finite, min_size=4, max_size=4), st.lists(finite, min_size=4, max_size=4))
def test_2x2_solution_is_an_equilibrium(u1, u2):
    g = games.BimatrixGame(np.reshape(u1, (2, 2)), np.reshape(u2, (2, 2)))
    prof = games.mixed_nash_2x2(g)
    scale = 1 + np.abs(g.payoff1).max() + np.abs(g.payoff2).max()
    assert games.deviation_gain(g, prof) <= 1e-9 * scale
    assert abs(sum(prof.p) - 1) < 1e-12 and abs(sum(prof.q) - 1) < 1e-12


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_pure_equilibria_are_mutual_best_responses(r, c, seed):
    rng = np.random.default_rng(seed)
    g = games.BimatrixGame(rng.integers(0, 3, (r, c)), rng.integers(0, 3, (r, c)))
    for i, j in games.pure_nash(g):
        assert g.payoff1[i, j] == g.payoff1[:, j].max()
        assert g.payoff2[i, j] == g.payoff2[i, :].max()


def test_mixing_weight_that_rounds_to_one():
    g = games.BimatrixGame(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[2.2250738585e-313, 0.0], [-1.0, 0.0]]))
    prof = games.mixed_nash_2x2(g)
    assert prof.q == (0.5, 0.5)
    assert games.deviation_gain(g, prof) <= 1e-300
