import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from mfglab import aiyagari
from mfglab.errors import DegenerateEquilibrium, InvalidArgument

REF = aiyagari.AiyagariSpec()


@pytest.fixture(scope="module")
def ref_eq():
    return aiyagari.solve_macro_odes(REF)


def test_reference_residuals(ref_eq):
    assert ref_eq.residuals["K"] <= 1e-6
    assert ref_eq.residuals["logY"] <= 1e-6
    assert ref_eq.residuals["Y"] <= 1e-6
    assert ref_eq.Y_adj[-1] == 1.0
    assert ref_eq.K_bar[0] == REF.K0
    assert not ref_eq.flagged


def test_consumption_rule_and_prices(ref_eq):
    assert np.allclose(ref_eq.c_rule, ref_eq.Y_adj ** (-1 / REF.gamma))
    r, w = aiyagari.firm_prices(ref_eq.K_bar, REF)
    assert np.allclose(ref_eq.r, r) and np.allclose(ref_eq.w, w)


def test_paths_match_an_independent_shooting_solve(ref_eq):
    # integrate the boundary value problem with scipy's collocation solver
    a, d, b, g = REF.alpha_share, REF.delta, REF.beta, REF.gamma
    phi = ref_eq.phi

    def rhs(t, s):
        K, logY = s
        r = a * K ** (a - 1) - d
        return np.vstack([(1 - a) * K**a + r * (K - phi) - np.exp(-logY / g), -(r - b)])

    t = ref_eq.t_grid
    guess = np.vstack([ref_eq.K_bar, np.log(ref_eq.Y_adj)])
    sol = integrate.solve_bvp(rhs, lambda s0, s1: np.array([s0[0] - REF.K0, s1[1]]), t, guess, tol=1e-8, max_nodes=100000)
    assert sol.success
    assert np.max(np.abs(sol.sol(t)[0] - ref_eq.K_bar)) < 1e-4


def test_long_horizon_turnpike():
    spec = aiyagari.AiyagariSpec(T=200.0)
    eq = aiyagari.solve_macro_odes(spec, steps=4000)
    mid = eq.t_grid.size // 2
    slope = (eq.K_bar[mid + 1] - eq.K_bar[mid - 1]) / (eq.t_grid[mid + 1] - eq.t_grid[mid - 1])
    assert abs(slope) <= 1e-4
    assert abs(eq.K_bar[mid] - aiyagari.steady_state_capital(spec)) < 1e-3


def test_steady_state_zeroes_the_adjoint_rate():
    k = aiyagari.steady_state_capital(REF)
    assert abs(aiyagari.adjoint_rate(k, REF)) < 1e-12
    a = REF.alpha_share
    assert k == pytest.approx((a / (REF.delta + REF.beta)) ** (1 / (1 - a)), rel=1e-12)


def test_sweep_breaks_down_on_the_reference_calibration():
    with pytest.raises(DegenerateEquilibrium):
        aiyagari.solve_macro_odes(REF, method="sweep")


def test_sweep_agrees_on_a_short_horizon():
    spec = aiyagari.AiyagariSpec(T=5.0)
    a = aiyagari.solve_macro_odes(spec, steps=500, method="sweep", tol=1e-12)
    b = aiyagari.solve_macro_odes(spec, steps=500)
    assert np.max(np.abs(a.K_bar - b.K_bar)) < 1e-8


def test_print_variants_run():
    for kw in ({"paper_exact_ode": True}, {"foc_convention": "paper_exact"}, {"include_beta": False}, {"printed_aggregate": True}):
        eq = aiyagari.solve_macro_odes(aiyagari.AiyagariSpec(T=20.0, **kw), steps=400)
        assert eq.residuals["K"] <= 1e-6 and eq.residuals["logY"] <= 1e-6
        assert eq.Y_adj[-1] == 1.0


def test_printed_aggregate_equals_the_derived_wage_budget():
    spec = aiyagari.AiyagariSpec(printed_aggregate=True)
    derived = aiyagari.AiyagariSpec()
    K = np.linspace(1, 8, 9)
    assert np.allclose(aiyagari.capital_drift(K, 1.0, spec, 0.3), aiyagari.capital_drift(K, 1.0, derived, 0.3))


def test_panel_matches_the_aggregate(ref_eq):
    panel = aiyagari.simulate_panel(REF, ref_eq, 10000, seed=0)
    n = panel.k_paths.shape[0]
    for i in (ref_eq.t_grid.size // 4, ref_eq.t_grid.size // 2, ref_eq.t_grid.size - 1):
        k = panel.k_paths[:, i]
        assert abs(k.mean() - ref_eq.K_bar[i]) <= 4 * k.std(ddof=1) / np.sqrt(n)
    lab = panel.l_paths[:, -1]
    assert abs(lab.mean() - 1) <= 4 * lab.std(ddof=1) / np.sqrt(n)
    assert np.all(panel.l_paths >= REF.l_min) and np.all(panel.l_paths <= REF.l_max)
    assert np.all(panel.k_paths >= 0)


def test_panel_is_reproducible(ref_eq):
    a = aiyagari.simulate_panel(REF, ref_eq, 50, seed=4)
    b = aiyagari.simulate_panel(REF, ref_eq, 50, seed=4)
    assert np.array_equal(a.k_paths, b.k_paths)


@given(st.floats(0.05, 20), st.floats(0.2, 5))
def test_utility_and_marginal_utility_agree(c, gamma):
    h = 1e-6 * c
    num = (aiyagari.crra_utility(c + h, gamma) - aiyagari.crra_utility(c - h, gamma)) / (2 * h)
    assert num == pytest.approx(aiyagari.marginal_utility(c, gamma), rel=1e-5)
    assert aiyagari.optimal_consumption(aiyagari.marginal_utility(c, gamma), gamma) == pytest.approx(c, rel=1e-12)


def test_log_utility_limit():
    assert aiyagari.crra_utility(np.e, 1.0) == pytest.approx(1.0)


@settings(max_examples=30)
@given(st.floats(0.5, 20), st.floats(0.1, 0.6))
def test_firm_prices(K, a):
    spec = aiyagari.AiyagariSpec(alpha_share=a)
    r, w = aiyagari.firm_prices(K, spec)
    # competitive factor shares exhaust output
    assert (r + spec.delta) * K + w == pytest.approx(K**a, rel=1e-12)


def test_preconditions():
    with pytest.raises(InvalidArgument):
        aiyagari.AiyagariSpec(gamma=0.0)
    with pytest.raises(InvalidArgument):
        aiyagari.AiyagariSpec(l_min=1.5)
    with pytest.raises(InvalidArgument):
        aiyagari.LaborSpec(kind="jump")
    with pytest.raises(InvalidArgument):
        aiyagari.firm_prices(-1.0, REF)
    with pytest.raises(InvalidArgument):
        aiyagari.crra_utility(0.0, 2.0)
