import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, stats

from mfglab import meeting
from mfglab.errors import DegenerateEquilibrium, InvalidArgument
from mfglab.measures import DistributionSpec

BASIC = meeting.MeetingSpec()


def two_scale():
    return DistributionSpec("atom-mixture", {"points": [1.0, 2.0], "weights": [0.5, 0.5]})


def test_mixture_cdf_matches_quadrature():
    spec = meeting.MeetingSpec(nu=two_scale())
    dens = lambda z: 0.5 * stats.norm.pdf(z) + 0.5 * stats.norm.pdf(z, scale=2.0)
    ref = integrate.quad(dens, -np.inf, 1.0, epsabs=1e-13)[0]
    assert abs(meeting.noise_cdf(spec, 1.0) - ref) <= 1e-10
    assert meeting.noise_cdf(spec, 1.0) == pytest.approx(0.5 * stats.norm.cdf(1) + 0.5 * stats.norm.cdf(0.5), abs=1e-15)


@given(st.floats(-20, 20))
def test_noise_cdf_symmetry(z):
    spec = meeting.MeetingSpec(nu=two_scale())
    assert abs(meeting.noise_cdf(spec, -z) - (1 - meeting.noise_cdf(spec, z))) <= 1e-12
    assert meeting.noise_cdf(spec, 0.0) == 0.5


def test_best_response_minimizes_expected_cost():
    for T in (8.5, 9.0, 10.0):
        t = meeting.best_response_time(BASIC, T)
        ref = optimize.minimize_scalar(lambda s: float(meeting.expected_cost(BASIC, s, T)), bracket=(T - 3, T + 3), tol=1e-12).x
        assert abs(t - ref) < 1e-6
        assert abs(meeting.first_order_lhs(BASIC, t, T) - BASIC.C) < 1e-10


def test_fixed_point_matches_bisection():
    eq = meeting.solve_equilibrium(BASIC, tol=1e-12)
    root = optimize.brentq(lambda T: meeting.start_time_map(BASIC, T)[0] - T, 9.0, 15.0, xtol=1e-14)
    assert abs(eq.t_star - root) <= 1e-8
    assert eq.residual <= 1e-8
    assert eq.empirical_contraction < 1 and eq.contraction_estimate < 1


def test_fixed_point_frozen_value():
    # frozen from an independent brentq solve of G(T) = T
    eq = meeting.solve_equilibrium(BASIC)
    assert eq.t_star == pytest.approx(9.674489750196077, abs=1e-8)


def test_direct_mode_closed_form():
    # at t = T the condition reads A F(T - t0) + (B + C) / 2 = C
    spec = meeting.MeetingSpec(A=1.0, B=1.0, C=2.5)
    eq = meeting.solve_equilibrium(spec, mode="direct")
    assert abs(eq.t_star - (9.0 + stats.norm.ppf(0.75))) < 1e-8


def test_direct_mode_without_fixed_point_is_degenerate():
    with pytest.raises(DegenerateEquilibrium):
        meeting.solve_equilibrium(BASIC, mode="direct")


def test_vanishing_lateness_cost_is_degenerate():
    spec = meeting.MeetingSpec(A=1e-300, B=1.0, C=1.0)
    with pytest.raises(DegenerateEquilibrium):
        meeting.solve_equilibrium(spec)


def test_preconditions():
    with pytest.raises(InvalidArgument):
        meeting.MeetingSpec(A=-1.0)
    with pytest.raises(InvalidArgument):
        meeting.MeetingSpec(nu=DistributionSpec.normal())
    with pytest.raises(InvalidArgument):
        meeting.MeetingSpec(t0=30.0)
    with pytest.raises(InvalidArgument):
        meeting.MeetingSpec(rule_quantile=1.0)


def no_fixed_point(spec):
    if spec.C <= spec.A:
        return False
    z = lambda q: optimize.brentq(lambda x: meeting.noise_cdf(spec, x) - q, -50, 50, xtol=1e-14)
    return z((spec.C - spec.A) / (spec.B + spec.C)) + z(spec.rule_quantile) >= 0


def test_missing_fixed_point_is_reported():
    spec = meeting.MeetingSpec(A=1.0, B=1.0, C=2.0, t0=6.0)
    assert no_fixed_point(spec)
    with pytest.raises(DegenerateEquilibrium):
        meeting.solve_equilibrium(spec)


@settings(max_examples=25)
@given(
    st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.2, 5), st.floats(6, 12), st.floats(0.2, 2), st.floats(0.55, 0.95)
)
def test_equilibrium_is_a_fixed_point(A, B, C, t0, s, q):
    spec = meeting.MeetingSpec(A, B, C, t0, DistributionSpec.dirac(s), q)
    try:
        eq = meeting.solve_equilibrium(spec)
    except DegenerateEquilibrium:
        # either no fixed point or one beyond the admissible window
        if not no_fixed_point(spec):
            assert meeting.start_time_map(spec, spec.domain[1])[0] > spec.domain[1]
        return
    assert not no_fixed_point(spec)
    G, _ = meeting.start_time_map(spec, eq.t_star)
    assert abs(G - eq.t_star) <= 1e-8
    assert eq.t_star >= t0


def test_finite_simulation_is_reproducible():
    t_hat = meeting.solve_equilibrium(BASIC).t_hat
    assert meeting.simulate_finite(BASIC, t_hat, 500, 3) == meeting.simulate_finite(BASIC, t_hat, 500, 3)


def test_finite_games_approach_the_limit():
    eq = meeting.solve_equilibrium(BASIC)
    limit = meeting.limit_start_time(BASIC, eq.t_hat)
    gaps = []
    for n in (100, 1000, 10000):
        starts = [meeting.simulate_finite(BASIC, eq.t_hat, n, s) for s in range(21)]
        gaps.append(np.median(np.abs(np.array(starts) - limit)))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02
