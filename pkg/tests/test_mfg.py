import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_banded

from mfglab import mfg
from mfglab.errors import InvalidArgument, NonConvergence
from mfglab.measures import DistributionSpec, empirical_from_samples, flow_distance


@pytest.fixture(scope="module")
def lq():
    return mfg.lq_mean_field()


@pytest.fixture(scope="module")
def lq_eq(lq):
    return mfg.mfg_picard(lq, tol=1e-6, nt=50, nx=201, particles=1000)


def test_lq_mean_path_matches_riccati_line(lq, lq_eq):
    ref = mfg.lq_mean_path(1.0, 1.0, 0.0, 1.0, 1.0, lq_eq.flow.times)
    assert np.max(np.abs(lq_eq.flow.means() - ref)) < 1e-3
    assert lq_eq.residual_history[-1] <= 1e-6
    assert not lq_eq.flagged
    assert lq_eq.metadata["control_bound_holds"]


def test_damping_does_not_move_the_equilibrium(lq, lq_eq):
    damped = mfg.mfg_picard(lq, damping=0.5, tol=1e-6, nt=50, nx=201, particles=1000)
    assert flow_distance(lq_eq.flow, damped.flow) <= 2e-6
    assert damped.iterations > lq_eq.iterations


def test_picard_is_reproducible(lq):
    a = mfg.mfg_picard(lq, tol=1e-5, nt=20, nx=101, particles=200, seed=3)
    b = mfg.mfg_picard(lq, tol=1e-5, nt=20, nx=101, particles=200, seed=3)
    assert np.array_equal(a.samples, b.samples)


def test_budget_exhaustion_reports_history(lq):
    with pytest.raises(NonConvergence) as err:
        mfg.mfg_picard(lq, tol=1e-14, max_iters=2, nt=10, nx=51, particles=100)
    assert len(err.value.history) == 2


@settings(max_examples=40)
@given(st.floats(-5, 5), st.floats(-3, 3), st.floats(0.1, 3))
def test_closed_form_minimizer_matches_bisection(y, x, a_max):
    base = mfg.lq_mean_field(a_max=a_max)
    generic = mfg.MfgProblem(
        f=base.f, g=base.g, sigma=base.sigma, action_interval=base.action_interval, mu0=base.mu0, f_a=base.f_a
    )
    m = empirical_from_samples([0.0, 1.0])
    a1 = mfg.argmin_hamiltonian(base, 0.0, np.array([x]), m, np.array([y]))
    a2 = mfg.argmin_hamiltonian(generic, 0.0, np.array([x]), m, np.array([y]))
    assert abs(a1[0] - np.clip(-y, -a_max, a_max)) < 1e-12
    assert abs(a1[0] - a2[0]) < 1e-9


def test_convexity_is_checked():
    with pytest.raises(InvalidArgument):
        mfg.MfgProblem(
            f=lambda t, x, m, a: -(a**2), g=lambda x, m: 0 * x, sigma=1.0, action_interval=(-1, 1), mu0=DistributionSpec.normal()
        )
    with pytest.raises(InvalidArgument):
        mfg.lq_mean_field(sigma=0.0)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.floats(0.05, 1.0))
def test_mixture_resampling_is_linear_in_the_mean(seed, delta):
    rng = np.random.default_rng(seed)
    old = np.sort(rng.normal(size=(2, 64)), axis=1)
    new = np.sort(rng.normal(1, 2, size=(2, 64)), axis=1)
    mixed = mfg._mix_sorted(old, new, delta)
    assert np.allclose(mixed.mean(axis=1), (1 - delta) * old.mean(axis=1) + delta * new.mean(axis=1), atol=1e-12)
    assert np.all(np.diff(mixed, axis=1) >= -1e-12)
    assert np.allclose(mfg._mix_sorted(old, old, delta), old, atol=1e-12)


def test_fokker_planck_conserves_mass_and_spreads():
    x = np.linspace(-4, 4, 161)
    times = np.linspace(0, 1, 101)
    m0 = mfg.project_to_grid(DistributionSpec.normal(0, 0.3), x)
    dens = mfg.fokker_planck(x, times, np.zeros((100, x.size)), 0.5, m0)
    assert np.max(np.abs(dens.sum(axis=1) - 1)) < 1e-12
    var = dens[-1] @ x**2 - (dens[-1] @ x) ** 2
    assert abs(var - (0.09 + 0.25)) < 0.01


def test_hjb_fp_lq(lq):
    res = mfg.hjb_fp_solve(lq, nt=50, nx=101)
    value, flow = res
    assert res.mass_drift <= 1e-8
    ref = mfg.lq_mean_path(1.0, 1.0, 0.0, 1.0, 1.0, flow.times)
    assert np.max(np.abs(flow.means() - ref)) < 0.05
    assert value.values.shape == (51, 101)


def test_hjb_step_is_dynamic_programming_consistent(lq):
    x = np.linspace(-4, 6, 101)
    times = np.linspace(0, 1, 21)
    measures = [empirical_from_samples(np.linspace(0.6, 1.4, 9))] * times.size
    V, pol = mfg.solve_hjb(lq, x, times, measures)
    dt = times[1] - times[0]
    for n in (0, 10, 19):
        for a in (-2.0, -0.5, 0.0, 1.0):
            act = np.full(x.size, a)
            lw, dg, up = mfg._generator(mfg.drift(lq, times[n], x, measures[n], act), lq.sigma, x[1] - x[0])
            w = solve_banded((1, 1), mfg._banded(lw, dg, up, dt, False), V[n + 1] + dt * lq.f(times[n], x, measures[n], act))
            assert np.all(V[n] <= w + 1e-9)


def test_variational_inequality_margins(lq, lq_eq):
    sol = mfg.solve_agent_fbsde(lq, lq_eq.flow, nx=201, paths=1000, vi_samples=10)
    assert np.all(sol.vi_margins >= -sol.vi_tolerance)


def test_self_deviation_gains_nothing(lq, lq_eq):
    est = mfg.epsilon_nash_estimate(lq, lq_eq, 10, deviation_budget=200, deviation="equilibrium")
    assert est.epsilon == 0.0


def test_epsilon_is_small_and_nonnegative(lq, lq_eq):
    est = mfg.epsilon_nash_estimate(lq, lq_eq, 50, deviation_budget=400)
    assert 0 <= est.epsilon < 1e-2
    assert est.ci_low <= est.gain_mean <= est.ci_high


def test_crowd_aversion_spreads_the_population():
    p = mfg.crowd_aversion(kappa=2.0)
    free = mfg.crowd_aversion(kappa=0.0)
    eq = mfg.mfg_picard(p, tol=1e-5, nt=40, nx=151, particles=600)
    ref = mfg.mfg_picard(free, tol=1e-5, nt=40, nx=151, particles=600)
    assert eq.flow.measures[-1].variance() > ref.flow.measures[-1].variance()
