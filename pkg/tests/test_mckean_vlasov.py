import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfglab.errors import InvalidArgument, NonConvergence, NumericalFailure
from mfglab.mckean_vlasov import (
    DriftKernel,
    McKeanSpec,
    chaos_gap,
    kernel_library,
    simulate_interacting,
    solve_nonlinear,
)
from mfglab.measures import DistributionSpec, sup_cdf_distance


def test_free_flow_is_gaussian():
    spec = McKeanSpec(kernel_library("zero"), 0.7, DistributionSpec.dirac(1.5), 1.0, 0.05)
    sol = solve_nonlinear(spec, 20000, seed=4)
    for t in (0.25, 1.0):
        ref = DistributionSpec.normal(1.5, 0.7 * np.sqrt(t))
        assert sup_cdf_distance(sol.flow.at(t), ref) < 1.95 / np.sqrt(20000)
    assert sol.iterations <= 1


def test_linear_pull_variance_follows_moment_equation():
    spec = McKeanSpec(kernel_library("linear_pull", strength=2.0), 1.0, DistributionSpec.normal(0, 1), 1.0, 1e-3)
    sol = solve_nonlinear(spec, 20000, seed=1, flow_every=250)
    t = sol.flow.times
    ode = np.exp(-4 * t) + (1 - np.exp(-4 * t)) / 4
    var = np.array([m.variance() for m in sol.flow.measures])
    assert np.max(np.abs(var / ode - 1)) < 0.04
    assert np.max(np.abs(sol.flow.means())) < 0.03


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_polynomial_moments_match_direct_average(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(3, 3))
    kern = DriftKernel.polynomial(c)
    y = rng.normal(size=50)
    x = rng.normal(size=7)
    direct = np.mean(kern.b_bar(x[:, None], y[None, :]), axis=1)
    assert np.allclose(kern.mean_drift(x, kern.statistics(y)), direct, rtol=1e-10, atol=1e-10)


def test_generic_kernel_uses_pairwise_average():
    kern = kernel_library("tanh_pull", strength=1.5)
    y = np.array([-1.0, 0.0, 2.0])
    x = np.array([0.5])
    assert kern.mean_drift(x, kern.statistics(y))[0] == pytest.approx(np.mean(1.5 * np.tanh(y - 0.5)))
    assert kern.lipschitz_bound == 1.5


def test_affine_kernels_have_lipschitz_bounds():
    assert kernel_library("linear_pull", strength=3.0).lipschitz_bound == 3.0
    assert kernel_library("custom-polynomial", coeffs=[[0.0], [0.0], [1.0]]).lipschitz_bound == np.inf


def test_particle_noise_is_independent_of_ensemble_size():
    spec = McKeanSpec(kernel_library("zero"), 1.0, DistributionSpec.dirac(0.0), 0.5, 0.05)
    small, big = simulate_interacting(spec, 10, 3), simulate_interacting(spec, 40, 3)
    assert np.array_equal(small.states[:, 1:], big.states[:10, 1:])


def test_runs_are_reproducible():
    spec = McKeanSpec(kernel_library("linear_pull"), 1.0, DistributionSpec.normal(), 0.5, 0.05)
    a, b = simulate_interacting(spec, 100, 9), simulate_interacting(spec, 100, 9)
    assert np.array_equal(a.states, b.states)


def test_blow_up_is_detected():
    spec = McKeanSpec(kernel_library("custom-polynomial", coeffs=[[0.0], [0.0], [0.0], [5.0]]), 0.0, DistributionSpec.dirac(3.0), 1.0, 0.1)
    with pytest.raises(NumericalFailure):
        simulate_interacting(spec, 5, 0)


def test_preconditions_and_budget():
    with pytest.raises(InvalidArgument):
        McKeanSpec(kernel_library("zero"), 1.0, DistributionSpec.dirac(0.0), 1.0, 0.3)
    with pytest.raises(InvalidArgument):
        McKeanSpec(kernel_library("zero"), -1.0)
    with pytest.raises(InvalidArgument):
        kernel_library("unknown")
    spec = McKeanSpec(kernel_library("linear_pull"), 1.0, DistributionSpec.normal(), 1.0, 0.05)
    with pytest.raises(NonConvergence) as err:
        solve_nonlinear(spec, 500, tol=1e-14, max_iter=2)
    assert len(err.value.history) == 2


def test_chaos_gap_shrinks_with_population():
    spec = McKeanSpec(kernel_library("linear_pull"), 1.0, DistributionSpec.normal(), 1.0, 0.05)
    sol = solve_nonlinear(spec, 40000, seed=2)
    gaps = [np.median([chaos_gap(simulate_interacting(spec, n, s), sol, 1.0) for s in range(7)]) for n in (100, 1600)]
    assert gaps[1] < gaps[0] / 2.5
    with pytest.raises(InvalidArgument):
        chaos_gap(simulate_interacting(spec, 10, 0), sol, 0.333)
