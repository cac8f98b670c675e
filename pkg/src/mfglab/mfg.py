"""Mean-field game equilibria for a one-dimensional representative agent.

State ``dX = (b0(t, mu_t) + b1(t) X + b2(t) a) dt + sigma dW`` with ``a`` in a
compact interval, cost ``E[int_0^T f(t, X, mu_t, a) dt + g(X_T, mu_T)]`` and
the consistency condition ``mu_t = law(X_t)``.

Two routes to an equilibrium:

* :func:`mfg_picard` -- Pontryagin.  For a frozen flow the adjoint
  ``dY = -H_x dt + Z dW``, ``Y_T = g_x(X_T, mu_T)`` is decoupled by
  ``Y = u(t, X)``; ``u`` solves a quasilinear PDE and the optimally controlled
  particles give the next flow.  Damped Picard iteration on particle flows.
* :func:`hjb_fp_solve` -- dynamic programming.  Value function by an implicit
  upwind HJB scheme with policy iteration, density by the adjoint scheme for
  the Fokker-Planck equation, damped iteration on densities.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special
from scipy.linalg import solve_banded

from .errors import InvalidArgument, NonConvergence, NumericalFailure
from .fbsde import BsdeSpec, FbsdeSolution, GridFunction, solve_quasilinear_pde
from .measures import DistributionSpec, EmpiricalMeasure, MeasureFlow, empirical_from_samples, w1_sorted
from .rng import step_normals, substream


def _no_drift(t, m):
    return 0.0


def _zero(t):
    return 0.0


def _one(t):
    return 1.0


@dataclass(frozen=True, eq=False)
class MfgProblem:
    f: Callable  # (t, x, m, a) -> running cost
    g: Callable  # (x, m) -> terminal cost
    sigma: float
    action_interval: tuple
    mu0: DistributionSpec
    T: float = 1.0
    b0: Callable = _no_drift  # (t, m) -> drift offset
    b1: Callable = _zero
    b2: Callable = _one
    f_x: Callable | None = None
    f_a: Callable | None = None
    g_x: Callable | None = None
    action_cost: float | None = None  # f = r a^2 / 2 + (terms free of a) gives a closed-form minimizer
    lam: float = 0.5  # strong convexity of f in a
    c_L: float = 1.0
    c_B: float = 1.0
    x_domain: tuple | None = None
    name: str = "custom"

    def __post_init__(self):
        lo, hi = self.action_interval
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise InvalidArgument("action interval must be nonempty and bounded")
        if not self.sigma > 0:
            raise InvalidArgument("sigma must be positive")
        if not self.T > 0:
            raise InvalidArgument("T must be positive")
        if not self.lam > 0:
            raise InvalidArgument("convexity constant lam must be positive")
        self._spot_check_convexity()

    def _spot_check_convexity(self, trials: int = 20):
        rng = substream(0, "convexity-check")
        lo, hi = self.action_interval
        if hi - lo < 1e-9:
            return
        m = empirical_from_samples(self.mu0.ppf((np.arange(32) + 0.5) / 32))
        x = m.points[rng.integers(0, m.size, trials)]
        t = rng.uniform(0, self.T, trials)
        a, b = rng.uniform(lo, hi, (2, trials))
        for ti, xi, ai, bi in zip(t, x, a, b):
            gap = self.f(ti, xi, m, bi) - self.f(ti, xi, m, ai) - _f_a(self, ti, xi, m, ai) * (bi - ai)
            if gap < self.lam * (bi - ai) ** 2 - 1e-6 * (1 + abs(gap)):
                raise InvalidArgument(f"running cost is not {self.lam}-strongly convex in the action")

    def domain(self) -> tuple[float, float]:
        if self.x_domain is not None:
            return tuple(self.x_domain)
        q = self.mu0.ppf(np.array([1e-6, 1 - 1e-6]))
        margin = 6 * self.sigma * np.sqrt(self.T) + 2.0
        return float(q[0] - margin), float(q[1] + margin)


@dataclass(eq=False)
class AgentSolution(FbsdeSolution):
    a_paths: np.ndarray = None
    vi_margins: np.ndarray | None = None  # J(a) - J(a_hat) - lam E int |a - a_hat|^2
    vi_tolerance: float = 0.0


@dataclass(eq=False)
class MfgEquilibrium:
    flow: MeasureFlow
    decoupling_field: GridFunction
    control_field: np.ndarray  # a_hat on the (t, x) grid of the decoupling field
    residual_history: list
    iterations: int
    consistency_gap: float
    samples: np.ndarray  # (nodes, particles), sorted per node
    flagged: bool  # residuals not monotone after the second iteration
    metadata: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Hamiltonian


def _f_a(p: MfgProblem, t, x, m, a):
    if p.f_a is not None:
        return p.f_a(t, x, m, a)
    h = 1e-6 * (1 + np.abs(a))
    return (p.f(t, x, m, a + h) - p.f(t, x, m, a - h)) / (2 * h)


def _f_x(p: MfgProblem, t, x, m, a):
    if p.f_x is not None:
        return p.f_x(t, x, m, a)
    h = 1e-6 * (1 + np.abs(x))
    return (p.f(t, x + h, m, a) - p.f(t, x - h, m, a)) / (2 * h)


def _g_x(p: MfgProblem, x, m):
    if p.g_x is not None:
        return p.g_x(x, m)
    h = 1e-6 * (1 + np.abs(x))
    return (p.g(x + h, m) - p.g(x - h, m)) / (2 * h)


def drift(p: MfgProblem, t, x, m, a):
    return p.b0(t, m) + p.b1(t) * np.asarray(x) + p.b2(t) * np.asarray(a)


def hamiltonian(p: MfgProblem, t, x, mu: EmpiricalMeasure, y, a):
    """``H = b(t, x, mu, a) y + f(t, x, mu, a)``."""
    lo, hi = p.action_interval
    a_arr = np.asarray(a, float)
    if np.any(a_arr < lo - 1e-12) or np.any(a_arr > hi + 1e-12):
        raise InvalidArgument(f"action outside [{lo}, {hi}]")
    return drift(p, t, x, mu, a) * y + p.f(t, x, mu, a)


def argmin_hamiltonian(p: MfgProblem, t, x, mu: EmpiricalMeasure, y):
    """Unique minimizer of ``a -> H(t, x, mu, y, a)`` over the action interval.

    The derivative ``b2 y + f_a`` is increasing by strong convexity, so it is
    bisected after checking the interval ends.
    """
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    lo, hi = p.action_interval
    b2 = p.b2(t)
    if p.action_cost is not None:
        a = np.clip(-b2 * y / p.action_cost, lo, hi)
        return float(a) if scalar else a
    a_lo, a_hi = np.full(x.shape, lo, float), np.full(x.shape, hi, float)
    d_lo = b2 * y + _f_a(p, t, x, mu, a_lo)
    d_hi = b2 * y + _f_a(p, t, x, mu, a_hi)
    at_lo, at_hi = d_lo >= 0, d_hi <= 0
    for _ in range(64):
        mid = 0.5 * (a_lo + a_hi)
        d = b2 * y + _f_a(p, t, x, mu, mid)
        up = d < 0
        a_lo = np.where(up, mid, a_lo)
        a_hi = np.where(up, a_hi, mid)
    a = np.where(at_lo, lo, np.where(at_hi, hi, 0.5 * (a_lo + a_hi)))
    return float(a) if scalar else a


def hamiltonian_x(p: MfgProblem, t, x, mu, y, a):
    return p.b1(t) * y + _f_x(p, t, x, mu, a)


# --------------------------------------------------------------------------
# agent problem under a frozen flow


def _node_of(times: np.ndarray, t: float) -> int:
    return int(round(t / (times[1] - times[0])))


def agent_spec(p: MfgProblem, flow: MeasureFlow) -> BsdeSpec:
    """Adjoint FBSDE of the agent facing ``flow`` (driver ``-H_x`` at ``a_hat``)."""
    times, ms = flow.times, flow.measures
    if times.size < 2 or abs(times[-1] - p.T) > 1e-9:
        raise InvalidArgument("flow must cover [0, T] with at least one step")

    def b(t, x, y, z):
        m = ms[_node_of(times, t)]
        return drift(p, t, x, m, argmin_hamiltonian(p, t, x, m, y))

    def h(t, x, y, z):
        m = ms[_node_of(times, t)]
        return -hamiltonian_x(p, t, x, m, y, argmin_hamiltonian(p, t, x, m, y))

    return BsdeSpec(
        b=b,
        sigma=lambda t, x, y: p.sigma + 0 * x,
        h=h,
        g=lambda x: _g_x(p, x, ms[-1]),
        x0=p.mu0.mean(),
        T=p.T,
        x_domain=p.domain(),
        name=f"agent:{p.name}",
    )


def initial_particles(p: MfgProblem, n: int) -> np.ndarray:
    """Mid-rank quantiles of the initial law (exact mean for symmetric laws)."""
    return np.asarray(p.mu0.ppf((np.arange(n) + 0.5) / n), float)


def _antithetic(seed, k, n, tag):
    half = step_normals(seed, k, (n + 1) // 2, tag)
    return np.concatenate([half, -half])[:n]


def simulate_policy(p: MfgProblem, flow: MeasureFlow, policy: Callable, x0: np.ndarray, seed: int, tag: str):
    """Controlled Euler paths against a frozen flow.

    ``policy(k, x)`` returns actions at node ``k``.  Returns ``(X, A, cost)``
    with per-path costs by the left-point rule.
    """
    times, ms = flow.times, flow.measures
    nt = times.size - 1
    n = x0.size
    X = np.empty((n, nt + 1))
    A = np.empty((n, nt))
    X[:, 0] = x0
    cost = np.zeros(n)
    for k in range(nt):
        dt = times[k + 1] - times[k]
        x = X[:, k]
        a = policy(k, x)
        A[:, k] = a
        cost += p.f(times[k], x, ms[k], a) * dt
        X[:, k + 1] = x + drift(p, times[k], x, ms[k], a) * dt + p.sigma * np.sqrt(dt) * _antithetic(seed, k, n, tag)
        if not np.all(np.isfinite(X[:, k + 1])):
            raise NumericalFailure(f"controlled paths blew up at step {k + 1}")
    cost += p.g(X[:, -1], ms[-1])
    return X, A, cost


def feedback(p: MfgProblem, flow: MeasureFlow, theta: GridFunction) -> Callable:
    times, ms = flow.times, flow.measures
    return lambda k, x: argmin_hamiltonian(p, times[k], x, ms[k], theta.at(k, x))


def solve_agent_fbsde(
    p: MfgProblem,
    flow: MeasureFlow,
    nx: int = 401,
    paths: int = 2000,
    seed: int = 0,
    vi_samples: int = 0,
) -> AgentSolution:
    """Optimal response to a frozen flow through the decoupling field ``u``.

    With ``vi_samples > 0`` the variational inequality
    ``J(a_hat) + lam E int |a - a_hat|^2 <= J(a)`` is evaluated for that many
    random Markov perturbations, all sharing the noise of the optimal run.
    """
    nt = flow.times.size - 1
    theta = solve_quasilinear_pde(agent_spec(p, flow), nt, nx, p.domain())
    policy = feedback(p, flow, theta)
    x0 = initial_particles(p, paths)
    X, A, cost = simulate_policy(p, flow, policy, x0, seed, "agent")
    Y = np.stack([theta.at(k, X[:, k]) for k in range(nt + 1)], axis=1)
    Z = p.sigma * np.stack([theta.dx_at(k, X[:, k]) for k in range(nt + 1)], axis=1)
    gT = _g_x(p, X[:, -1], flow.measures[-1])
    sol = AgentSolution(
        theta, X, Y, Z, float(Y[:, 0].mean()), float(np.mean(np.abs(Y[:, -1] - gT))), float("nan"), A
    )
    if vi_samples:
        sol.vi_margins, sol.vi_tolerance = _variational_margins(p, flow, policy, x0, cost, A, vi_samples, seed)
    return sol


def _variational_margins(p, flow, policy, x0, base_cost, base_A, count, seed):
    rng = substream(seed, "perturbations")
    lo, hi = p.action_interval
    times = flow.times
    dt = np.diff(times)
    margins = np.empty(count)
    errs = np.empty(count)
    for j in range(count):
        c0, c1, c2 = rng.normal(0, 0.3, 3)
        freq = rng.integers(1, 4)

        def perturbed(k, x, c0=c0, c1=c1, c2=c2, freq=freq):
            bump = c0 + c1 * np.sin(np.pi * freq * times[k] / p.T) + c2 * np.tanh(x - x0.mean())
            return np.clip(policy(k, x) + bump, lo, hi)

        X, A, cost = simulate_policy(p, flow, perturbed, x0, seed, "agent")
        # distance between the two control processes along their own paths
        pen = p.lam * (((A - base_A) ** 2) @ dt)
        diff = cost - base_cost - pen
        margins[j] = diff.mean()
        errs[j] = diff.std() / np.sqrt(diff.size)
    return margins, 4 * float(errs.max())


# --------------------------------------------------------------------------
# damped Picard on particle flows


def _mix_sorted(old: np.ndarray, new: np.ndarray, delta: float) -> np.ndarray:
    """Resample ``(1 - delta) old + delta new`` per node onto equal atoms.

    Atom ``i`` is the mean of the mixture quantile function over
    ``[i / n, (i + 1) / n]``, the W2-closest equal-weight measure.  Unlike
    mid-rank picks it has no one-sided rounding at the CDF jumps, so the
    damped iteration keeps the fixed points of the undamped map.
    """
    if delta >= 1:
        return new.copy()
    n = old.shape[1]
    x = np.concatenate([old, new], axis=1)
    w = np.concatenate([np.full(n, (1 - delta) / n), np.full(n, delta / n)])
    order = np.argsort(x, axis=1, kind="stable")
    xs = np.take_along_axis(x, order, axis=1)
    ws = w[order]
    cum = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(ws, axis=1)], axis=1)
    area = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(ws * xs, axis=1)], axis=1)
    cum[:, -1] = 1.0
    levels = np.linspace(0.0, 1.0, n + 1)
    out = np.empty_like(old)
    for k in range(x.shape[0]):
        out[k] = np.diff(np.interp(levels, cum[k], area[k])) * n
    return out


def _bounds_metadata(p: MfgProblem, theta: GridFunction, control: np.ndarray) -> dict:
    x = theta.x_grid
    u = theta.values
    c_growth = float(np.max(np.abs(u) / (1 + np.abs(x))))
    c_lip = float(np.max(np.abs(np.diff(u, axis=1))) / theta.dx)
    c = max(c_growth, c_lip)
    bound = p.c_L / p.lam * (1 + float(np.max(np.abs(u))))
    return {
        "u_growth_constant": c_growth,
        "u_lipschitz_constant": c_lip,
        "u_constant": c,
        "control_bound": bound,
        "control_bound_holds": bool(np.max(np.abs(control)) <= bound + 1e-12),
    }


def control_on_grid(p: MfgProblem, flow: MeasureFlow, theta: GridFunction) -> np.ndarray:
    return np.stack(
        [argmin_hamiltonian(p, t, theta.x_grid, m, theta.values[k]) for k, (t, m) in enumerate(zip(flow.times, flow.measures))]
    )


def mfg_picard(
    p: MfgProblem,
    damping: float = 1.0,
    tol: float = 1e-5,
    max_iters: int = 200,
    seed: int = 0,
    nt: int = 100,
    nx: int = 401,
    particles: int = 2000,
    fictitious_play: bool = False,
) -> MfgEquilibrium:
    """Fixed point of ``mu -> law(X^mu)`` by damped Picard iteration.

    Each round solves the agent problem against the current flow, simulates
    ``particles`` optimally controlled paths (mid-rank initial quantiles,
    antithetic noise shared across rounds) and mixes the new flow into the
    old one with weight ``damping`` (``1 / (round + 1)`` under fictitious play).
    """
    if not 0 < damping <= 1:
        raise InvalidArgument("damping must lie in (0, 1]")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    times = np.linspace(0.0, p.T, nt + 1)
    x0 = initial_particles(p, particles)
    old = np.repeat(x0[None, :], nt + 1, axis=0)
    residuals = []
    for it in range(max_iters):
        flow = MeasureFlow.from_samples(times, old)
        theta = solve_quasilinear_pde(agent_spec(p, flow), nt, nx, p.domain())
        X, _, _ = simulate_policy(p, flow, feedback(p, flow, theta), x0, seed, "picard")
        new = np.sort(X.T, axis=1)
        res = max(w1_sorted(new[k], old[k]) for k in range(nt + 1))
        residuals.append(res)
        if res <= tol:
            control = control_on_grid(p, flow, theta)
            flagged = any(b > a * (1 + 1e-9) + 1e-15 for a, b in zip(residuals[1:], residuals[2:]))
            return MfgEquilibrium(
                MeasureFlow.from_samples(times, new),
                theta,
                control,
                residuals,
                len(residuals) - 1,
                res,
                new,
                flagged,
                {"nx": nx, "particles": particles, "damping": damping, **_bounds_metadata(p, theta, control)},
            )
        delta = 1.0 / (it + 2) if fictitious_play else damping
        old = _mix_sorted(old, new, delta)
    raise NonConvergence(f"Picard on the measure flow did not reach tol={tol}", residuals)


def particle_floor(eq: MfgEquilibrium) -> float:
    """Sampling resolution of a particle flow: sup_t W1 between its two halves."""
    s = eq.samples
    return max(w1_sorted(row[0::2], row[1::2]) for row in s)


# --------------------------------------------------------------------------
# HJB - Fokker-Planck on a grid


def _generator(bb, sigma, dx):
    """Reflecting Markov-chain generator for drift ``bb`` and volatility ``sigma``.

    Exponentially fitted rates ``D B(-+Pe) / dx^2`` with the Bernoulli function
    ``B(z) = z / (e^z - 1)``: positive for every drift, central in the
    diffusive regime, upwind in the advective one, and smooth in ``bb`` so
    that policy iteration does not chatter between stencils.
    """
    D = 0.5 * sigma**2
    pe = bb * dx / D
    lower = D / dx**2 * special.exprel(pe) ** -1
    upper = D / dx**2 * special.exprel(-pe) ** -1
    lower[0] = 0.0
    upper[-1] = 0.0
    return lower, -(lower + upper), upper


def _banded(lower, diag, upper, dt, transpose):
    n = diag.size
    ab = np.zeros((3, n))
    if transpose:
        ab[0, 1:] = -dt * lower[1:]
        ab[2, :-1] = -dt * upper[:-1]
    else:
        ab[0, 1:] = -dt * upper[:-1]
        ab[2, :-1] = -dt * lower[1:]
    ab[1] = 1 - dt * diag
    return ab


def project_to_grid(dist: DistributionSpec, x: np.ndarray) -> np.ndarray:
    """Node masses of ``dist``: atoms split linearly between neighbours (mean
    preserving), continuous laws by cell probabilities."""
    dx = x[1] - x[0]
    m = dist.as_measure()
    out = np.zeros(x.size)
    if m is not None:
        pos = np.clip((m.points - x[0]) / dx, 0, x.size - 1)
        i = np.minimum(np.floor(pos).astype(int), x.size - 2)
        w = pos - i
        np.add.at(out, i, m.weights * (1 - w))
        np.add.at(out, i + 1, m.weights * w)
        return out
    edges = np.concatenate([[-np.inf], 0.5 * (x[1:] + x[:-1]), [np.inf]])
    out = np.diff(dist.cdf(edges))
    return out / out.sum()


def grid_measure(x: np.ndarray, masses: np.ndarray) -> EmpiricalMeasure:
    return EmpiricalMeasure.from_atoms(x, np.maximum(masses, 0.0))


def grid_w1(a: np.ndarray, b: np.ndarray, dx: float) -> float:
    """W1 between two mass vectors on the same uniform grid."""
    return float(np.sum(np.abs(np.cumsum(a - b))) * dx)


def fokker_planck(x: np.ndarray, times: np.ndarray, drift_field: np.ndarray, sigma: float, m0: np.ndarray) -> np.ndarray:
    """Masses ``m[n]`` from ``(I - dt L_n^T) m[n+1] = m[n]``.

    Columns of ``I - dt L^T`` sum to one, so mass is conserved exactly, and
    the matrix is an M-matrix, so masses stay nonnegative.
    """
    dx = x[1] - x[0]
    M = np.empty((times.size, x.size))
    M[0] = m0
    for n in range(times.size - 1):
        dt = times[n + 1] - times[n]
        lw, dg, up = _generator(drift_field[n], sigma, dx)
        M[n + 1] = np.maximum(solve_banded((1, 1), _banded(lw, dg, up, dt, True), M[n]), 0.0)
    return M


@dataclass(eq=False)
class HjbFpResult:
    value: GridFunction
    flow: MeasureFlow
    densities: np.ndarray  # node masses (nodes, nx)
    policy: np.ndarray  # (steps, nx) actions used on [t_n, t_{n+1})
    residual_history: list
    mass_drift: float  # max per-step change of total mass

    def __iter__(self):
        return iter((self.value, self.flow))


def _value_gradient(v, dx):
    # boundary nodes reflect, so their policy follows the neighbouring interior node
    g = np.gradient(v, dx)
    g[0], g[-1] = g[1], g[-2]
    return g


def solve_hjb(p: MfgProblem, x: np.ndarray, times: np.ndarray, measures, max_policy_iter: int = 50, tol: float = 1e-10):
    """Implicit upwind HJB with policy iteration; returns ``(values, policy)``."""
    dx = x[1] - x[0]
    nt = times.size - 1
    V = np.empty((nt + 1, x.size))
    V[-1] = p.g(x, measures[-1])
    pol = np.empty((nt, x.size))
    for n in range(nt - 1, -1, -1):
        t, m = times[n], measures[n]
        dt = times[n + 1] - t
        v = V[n + 1]
        a = argmin_hamiltonian(p, t, x, m, _value_gradient(v, dx))
        for _ in range(max_policy_iter):
            lw, dg, up = _generator(drift(p, t, x, m, a) * np.ones_like(x), p.sigma, dx)
            v = solve_banded((1, 1), _banded(lw, dg, up, dt, False), V[n + 1] + dt * p.f(t, x, m, a))
            a_new = argmin_hamiltonian(p, t, x, m, _value_gradient(v, dx))
            if np.max(np.abs(a_new - a)) <= tol:
                a = a_new
                break
            a = a_new
        else:
            raise NonConvergence(f"policy iteration stalled at t={t:.6g}")
        V[n], pol[n] = v, a
    return V, pol


def hjb_fp_solve(
    p: MfgProblem,
    nt: int = 100,
    nx: int = 201,
    damping: float = 0.5,
    tol: float = 1e-6,
    max_iters: int = 500,
    x_domain: tuple | None = None,
) -> HjbFpResult:
    """Coupled HJB / Fokker-Planck iteration with damping on the densities."""
    if not 0 < damping <= 1:
        raise InvalidArgument("damping must lie in (0, 1]")
    lo, hi = x_domain or p.domain()
    x = np.linspace(lo, hi, nx)
    dx = x[1] - x[0]
    times = np.linspace(0.0, p.T, nt + 1)
    m0 = project_to_grid(p.mu0, x)
    D = np.repeat(m0[None, :], nt + 1, axis=0)
    residuals = []
    for _ in range(max_iters):
        measures = [grid_measure(x, d) for d in D]
        V, pol = solve_hjb(p, x, times, measures)
        field_ = np.stack([drift(p, times[n], x, measures[n], pol[n]) * np.ones_like(x) for n in range(nt)])
        D_new = fokker_planck(x, times, field_, p.sigma, m0)
        res = max(grid_w1(D_new[k], D[k], dx) for k in range(nt + 1))
        residuals.append(res)
        if res <= tol:
            mass = D_new.sum(axis=1)
            return HjbFpResult(
                GridFunction(times, x, V, "reflecting"),
                MeasureFlow(times, tuple(grid_measure(x, d) for d in D_new)),
                D_new,
                pol,
                residuals,
                float(np.max(np.abs(np.diff(mass)))),
            )
        D = (1 - damping) * D + damping * D_new
    raise NonConvergence(f"HJB-FP iteration did not reach tol={tol}", residuals)


# --------------------------------------------------------------------------
# epsilon-Nash quality in the N-player game


@dataclass
class EpsilonEstimate:
    N: int
    epsilon: float
    gain_mean: float
    std_error: float
    ci_low: float
    ci_high: float


def epsilon_nash_estimate(
    p: MfgProblem,
    eq: MfgEquilibrium,
    N: int,
    deviation_budget: int = 2000,
    seed: int = 0,
    deviation: str = "best",
) -> EpsilonEstimate:
    """Gain of the best Markov deviation of one player in the ``N``-player game.

    All ``N`` players use the equilibrium feedback; the deviating player
    best-responds to the realized empirical flow, which is held fixed.  Both
    policies are then costed on ``deviation_budget`` copies of the tagged
    player sharing the same noise.
    """
    if N < 2:
        raise InvalidArgument("need at least two players")
    if deviation not in ("best", "equilibrium"):
        raise InvalidArgument("deviation must be 'best' or 'equilibrium'")
    times = eq.flow.times
    nt = times.size - 1
    x0 = p.mu0.sample(substream(seed, "players-x0"), N)
    eq_policy = feedback(p, eq.flow, eq.decoupling_field)
    X, _, _ = simulate_players(p, eq.flow, eq_policy, x0, seed)
    realized = MeasureFlow.from_samples(times, X.T)

    def on_realized(theta):
        return lambda k, x: argmin_hamiltonian(p, times[k], x, realized.measures[k], theta.at(k, x))

    if deviation == "best":
        theta_dev = solve_quasilinear_pde(agent_spec(p, realized), nt, eq.metadata.get("nx", 401), p.domain())
        dev_policy = on_realized(theta_dev)
    else:
        dev_policy = eq_policy
    copies = p.mu0.sample(substream(seed, "tagged-x0"), deviation_budget)
    _, _, j_eq = simulate_policy(p, realized, eq_policy, copies, seed, "tagged")
    _, _, j_dev = simulate_policy(p, realized, dev_policy, copies, seed, "tagged")
    gain = j_eq - j_dev
    mean = float(gain.mean())
    se = float(gain.std() / np.sqrt(gain.size))
    return EpsilonEstimate(N, max(0.0, mean), mean, se, mean - 1.96 * se, mean + 1.96 * se)


def simulate_players(p: MfgProblem, flow: MeasureFlow, policy: Callable, x0: np.ndarray, seed: int):
    """``N`` players with independent noises, each using ``policy``."""
    times = flow.times
    n = x0.size
    X = np.empty((n, times.size))
    X[:, 0] = x0
    A = np.empty((n, times.size - 1))
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        x = X[:, k]
        a = policy(k, x)
        A[:, k] = a
        m = empirical_from_samples(x)
        X[:, k + 1] = x + drift(p, times[k], x, m, a) * dt + p.sigma * np.sqrt(dt) * step_normals(seed, k, n, "players")
    return X, A, None


# --------------------------------------------------------------------------
# presets


def lq_mean_field(kappa=1.0, terminal_weight=1.0, target=0.0, sigma=0.3, m0=1.0, s0=0.2, T=1.0, a_max=10.0, x_domain=(-4.0, 6.0)) -> MfgProblem:
    """``f = a^2/2 + kappa (x - mean mu_t)^2 / 2``, ``b = a``,
    ``g = terminal_weight (x - target)^2 / 2``."""
    return MfgProblem(
        f=lambda t, x, m, a: 0.5 * a**2 + 0.5 * kappa * (x - m.mean()) ** 2,
        g=lambda x, m: 0.5 * terminal_weight * (x - target) ** 2,
        f_x=lambda t, x, m, a: kappa * (x - m.mean()),
        f_a=lambda t, x, m, a: a,
        g_x=lambda x, m: terminal_weight * (x - target),
        sigma=sigma,
        action_interval=(-a_max, a_max),
        mu0=DistributionSpec.normal(m0, s0),
        T=T,
        action_cost=1.0,
        lam=0.5,
        c_L=1.0,
        c_B=1.0,
        x_domain=x_domain,
        name="lq_mean_field",
    )


def lq_mean_path(kappa, terminal_weight, target, m0, T, times):
    """Equilibrium mean of :func:`lq_mean_field`: the affine decoupling field
    ``u = eta x + chi`` keeps ``eta m + chi`` constant along the flow, which
    pins the mean to a straight line."""
    psi = terminal_weight * (m0 - target) / (1 + terminal_weight * T)
    return m0 - psi * np.asarray(times)


def crowd_aversion(kappa=1.0, radius=0.5, terminal_weight=1.0, target=0.0, sigma=0.3, m0=0.0, s0=0.3, T=1.0, a_max=3.0, x_domain=(-3.5, 3.5)) -> MfgProblem:
    """Agents pay ``kappa`` times the (Gaussian-smoothed) share of the crowd
    within ``radius`` of their position, ``F(x + r) - F(x - r)``."""

    tables = weakref.WeakKeyDictionary()

    def table(m):
        # window and its slope tabulated per measure; atoms are linearly
        # binned first so the pairwise sum stays small for large samples
        if m not in tables:
            lo, hi = m.points[0] - 4 * radius, m.points[-1] + 4 * radius
            nodes = np.linspace(m.points[0], m.points[-1] + 1e-12, 400)
            h = nodes[1] - nodes[0]
            j = np.clip(((m.points - nodes[0]) / h).astype(int), 0, nodes.size - 2)
            frac = (m.points - nodes[j]) / h
            mass = np.bincount(j, m.weights * (1 - frac), nodes.size) + np.bincount(j + 1, m.weights * frac, nodes.size)
            grid = np.linspace(lo, hi, 1024)
            d = (grid[:, None] - nodes) / radius
            w = (special.ndtr(d + 1) - special.ndtr(d - 1)) @ mass
            phi = (np.exp(-0.5 * (d + 1) ** 2) - np.exp(-0.5 * (d - 1) ** 2)) @ mass
            tables[m] = (grid, w, phi / (np.sqrt(2 * np.pi) * radius))
        return tables[m]

    def window(x, m):
        grid, w, _ = table(m)
        return np.interp(x, grid, w, left=0.0, right=0.0)

    def window_x(x, m):
        grid, _, dw = table(m)
        return np.interp(x, grid, dw, left=0.0, right=0.0)

    return MfgProblem(
        f=lambda t, x, m, a: 0.5 * a**2 + kappa * window(x, m),
        g=lambda x, m: 0.5 * terminal_weight * (x - target) ** 2,
        f_x=lambda t, x, m, a: kappa * window_x(x, m),
        f_a=lambda t, x, m, a: a,
        g_x=lambda x, m: terminal_weight * (x - target),
        sigma=sigma,
        action_interval=(-a_max, a_max),
        mu0=DistributionSpec.normal(m0, s0),
        T=T,
        action_cost=1.0,
        lam=0.5,
        x_domain=x_domain,
        name="crowd_aversion",
    )
