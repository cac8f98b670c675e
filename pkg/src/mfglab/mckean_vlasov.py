"""Interacting diffusions and the McKean-Vlasov limit.

The ``N``-particle system

    dX^i = (1/N) sum_j b(X^i, X^j) dt + sigma dW^i

is integrated by Euler-Maruyama.  Its limit, the nonlinear process
``dX = [int b(X, y) mu_t(dy)] dt + sigma dW`` with ``mu_t = law(X_t)``, is
computed by Picard iteration on the measure flow with common random numbers,
so successive residuals measure the change of the drift and not resampling
noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument, NonConvergence, NumericalFailure
from .measures import DistributionSpec, EmpiricalMeasure, MeasureFlow, empirical_from_samples, w1_sorted, wasserstein1
from .rng import step_normals, substream

BLOWUP = 1e8


@dataclass(frozen=True, eq=False)
class DriftKernel:
    """Pairwise drift ``b(x, y)``.

    Polynomial kernels ``sum_ij c[i, j] x^i y^j`` carry their coefficient
    matrix; the mean-field average then only needs the moments of the
    measure, which is exact and O(N).  Other kernels are averaged by direct
    summation.
    """

    b_bar: Callable
    lipschitz_bound: float
    coeffs: np.ndarray | None = None
    name: str = "custom"

    @classmethod
    def polynomial(cls, coeffs, name: str = "polynomial") -> "DriftKernel":
        c = np.atleast_2d(np.asarray(coeffs, float))

        def b(x, y):
            x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
            return np.polynomial.polynomial.polyval2d(x, y, c)

        # a global Lipschitz constant only exists for affine kernels
        lip = max(abs(c[1, 0]) if c.shape[0] > 1 else 0.0, abs(c[0, 1]) if c.shape[1] > 1 else 0.0)
        affine = all(i + j <= 1 for i, j in np.argwhere(c != 0))
        return cls(b, lip if affine else np.inf, c, name)

    def statistics(self, points: np.ndarray) -> np.ndarray:
        """What the drift needs to know about a measure given by equal atoms."""
        if self.coeffs is None:
            return np.asarray(points, float)
        x = np.asarray(points, float)
        out = np.ones(self.coeffs.shape[1])
        p = np.ones_like(x)
        for j in range(1, out.size):
            p = p * x
            out[j] = p.mean()
        return out

    def mean_drift(self, x: np.ndarray, stats: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """``int b(x, y) mu(dy)`` for each entry of ``x``."""
        x = np.asarray(x, float)
        if self.coeffs is not None:
            return np.polynomial.polynomial.polyval(x, self.coeffs @ stats)
        out = np.empty_like(x)
        for s in range(0, x.size, chunk):
            xs = x[s : s + chunk]
            out[s : s + chunk] = np.mean(self.b_bar(xs[:, None], stats[None, :]), axis=1)
        return out


def kernel_library(name: str, **params) -> DriftKernel:
    """Named kernels: ``zero``, ``linear_pull`` (``k (y - x)``), ``ou`` (``-k x``),
    ``polynomial`` (``coeffs``), ``tanh_pull`` (``k tanh(y - x)``, bounded)."""
    k = float(params.get("strength", 1.0))
    if name == "zero":
        return DriftKernel.polynomial([[0.0]], "zero")
    if name == "linear_pull":
        return DriftKernel.polynomial([[0.0, k], [-k, 0.0]], "linear_pull")
    if name == "ou":
        return DriftKernel.polynomial([[0.0], [-k]], "ou")
    if name in ("polynomial", "custom-polynomial"):
        return DriftKernel.polynomial(params["coeffs"], "polynomial")
    if name == "tanh_pull":
        return DriftKernel(lambda x, y: k * np.tanh(y - x), abs(k), None, "tanh_pull")
    raise InvalidArgument(f"unknown kernel {name!r}")


@dataclass(frozen=True)
class McKeanSpec:
    kernel: DriftKernel
    sigma: float = 1.0
    mu0: DistributionSpec = field(default_factory=lambda: DistributionSpec.dirac(0.0))
    T: float = 1.0
    dt: float = 1e-2

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InvalidArgument("sigma must be nonnegative")
        if not (self.dt > 0 and self.T > 0):
            raise InvalidArgument("T and dt must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise InvalidArgument("dt must divide T")

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)


@dataclass(eq=False)
class ParticleEnsemble:
    times: np.ndarray
    states: np.ndarray  # (N, steps + 1)
    seed: int
    noise_max: float = 0.0  # max_t |sigma W_t| over particles, for pathwise bounds

    def measure_at(self, t: float) -> EmpiricalMeasure:
        return empirical_from_samples(self.states[:, _node(self.times, t)])


@dataclass(eq=False)
class NonlinearProcessSolution:
    flow: MeasureFlow
    picard_residuals: list
    iterations: int
    samples: np.ndarray  # (M, nodes) particle positions at the flow nodes


def _node(times: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-9:
        raise InvalidArgument(f"t={t} is not on the time grid")
    return i


def _initial(spec: McKeanSpec, n: int, seed: int, tag: str) -> np.ndarray:
    return spec.mu0.sample(substream(seed, "x0", tag), n)


def simulate_interacting(spec: McKeanSpec, N: int, seed: int) -> ParticleEnsemble:
    """Euler-Maruyama for the ``N``-particle system (independent noises)."""
    if N < 1:
        raise InvalidArgument("N must be at least 1")
    n, dt = spec.steps, spec.dt
    X = np.empty((n + 1, N))
    X[0] = _initial(spec, N, seed, "particles")
    sq = spec.sigma * np.sqrt(dt)
    W = np.zeros(N)
    w_max = 0.0
    for k in range(n):
        x = X[k]
        dW = sq * step_normals(seed, k, N, "particles")
        X[k + 1] = x + spec.kernel.mean_drift(x, spec.kernel.statistics(x)) * dt + dW
        if not np.all(np.abs(X[k + 1]) < BLOWUP):
            raise NumericalFailure(f"particle blow-up at step {k + 1} (t={(k + 1) * dt:g})")
        W += dW
        w_max = max(w_max, float(np.abs(W).max()))
    return ParticleEnsemble(spec.times, X.T.copy(), seed, w_max)


def solve_nonlinear(
    spec: McKeanSpec,
    M: int,
    tol: float = 1e-8,
    seed: int = 0,
    max_iter: int = 50,
    flow_every: int = 1,
) -> NonlinearProcessSolution:
    """Picard iteration ``mu <- law(X^mu)`` with an ``M``-particle representation.

    The flow is recorded every ``flow_every`` steps; residuals are
    ``sup W1`` over those nodes.
    """
    if M < 10:
        raise InvalidArgument("M must be at least 10")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    n, dt = spec.steps, spec.dt
    nodes = np.arange(0, n + 1, flow_every)
    if nodes[-1] != n:
        nodes = np.append(nodes, n)
    x0 = _initial(spec, M, seed, "nonlinear")
    sq = spec.sigma * np.sqrt(dt)
    kern = spec.kernel

    stats0 = kern.statistics(x0)
    old_stats = [stats0] * (n + 1)
    old_nodes = np.repeat(x0[:, None], nodes.size, axis=1)
    residuals = []
    for it in range(max_iter):
        x = x0.copy()
        new_stats = [kern.statistics(x)]
        new_nodes = np.empty_like(old_nodes)
        new_nodes[:, 0] = x
        j = 1
        for k in range(n):
            x = x + kern.mean_drift(x, old_stats[k]) * dt + sq * step_normals(seed, k, M, "nonlinear")
            if not np.all(np.abs(x) < BLOWUP):
                raise NumericalFailure(f"blow-up at step {k + 1} of Picard iteration {it}")
            new_stats.append(kern.statistics(x))
            if j < nodes.size and nodes[j] == k + 1:
                new_nodes[:, j] = x
                j += 1
        res = max(w1_sorted(new_nodes[:, i], old_nodes[:, i]) for i in range(nodes.size))
        residuals.append(res)
        old_stats, old_nodes = new_stats, new_nodes
        if res <= tol:
            times = spec.times[nodes]
            flow = MeasureFlow.from_samples(times, new_nodes.T)
            return NonlinearProcessSolution(flow, residuals, len(residuals) - 1, new_nodes)
    raise NonConvergence(f"nonlinear process Picard did not reach tol={tol}", residuals)


def chaos_gap(ensemble: ParticleEnsemble, solution: NonlinearProcessSolution, t: float) -> float:
    """W1 between the particle system and the nonlinear process at time ``t``."""
    i = _node(ensemble.times, t)
    j = solution.flow.index(t)
    return wasserstein1(empirical_from_samples(ensemble.states[:, i]), solution.flow.measures[j])
