"""When does the meeting start?

Each of many symmetric participants picks a target arrival time ``t``; the
realized arrival is ``t + sigma * eps`` with ``sigma ~ nu`` and ``eps`` standard
normal.  The meeting starts at ``tau(mu) = max(t0, q-quantile of arrivals)``.
A participant pays ``A`` per unit of lateness w.r.t. ``t0``, ``B`` per unit of
lateness w.r.t. the actual start and ``C`` per unit of waiting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DegenerateEquilibrium, InvalidArgument, NonConvergence, NumericalFailure
from .measures import DistributionSpec, EmpiricalMeasure, empirical_from_samples, quantile
from .rng import substream


@dataclass(frozen=True)
class MeetingSpec:
    A: float = 1.0
    B: float = 1.0
    C: float = 1.0
    t0: float = 9.0
    nu: DistributionSpec = field(default_factory=lambda: DistributionSpec.dirac(1.0))
    rule_quantile: float = 0.75
    domain: tuple = (0.0, 24.0)

    def __post_init__(self):
        for name in ("A", "B", "C"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if not 0 < self.rule_quantile < 1:
            raise InvalidArgument("rule_quantile must lie in (0, 1)")
        lo, hi = self.domain
        if not lo <= self.t0 <= hi:
            raise InvalidArgument("t0 must lie in the admissible domain")
        if not self.nu.support()[0] > 0:
            raise InvalidArgument("noise scale law nu must have strictly positive support")
        pts, wts = self.nu.mixture_atoms()
        object.__setattr__(self, "_atoms", (pts, wts))


@dataclass
class MeetingEquilibrium:
    t_star: float  # equilibrium start time
    t_hat: float  # equilibrium target arrival time
    residual: float
    iterations: int
    contraction_estimate: float  # implicit-function derivative at the fixed point
    empirical_contraction: float  # observed |dT_{k+1}| / |dT_k|
    trajectory: list
    mode: str


def noise_cdf(spec: MeetingSpec, z):
    """``P(sigma * eps <= z)``: a finite mixture of normal CDFs."""
    pts, wts = spec._atoms
    z = np.asarray(z, float)
    out = special.ndtr(z[..., None] / pts) @ wts
    return float(out) if out.ndim == 0 else out


def noise_pdf(spec: MeetingSpec, z):
    pts, wts = spec._atoms
    z = np.asarray(z, float)
    out = (np.exp(-0.5 * (z[..., None] / pts) ** 2) / (np.sqrt(2 * np.pi) * pts)) @ wts
    return float(out) if out.ndim == 0 else out


def noise_quantile(spec: MeetingSpec, q: float) -> float:
    return _solve_increasing(lambda z: noise_cdf(spec, z) - q, 0.0)


def tau_rule(m: EmpiricalMeasure, spec: MeetingSpec) -> float:
    return max(spec.t0, quantile(m, spec.rule_quantile))


def _solve_increasing(fn, guess: float, width: float = 1.0, max_doublings: int = 60) -> float:
    """Root of an increasing function by expanding-bracket bisection."""
    lo, hi = guess - width, guess + width
    for _ in range(max_doublings):
        if fn(lo) < 0 < fn(hi):
            break
        width *= 2
        lo, hi = guess - width, guess + width
    else:
        raise NumericalFailure("bracket expansion exceeded 60 doublings")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        v = fn(mid)
        if v == 0:
            return mid
        if v < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def first_order_lhs(spec: MeetingSpec, t, T_star: float):
    return spec.A * noise_cdf(spec, np.asarray(t) - spec.t0) + (spec.B + spec.C) * noise_cdf(
        spec, np.asarray(t) - T_star
    )


def best_response_time(spec: MeetingSpec, T_star: float) -> float:
    """Unique target time solving ``A F(t - t0) + (B + C) F(t - T*) = C``."""
    return _solve_increasing(lambda t: first_order_lhs(spec, t, T_star) - spec.C, 0.5 * (spec.t0 + T_star))


def expected_cost(spec: MeetingSpec, t, T_star: float):
    """``E[A (X - t0)^+ + B (X - T*)^+ + C (T* - X)^+]`` for ``X = t + Z``."""
    pts, wts = spec._atoms
    t = np.asarray(t, float)

    def plus_part(shift):
        # E[(shift + s eps)^+] = shift Phi(shift/s) + s phi(shift/s), per atom
        u = shift[..., None] / pts
        return (shift[..., None] * special.ndtr(u) + pts * np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi)) @ wts

    return spec.A * plus_part(t - spec.t0) + spec.B * plus_part(t - T_star) + spec.C * plus_part(T_star - t)


def contraction_factor(spec: MeetingSpec, t_hat: float, T_star: float) -> float:
    a = spec.A * noise_pdf(spec, t_hat - spec.t0)
    b = (spec.B + spec.C) * noise_pdf(spec, t_hat - T_star)
    return float(b / (a + b)) if a + b > 0 else 1.0


def start_time_map(spec: MeetingSpec, T_star: float, mode: str = "self_consistent") -> tuple[float, float]:
    """One application of the best-response map; returns ``(new T, t_hat)``.

    ``direct`` mode sets the next guess to the best-response target itself.
    ``self_consistent`` mode (an extension) sets it to the start time the
    population produces when everyone targets ``t_hat``:
    ``max(t0, t_hat + F_Z^{-1}(q))``.
    """
    t_hat = best_response_time(spec, T_star)
    if mode == "direct":
        return t_hat, t_hat
    if mode == "self_consistent":
        return max(spec.t0, t_hat + noise_quantile(spec, spec.rule_quantile)), t_hat
    raise InvalidArgument(f"unknown mode {mode!r}")


def solve_equilibrium(
    spec: MeetingSpec, tol: float = 1e-10, mode: str = "self_consistent", max_iter: int = 100_000
) -> MeetingEquilibrium:
    """Picard iteration ``T <- G(T)`` started at ``t0``."""
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    if mode == "direct":
        # at t = T the first-order condition reads A F(T - t0) + (B + C)/2 = C
        level = (spec.C - spec.B) / (2 * spec.A)
        if not 0 < level < 1:
            raise DegenerateEquilibrium(
                f"target map has no fixed point: needs 0 < (C - B) / 2A < 1, got {level:.6g}"
            )
    elif mode == "self_consistent" and spec.C > spec.A:
        # G(T) - T decreases with slope > -1 towards this limit
        drift = noise_quantile(spec, (spec.C - spec.A) / (spec.B + spec.C)) + noise_quantile(spec, spec.rule_quantile)
        if drift >= 0:
            raise DegenerateEquilibrium(
                f"start-time map has no fixed point: G(T) - T stays above its limit {drift:.6g} >= 0"
            )
    T = spec.t0
    traj = []
    prev_step = None
    stalled = 0
    lam_hat = 0.0
    for k in range(1, max_iter + 1):
        G, t_hat = start_time_map(spec, T, mode)
        step = G - T
        traj.append((k, G, abs(step)))
        if not spec.domain[0] <= G <= spec.domain[1]:
            raise DegenerateEquilibrium(f"start time left the admissible window {spec.domain} at iteration {k}")
        if abs(step) <= tol:
            lam = contraction_factor(spec, t_hat, G)
            return MeetingEquilibrium(G, t_hat, abs(step), k, lam, lam_hat, traj, mode)
        if prev_step:
            lam_hat = abs(step) / abs(prev_step)
            stalled = stalled + 1 if lam_hat >= 1 - 1e-9 else 0
            if stalled >= 5:
                raise DegenerateEquilibrium(
                    "best-response map is not contracting (empirical rate "
                    f"{lam_hat:.12f}); with A -> 0 and B = C it reduces to the identity "
                    "and the fixed point is not determined"
                )
        prev_step = step
        T = G
    raise NonConvergence("Picard iteration did not reach tolerance", [r for _, _, r in traj])


def simulate_finite(spec: MeetingSpec, equilibrium_t: float, N: int, seed: int) -> float:
    """Realized start time of an ``N``-participant meeting where everyone
    targets ``equilibrium_t``."""
    if N < 1:
        raise InvalidArgument("N must be at least 1")
    sigma = spec.nu.sample(substream(seed, "meeting-sigma"), N)
    eps = substream(seed, "meeting-eps").standard_normal(N)
    return tau_rule(empirical_from_samples(equilibrium_t + sigma * eps), spec)


def limit_start_time(spec: MeetingSpec, t_hat: float) -> float:
    """Start time in the infinite game when everyone targets ``t_hat``."""
    return max(spec.t0, t_hat + noise_quantile(spec, spec.rule_quantile))
