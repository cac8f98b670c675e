"""Continuous-time Aiyagari economy in mean-field form.

Households hold shifted capital ``k~ = k + phi >= 0``, supply stochastic
labor ``l`` with ``E l = 1`` and consume ``c``; a Cobb-Douglas firm sets
``r = a K^(a-1) - delta``.  The optimal consumption ``c = Y^(-1/gamma)`` depends
only on the deterministic adjoint, so the equilibrium reduces to a
two-point boundary value problem for mean capital ``K`` and the adjoint ``Y``:

    dY/dt = -rho(K) Y,            Y(T) = 1,
    dK/dt = w(K) + r(K) (K - phi) - Y^(-1/gamma),   K(0) = K0,

with ``rho = r - beta`` (current-value discounting).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .errors import DegenerateEquilibrium, InvalidArgument, NonConvergence
from .rng import step_normals


@dataclass(frozen=True)
class LaborSpec:
    kind: str = "ou"  # "ou" (mean reverting to 1) or "gbm" (mean-one martingale)
    vol: float = 0.2
    reversion: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ou", "gbm"):
            raise InvalidArgument("labor kind must be 'ou' or 'gbm'")
        if not self.vol >= 0:
            raise InvalidArgument("labor vol must be nonnegative")
        if self.kind == "ou" and not self.reversion > 0:
            raise InvalidArgument("OU reversion must be positive")


@dataclass(frozen=True)
class AiyagariSpec:
    gamma: float = 2.0
    alpha_share: float = 0.36
    delta: float = 0.08
    beta: float = 0.05
    b_limit: float = 0.0
    labor: LaborSpec = field(default_factory=LaborSpec)
    l_min: float = 0.2
    l_max: float = 3.0
    T: float = 50.0
    K0: float = 4.0
    foc_convention: str = "derived"  # wage (1 - a) K^a; "paper_exact" uses K^a
    paper_exact_ode: bool = False  # adjoint rate with the exponent 1 - a
    include_beta: bool = True
    printed_aggregate: bool = False  # K-equation without the a K^a term

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidArgument("gamma must be positive")
        if not 0 < self.alpha_share < 1:
            raise InvalidArgument("alpha_share must lie in (0, 1)")
        if not (self.delta >= 0 and self.beta >= 0 and self.b_limit >= 0):
            raise InvalidArgument("delta, beta and b_limit must be nonnegative")
        if not 0 < self.l_min <= 1 <= self.l_max:
            raise InvalidArgument("need 0 < l_min <= 1 <= l_max so that labor can average one")
        if not (self.T > 0 and self.K0 > 0):
            raise InvalidArgument("T and K0 must be positive")
        if self.foc_convention not in ("derived", "paper_exact"):
            raise InvalidArgument("foc_convention must be 'derived' or 'paper_exact'")


@dataclass(eq=False)
class MacroEquilibrium:
    t_grid: np.ndarray
    K_bar: np.ndarray
    Y_adj: np.ndarray
    r: np.ndarray
    w: np.ndarray
    c_rule: np.ndarray
    phi: float
    residuals: dict
    iterations: int
    method: str
    history: list = field(default_factory=list)
    flagged: bool = False


@dataclass(eq=False)
class HouseholdPanel:
    t_grid: np.ndarray
    k_paths: np.ndarray  # (N, steps + 1)
    l_paths: np.ndarray
    constraint_hits: int


def crra_utility(c, gamma: float):
    """``(c^(1-gamma) - 1) / (1 - gamma)``, ``log c`` at ``gamma = 1``."""
    c = np.asarray(c, float)
    if np.any(c <= 0):
        raise InvalidArgument("consumption must be positive")
    if abs(gamma - 1) < 1e-12:
        out = np.log(c)
    else:
        out = np.expm1((1 - gamma) * np.log(c)) / (1 - gamma)
    return float(out) if out.ndim == 0 else out


def marginal_utility(c, gamma: float):
    return np.asarray(c, float) ** -gamma


def firm_prices(K, spec: AiyagariSpec):
    """Interest rate and wage from the firm's first-order conditions."""
    K = np.asarray(K, float)
    if np.any(K <= 0):
        raise InvalidArgument("mean capital must be positive")
    a = spec.alpha_share
    r = a * K ** (a - 1) - spec.delta
    w = K**a if spec.foc_convention == "paper_exact" else (1 - a) * K**a
    if r.ndim == 0:
        return float(r), float(w)
    return r, w


def borrowing_limit(spec: AiyagariSpec, r: float, w: float) -> float:
    """Natural debt limit capped at ``b``: ``min(b, w l_min / r)`` when ``r > 0``."""
    if r > 0:
        return float(min(spec.b_limit, w * spec.l_min / r))
    return float(spec.b_limit)


def optimal_consumption(Y, gamma: float):
    """``U'(c) = Y`` solved for ``c``."""
    Y = np.asarray(Y, float)
    if np.any(Y <= 0):
        raise InvalidArgument("adjoint must be positive")
    out = Y ** (-1.0 / gamma)
    return float(out) if out.ndim == 0 else out


def adjoint_rate(K, spec: AiyagariSpec):
    a = spec.alpha_share
    expo = 1 - a if spec.paper_exact_ode else a - 1
    rho = a * np.asarray(K, float) ** expo - spec.delta
    return rho - spec.beta if spec.include_beta else rho


def _adjoint_rate_dk(K, spec):
    a = spec.alpha_share
    expo = 1 - a if spec.paper_exact_ode else a - 1
    return a * expo * np.asarray(K, float) ** (expo - 1)


def capital_drift(K, c, spec: AiyagariSpec, phi: float):
    """Aggregate ``dK/dt``: the expectation of the household budget with ``E l = 1``."""
    a = spec.alpha_share
    K = np.asarray(K, float)
    if spec.printed_aggregate:
        return K**a - a * phi * K ** (a - 1) - spec.delta * K + spec.delta * phi - c
    r, w = firm_prices(K, spec)
    return w + r * (K - phi) - c


def _capital_drift_dk(K, spec, phi):
    a = spec.alpha_share
    K = np.asarray(K, float)
    if spec.printed_aggregate:
        return a * K ** (a - 1) - a * (a - 1) * phi * K ** (a - 2) - spec.delta
    w_k = a * K ** (a - 1) if spec.foc_convention == "paper_exact" else (1 - a) * a * K ** (a - 1)
    r = a * K ** (a - 1) - spec.delta
    return w_k + r + a * (a - 1) * K ** (a - 2) * (K - phi)


def _adjoint_from_capital(K, dt, spec):
    """``Y_n = exp(int_{t_n}^T rho)`` with the integral by the trapezoid rule."""
    rho = adjoint_rate(K, spec)
    seg = 0.5 * dt * (rho[1:] + rho[:-1])
    return np.exp(np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]]))


def _residuals(K, Y, dt, spec, phi):
    rho = adjoint_rate(K, spec)
    c = optimal_consumption(Y, spec.gamma)
    F = capital_drift(K, c, spec, phi)
    # relative to the size of Y, which can span many orders of magnitude
    res_y = (np.diff(Y) / dt + 0.5 * (rho[1:] * Y[1:] + rho[:-1] * Y[:-1])) / np.maximum(Y[1:], Y[:-1])
    # the equation actually discretized: trapezoid rule for log Y
    res_z = np.diff(np.log(Y)) / dt + 0.5 * (rho[1:] + rho[:-1])
    res_k = np.diff(K) / dt - 0.5 * (F[1:] + F[:-1])
    return {
        "Y": float(np.max(np.abs(res_y))),
        "logY": float(np.max(np.abs(res_z))),
        "K": float(np.max(np.abs(res_k))),
        "terminal": float(abs(Y[-1] - 1)),
    }


def _step_capital(K_prev, c_prev, c_next, dt, spec, phi):
    """Implicit trapezoid step for ``K`` given consumption at both ends."""
    f_prev = capital_drift(K_prev, c_prev, spec, phi)
    x = K_prev + dt * f_prev
    for _ in range(50):
        if not x > 0:
            return x
        res = x - K_prev - 0.5 * dt * (f_prev + capital_drift(x, c_next, spec, phi))
        x_new = x - res / (1 - 0.5 * dt * _capital_drift_dk(x, spec, phi))
        if abs(x_new - x) <= 1e-14 * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


def solve_macro_odes(
    spec: AiyagariSpec,
    steps: int = 1000,
    tol: float = 1e-10,
    method: str = "newton",
    damping: float = 0.5,
    max_iter: int = 5000,
) -> MacroEquilibrium:
    """Equilibrium paths on a uniform grid.

    ``method="sweep"`` is the damped forward-backward sweep: given ``K`` the
    adjoint is explicit, then ``K`` is stepped forward with ``c = Y^(-1/gamma)``
    and mixed into the previous path.  It diverges on long horizons because
    the forward capital equation is the unstable branch of a saddle.
    ``method="newton"`` solves the same trapezoid equations for
    ``(K, log Y)`` jointly by damped Newton with a sparse Jacobian.
    """
    if steps < 100:
        raise InvalidArgument("need at least 100 steps")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    t = np.linspace(0.0, spec.T, steps + 1)
    dt = spec.T / steps
    phi = borrowing_limit(spec, *firm_prices(spec.K0, spec))
    if method == "sweep":
        K, hist, its = _sweep(spec, t, dt, phi, tol, damping, max_iter)
        Y = _adjoint_from_capital(K, dt, spec)
    elif method == "newton":
        K, Y, hist, its = _newton(spec, t, dt, phi, tol, max_iter)
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    if np.any(K <= 0):
        raise DegenerateEquilibrium("mean capital reached zero")
    r, w = firm_prices(K, spec)
    c = optimal_consumption(Y, spec.gamma)
    flagged = any(b > a for a, b in zip(hist[3:], hist[4:])) if method == "sweep" else False
    return MacroEquilibrium(t, K, Y, r, w, c, phi, _residuals(K, Y, dt, spec, phi), its, method, hist, flagged)


def _sweep(spec, t, dt, phi, tol, damping, max_iter):
    if not 0 < damping <= 1:
        raise InvalidArgument("damping must lie in (0, 1]")
    n = t.size - 1
    K = np.full(n + 1, spec.K0)
    hist = []
    for it in range(1, max_iter + 1):
        c = optimal_consumption(_adjoint_from_capital(K, dt, spec), spec.gamma)
        K_new = np.empty(n + 1)
        K_new[0] = spec.K0
        for k in range(n):
            K_new[k + 1] = _step_capital(K_new[k], c[k], c[k + 1], dt, spec, phi)
            if not K_new[k + 1] > 0:
                raise DegenerateEquilibrium(
                    f"mean capital hit zero at t={t[k + 1]:.4g} in sweep {it}; the forward capital "
                    "equation is unstable on this horizon (use method='newton' or smaller damping)"
                )
        change = float(np.max(np.abs(K_new - K)))
        hist.append(change)
        K = (1 - damping) * K + damping * K_new
        if change <= tol:
            return K_new, hist, it
    raise NonConvergence("forward-backward sweep did not converge", hist)


def steady_state_capital(spec: AiyagariSpec) -> float:
    """Root of the adjoint rate: where ``Y`` and hence consumption stop moving."""
    return brentq(lambda k: adjoint_rate(k, spec), 1e-8, 1e8, xtol=1e-14, rtol=1e-14)


def _newton(spec, t, dt, phi, tol, max_iter):
    n = t.size - 1
    g = spec.gamma
    K = np.full(n + 1, spec.K0)
    if _adjoint_rate_dk(spec.K0, spec) < 0:
        # saddle: the path hugs the steady state, so start from a turnpike shape
        try:
            k_ss = steady_state_capital(spec)
            K = k_ss + (spec.K0 - k_ss) * np.exp(-t / max(1.0, spec.T / 20))
        except ValueError:
            pass
    z = np.log(_adjoint_from_capital(K, dt, spec))

    def residual(K, z):
        rho = adjoint_rate(K, spec)
        c = np.exp(-z / g)
        F = capital_drift(K, c, spec, phi)
        rz = z[1:] - z[:-1] + 0.5 * dt * (rho[1:] + rho[:-1])
        rk = K[1:] - K[:-1] - 0.5 * dt * (F[1:] + F[:-1])
        return np.concatenate([rz, rk])

    # unknowns: K_1..K_n then z_0..z_{n-1}; K_0 and z_n = 0 are fixed
    def jacobian(K, z):
        rho_k = _adjoint_rate_dk(K, spec)
        c = np.exp(-z / g)
        F_k = _capital_drift_dk(K, spec, phi)
        F_z = c / g  # d(-c)/dz
        rows, cols, vals = [], [], []

        def add(r, cidx, v):
            rows.append(r)
            cols.append(cidx)
            vals.append(v)

        for j in range(n):
            # rz_j: z_{j+1} - z_j + dt/2 (rho_j + rho_{j+1})
            if j + 1 <= n - 1:
                add(j, n + j + 1, 1.0)
            add(j, n + j, -1.0)
            if j >= 1:
                add(j, j - 1, 0.5 * dt * rho_k[j])
            add(j, j, 0.5 * dt * rho_k[j + 1])
            # rk_j: K_{j+1} - K_j - dt/2 (F_j + F_{j+1})
            r = n + j
            add(r, j, 1.0 - 0.5 * dt * F_k[j + 1])
            if j >= 1:
                add(r, j - 1, -1.0 - 0.5 * dt * F_k[j])
            add(r, n + j, -0.5 * dt * F_z[j])
            if j + 1 <= n - 1:
                add(r, n + j + 1, -0.5 * dt * F_z[j + 1])
        return sparse.csc_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))

    hist = []
    res = residual(K, z)
    for it in range(1, max_iter + 1):
        norm = float(np.max(np.abs(res)))
        hist.append(norm)
        if norm <= tol * dt:
            return K, np.exp(z), hist, it
        step = spsolve(jacobian(K, z), -res)
        lam = 1.0
        while lam > 1e-8:
            K_try = K.copy()
            z_try = z.copy()
            K_try[1:] += lam * step[:n]
            z_try[:-1] += lam * step[n:]
            if np.all(K_try > 0):
                res_try = residual(K_try, z_try)
                if np.all(np.isfinite(res_try)) and np.max(np.abs(res_try)) < (1 - 1e-4 * lam) * norm:
                    break
            lam *= 0.5
        else:
            raise NonConvergence("Newton line search failed", hist)
        K, z, res = K_try, z_try, res_try
        if it >= 100:
            break
    raise NonConvergence("Newton iteration did not converge", hist)


def simulate_panel(spec: AiyagariSpec, eq: MacroEquilibrium, N: int, seed: int) -> HouseholdPanel:
    """Households facing the equilibrium prices and consuming ``c = Y^(-1/gamma)``.

    Capital follows the same implicit trapezoid recursion as the aggregate,
    so the cross-sectional mean reproduces ``K`` up to the labor noise.
    """
    if N < 10:
        raise InvalidArgument("need at least 10 households")
    t = eq.t_grid
    n = t.size - 1
    dt = t[1] - t[0]
    lab = spec.labor
    L = np.empty((N, n + 1))
    L[:, 0] = 1.0
    for k in range(n):
        xi = step_normals(seed, k, N, "labor")
        if lab.kind == "ou":
            decay = np.exp(-lab.reversion * dt)
            sd = lab.vol * np.sqrt(-np.expm1(-2 * lab.reversion * dt) / (2 * lab.reversion))
            L[:, k + 1] = 1 + (L[:, k] - 1) * decay + sd * xi
        else:
            L[:, k + 1] = L[:, k] * np.exp(lab.vol * np.sqrt(dt) * xi - 0.5 * lab.vol**2 * dt)
    np.clip(L, spec.l_min, spec.l_max, out=L)
    if spec.printed_aggregate:
        # the printed aggregate has no per-household counterpart; use the derived wage
        w = (1 - spec.alpha_share) * eq.K_bar**spec.alpha_share
    else:
        w = eq.w
    r, c, phi = eq.r, eq.c_rule, eq.phi
    K = np.empty((N, n + 1))
    K[:, 0] = eq.K_bar[0]
    hits = 0
    for k in range(n):
        rhs = K[:, k] + 0.5 * dt * (w[k] * L[:, k] + r[k] * (K[:, k] - phi) - c[k] + w[k + 1] * L[:, k + 1] - r[k + 1] * phi - c[k + 1])
        nxt = rhs / (1 - 0.5 * dt * r[k + 1])
        low = nxt < 0
        hits += int(low.sum())
        K[:, k + 1] = np.where(low, 0.0, nxt)
    return HouseholdPanel(t, K, L, hits)
