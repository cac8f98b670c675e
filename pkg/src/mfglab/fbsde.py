"""Backward and forward-backward SDEs in one space dimension.

Sign convention throughout: ``dY = h(t, X, Y, Z) dt + Z dW`` with ``Y_T = g(X_T)``
and forward state ``dX = b(t, X, Y, Z) dt + sigma(t, X, Y) dW``.

Two solvers:

* :func:`solve_bsde_regression` -- backward induction with conditional
  expectations replaced by least-squares polynomial regression on ``X_k``.
* :func:`four_step_solve` -- the decoupling-field route: find ``theta`` with
  ``Y_t = theta(t, X_t)`` from the quasilinear parabolic PDE

      theta_t + b theta_x + 1/2 sigma^2 theta_xx - h = 0,  theta(T) = g,

  then simulate ``X`` through ``theta`` and read off ``Y`` and ``Z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special
from scipy.linalg import solve_banded

from .errors import InvalidArgument, NonConvergence, NumericalFailure, UnsupportedInstance
from .rng import step_normals


@dataclass(frozen=True, eq=False)
class BsdeSpec:
    b: Callable  # (t, x, y, z) -> drift of X
    sigma: Callable  # (t, x, y) -> volatility of X
    h: Callable  # (t, x, y, z) -> driver
    g: Callable  # x -> terminal value
    x0: float
    T: float
    h_lipschitz: float = 1.0
    x_domain: tuple | None = None
    sigma_bar: float | None = None  # volatility scale for the default PDE window
    name: str = "custom"

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgument("T must be positive")
        if not np.isfinite(self.h_lipschitz):
            raise InvalidArgument("driver must be Lipschitz in (y, z)")

    def domain(self, width: float = 8.0) -> tuple[float, float]:
        """Truncated spatial window ``x0 +- width * sigma_bar * sqrt(T)``."""
        if self.x_domain is not None:
            return tuple(self.x_domain)
        sb = self.sigma_bar
        if sb is None:
            y0 = float(np.asarray(self.g(np.array([self.x0])))[0])
            sb = abs(float(np.asarray(self.sigma(0.0, np.array([self.x0]), np.array([y0])))[0]))
        sb = max(sb, 1e-3)
        half = width * sb * np.sqrt(self.T)
        return self.x0 - half, self.x0 + half


@dataclass(eq=False)
class GridFunction:
    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray  # (nt, nx)
    boundary_kind: str = "upwind-characteristic"
    sweeps: list = field(default_factory=list)  # Picard sweeps used per time step

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    def at(self, k: int, x):
        """Linear interpolation of the ``k``-th time slice (clamped at the edges)."""
        return np.interp(x, self.x_grid, self.values[k])

    def derivative(self, k: int) -> np.ndarray:
        return np.gradient(self.values[k], self.dx)

    def dx_at(self, k: int, x):
        return np.interp(x, self.x_grid, self.derivative(k))

    def __call__(self, t: float, x):
        """Evaluation at arbitrary ``t`` by linear interpolation in time."""
        t_grid = self.t_grid
        j = int(np.clip(np.searchsorted(t_grid, t) - 1, 0, t_grid.size - 2))
        w = (t - t_grid[j]) / (t_grid[j + 1] - t_grid[j])
        return (1 - w) * self.at(j, x) + w * self.at(j + 1, x)


@dataclass(eq=False)
class FbsdeSolution:
    theta: GridFunction
    x_paths: np.ndarray  # (paths, nt)
    y_paths: np.ndarray
    z_paths: np.ndarray
    y0: float
    terminal_consistency: float
    propagation_gap: float  # E|Y_T^prop - g(X_T)| with Y propagated by its own SDE


def step1_z_map(sigma: Callable, t, x, y, p, sigma_z: Callable | None = None, tol: float = 1e-12):
    """Solve ``z = p * sigma(t, x, y, z)``.

    With a ``z``-free volatility this is a product.  A ``z``-dependent
    ``sigma_z(t, x, y, z)`` is handled by fixed-point iteration, which must
    contract.
    """
    if sigma_z is None:
        return np.asarray(p) * sigma(t, x, y)
    z = np.asarray(p) * sigma_z(t, x, y, np.zeros_like(np.asarray(p, float)))
    prev_err = np.inf
    for _ in range(200):
        z_new = np.asarray(p) * sigma_z(t, x, y, z)
        err = float(np.max(np.abs(z_new - z)))
        z = z_new
        if err <= tol:
            return z
        if err >= prev_err:
            break
        prev_err = err
    raise UnsupportedInstance("z-dependent volatility whose z-map does not contract")


# --------------------------------------------------------------------------
# quasilinear PDE


def _operator_bands(bb, ss, dx):
    """Tridiagonal generator ``b d/dx + 1/2 s d2/dx2`` (rows = grid nodes).

    Exponentially fitted (Scharfetter-Gummel) weights: central differences
    for small cell Peclet numbers, upwind for large ones, smooth in ``b``
    in between so that frozen-coefficient sweeps do not chatter.  Boundary
    rows drop diffusion and use the inward one-sided difference of the
    incoming characteristic only.
    """
    d = 0.5 * ss / dx**2
    pos = d > 0
    pe = np.divide(bb, d * dx, out=np.zeros_like(bb), where=pos)
    lower = np.where(pos, d / special.exprel(pe), np.maximum(-bb, 0) / dx)
    upper = np.where(pos, d / special.exprel(-pe), np.maximum(bb, 0) / dx)
    lower[0] = 0.0
    upper[0] = max(bb[0], 0.0) / dx
    lower[-1] = max(-bb[-1], 0.0) / dx
    upper[-1] = 0.0
    return lower, -(lower + upper), upper


def _apply(lower, diag, upper, v):
    out = diag * v
    out[1:] += lower[1:] * v[:-1]
    out[:-1] += upper[:-1] * v[1:]
    return out


def _solve_tridiag(lower, diag, upper, rhs):
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


def solve_quasilinear_pde(
    spec: BsdeSpec,
    nt: int = 200,
    nx: int = 201,
    x_domain: tuple | None = None,
    theta_scheme: float = 1.0,
    sigma_z: Callable | None = None,
    max_sweeps: int = 50,
    sweep_tol: float = 1e-10,
) -> GridFunction:
    """Backward time stepping for the decoupling field.

    Each step freezes the nonlinear coefficients at the current iterate and
    solves a tridiagonal system, repeating until the iterate moves less
    than ``sweep_tol``.  ``theta_scheme`` is 1 for implicit Euler and 0.5 for
    Crank-Nicolson.
    """
    if nt < 1 or nx < 3:
        raise InvalidArgument("need nt >= 1 and nx >= 3")
    lo, hi = x_domain or spec.domain()
    x = np.linspace(lo, hi, nx)
    dx = x[1] - x[0]
    t = np.linspace(0.0, spec.T, nt + 1)
    dt = spec.T / nt
    th = float(theta_scheme)
    V = np.empty((nt + 1, nx))
    V[-1] = spec.g(x)

    def coefficients(tk, v):
        p = np.gradient(v, dx)
        z = step1_z_map(spec.sigma, tk, x, v, p, sigma_z)
        bb = spec.b(tk, x, v, z) * np.ones(nx)
        ss = spec.sigma(tk, x, v) ** 2 * np.ones(nx)
        hh = spec.h(tk, x, v, z) * np.ones(nx)
        return _operator_bands(bb, ss, dx), hh

    sweeps = []
    (L_next, h_next) = coefficients(t[-1], V[-1])
    for n in range(nt - 1, -1, -1):
        v_next = V[n + 1]
        explicit = v_next.copy()
        if th < 1:
            explicit += (1 - th) * dt * (_apply(*L_next, v_next) - h_next)
        v = v_next.copy()
        hist = []
        for s in range(max_sweeps):
            (lw, dg, up), hh = coefficients(t[n], v)
            rhs = explicit - th * dt * hh
            v_new = _solve_tridiag(-th * dt * lw, 1 - th * dt * dg, -th * dt * up, rhs)
            err = float(np.max(np.abs(v_new - v)))
            v = v_new
            hist.append(err)
            if err <= sweep_tol * max(1.0, float(np.max(np.abs(v)))):
                break
        else:
            raise NonConvergence(f"Picard sweeps did not converge at t={t[n]:.6g}", hist)
        if not np.all(np.isfinite(v)):
            raise NumericalFailure(f"non-finite decoupling field at t={t[n]:.6g}")
        V[n] = v
        sweeps.append(len(hist))
        L_next, h_next = coefficients(t[n], v)
    return GridFunction(t, x, V, "upwind-characteristic", sweeps[::-1])


# --------------------------------------------------------------------------
# four-step scheme


def four_step_solve(
    spec: BsdeSpec,
    nt: int = 200,
    nx: int = 201,
    paths: int = 2000,
    seed: int = 0,
    x_domain: tuple | None = None,
    theta_scheme: float = 1.0,
    sigma_z: Callable | None = None,
) -> FbsdeSolution:
    theta = solve_quasilinear_pde(spec, nt, nx, x_domain, theta_scheme, sigma_z)
    t, dt = theta.t_grid, spec.T / nt
    X = np.empty((paths, nt + 1))
    Y = np.empty_like(X)
    Z = np.empty_like(X)
    X[:, 0] = spec.x0
    y_prop = np.full(paths, theta.at(0, np.array([spec.x0]))[0])
    for k in range(nt + 1):
        x = X[:, k]
        Y[:, k] = theta.at(k, x)
        p = theta.dx_at(k, x)
        Z[:, k] = step1_z_map(spec.sigma, t[k], x, Y[:, k], p, sigma_z)
        if k == nt:
            break
        dW = np.sqrt(dt) * step_normals(seed, k, paths, "four-step")
        X[:, k + 1] = x + spec.b(t[k], x, Y[:, k], Z[:, k]) * dt + spec.sigma(t[k], x, Y[:, k]) * dW
        y_prop = y_prop + spec.h(t[k], x, Y[:, k], Z[:, k]) * dt + Z[:, k] * dW
    gT = spec.g(X[:, -1])
    return FbsdeSolution(
        theta,
        X,
        Y,
        Z,
        float(Y[0, 0]),
        float(np.mean(np.abs(Y[:, -1] - gT))),
        float(np.mean(np.abs(y_prop - gT))),
    )


# --------------------------------------------------------------------------
# regression BSDE


@dataclass(eq=False)
class RegressionBsdeResult:
    y0: float
    z0: float
    times: np.ndarray
    x_paths: np.ndarray
    y_paths: np.ndarray  # regression estimates of Y_k on the simulated paths
    z_paths: np.ndarray
    coeffs: list  # per step: (center, scale, monomial coefficients in the scaled variable)

    def _clamped(self, k, x):
        # polynomials extrapolate badly; hold them flat outside the fitted sample
        col = self.x_paths[:, k]
        return (np.clip(np.asarray(x, float), col.min(), col.max()) - self.coeffs[k][0]) / self.coeffs[k][1]

    def y_fn(self, k: int, x):
        return np.polynomial.polynomial.polyval(self._clamped(k, x), self.coeffs[k][2])

    def y_dx(self, k: int, x):
        c, s, beta = self.coeffs[k]
        d = np.polynomial.polynomial.polyder(beta) / s
        return np.polynomial.polynomial.polyval(self._clamped(k, x), d) if d.size else np.zeros_like(x)


def _regress(x, targets, degree):
    """Least-squares projection of each column of ``targets`` on polynomials in ``x``."""
    c, s = float(np.mean(x)), float(np.std(x))
    if s < 1e-12:
        beta = np.atleast_2d(np.mean(targets, axis=0)).T if targets.ndim > 1 else np.array([np.mean(targets)])
        return (c, 1.0), beta, np.broadcast_to(np.mean(targets, axis=0), targets.shape).copy()
    u = (x - c) / s
    A = np.vander(u, degree + 1, increasing=True)
    beta, _, rank, _ = np.linalg.lstsq(A, targets, rcond=None)
    if rank < degree + 1:
        raise NumericalFailure(f"regression matrix rank {rank} < {degree + 1}; lower basis_degree")
    return (c, s), beta, A @ beta


def solve_bsde_regression(
    spec: BsdeSpec,
    steps: int = 50,
    paths: int = 20000,
    basis_degree: int = 3,
    seed: int = 0,
    y_guess: Callable | None = None,
    antithetic: bool = True,
) -> RegressionBsdeResult:
    """Least-squares Monte Carlo for ``dY = h dt + Z dW``.

    ``Z_k`` is the regression of ``(Y_{k+1} - E[Y_{k+1} | X_k]) dW_k / dt`` and
    ``Y_k`` that of ``Y_{k+1} - h(t_k, X_k, Y_{k+1}, Z_k) dt - Z_k dW_k``; the
    last term has conditional mean zero and removes most of the sampling noise.  For coupled
    systems ``y_guess(k, x) -> (y, y_x)`` supplies the decoupling field used in
    the forward coefficients.  Antithetic increments make every odd noise
    moment vanish exactly.
    """
    if basis_degree < 1:
        raise InvalidArgument("basis_degree must be at least 1")
    dt = spec.T / steps
    t = np.linspace(0.0, spec.T, steps + 1)
    X = np.empty((paths, steps + 1))
    dW = np.empty((paths, steps))
    X[:, 0] = spec.x0
    for k in range(steps):
        x = X[:, k]
        if y_guess is None:
            y, p = np.zeros_like(x), np.zeros_like(x)
        else:
            y, p = y_guess(k, x)
        z = p * spec.sigma(t[k], x, y)
        if antithetic:
            half = step_normals(seed, k, (paths + 1) // 2, "regression")
            dW[:, k] = np.sqrt(dt) * np.concatenate([half, -half])[:paths]
        else:
            dW[:, k] = np.sqrt(dt) * step_normals(seed, k, paths, "regression")
        X[:, k + 1] = x + spec.b(t[k], x, y, z) * dt + spec.sigma(t[k], x, y) * dW[:, k]
        if not np.all(np.isfinite(X[:, k + 1])):
            raise NumericalFailure(f"forward paths blew up at step {k + 1}")

    Y = np.empty_like(X)
    Zp = np.zeros_like(X)
    Y[:, -1] = spec.g(X[:, -1])
    coeffs = [None] * (steps + 1)
    coeffs[-1] = None
    for k in range(steps - 1, -1, -1):
        x, y1 = X[:, k], Y[:, k + 1]
        (c, s), beta, fitted = _regress(x, y1, basis_degree)
        _, _, zfit = _regress(x, (y1 - fitted) * dW[:, k] / dt, basis_degree)
        Zp[:, k] = zfit
        # subtracting the martingale increment leaves the conditional mean intact
        target = y1 - spec.h(t[k], x, y1, zfit) * dt - zfit * dW[:, k]
        (c, s), beta, yfit = _regress(x, target, basis_degree)
        Y[:, k] = yfit
        coeffs[k] = (c, s, np.atleast_1d(np.squeeze(beta)))
    Zp[:, -1] = Zp[:, -2]
    return RegressionBsdeResult(float(Y[0, 0]), float(Zp[0, 0]), t, X, Y, Zp, coeffs)


def solve_coupled_regression(
    spec: BsdeSpec,
    steps: int = 50,
    paths: int = 20000,
    basis_degree: int = 4,
    seed: int = 0,
    max_iter: int = 20,
    tol: float = 1e-4,
) -> tuple[RegressionBsdeResult, list]:
    """Coupled FBSDE by iterated forward resimulation.

    Start from ``Y = g(X)``; each round simulates ``X`` through the current
    decoupling field and re-solves the backward part by regression.
    """
    gx = spec.g

    def initial(k, x):
        eps = 1e-6 * (1 + np.abs(x))
        return gx(x), (gx(x + eps) - gx(x - eps)) / (2 * eps)

    guess = initial
    history = []
    res = None
    for _ in range(max_iter):
        res = solve_bsde_regression(spec, steps, paths, basis_degree, seed, guess)
        history.append(res.y0)
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * max(1.0, abs(history[-1])):
            return res, history

        def guess(k, x, r=res):
            if k == 0:
                return np.full_like(x, r.y0), np.full_like(x, r.y_dx(1, np.array([spec.x0]))[0])
            return r.y_fn(k, x), r.y_dx(k, x)

    raise NonConvergence("forward resimulation did not settle", history)


# --------------------------------------------------------------------------
# built-in instances


def black_scholes_put(s, k, r, sigma, t_now, t_mat) -> float:
    """European put price ``K e^{-r(T-t)} N(-d2) - S N(-d1)``."""
    if not (sigma > 0 and t_mat > t_now and s > 0 and k >= 0):
        raise InvalidArgument("need sigma > 0, t_mat > t_now, s > 0, k >= 0")
    if k == 0:
        return 0.0
    tau = t_mat - t_now
    d1 = (np.log(s / k) + (r + 0.5 * sigma**2) * tau) / (sigma * np.sqrt(tau))
    d2 = d1 - sigma * np.sqrt(tau)
    return float(k * np.exp(-r * tau) * special.ndtr(-d2) - s * special.ndtr(-d1))


def black_scholes_instance(s0=1.0, strike=1.0, r=0.05, mu=0.1, sigma=0.2, T=1.0, width=8.0) -> BsdeSpec:
    """Put-replication FBSDE in log-price ``x = log S``.

    ``dX = (mu - sigma^2/2) dt + sigma dW`` and the wealth driver
    ``h = r y + (mu - r) z / sigma``; the PDE window is centred on ``log s0``.
    """
    x0 = float(np.log(s0))
    half = width * sigma * np.sqrt(T)
    return BsdeSpec(
        b=lambda t, x, y, z: (mu - 0.5 * sigma**2) + 0 * x,
        sigma=lambda t, x, y: sigma + 0 * x,
        h=lambda t, x, y, z: r * y + (mu - r) * z / sigma,
        g=lambda x: np.maximum(strike - np.exp(x), 0.0),
        x0=x0,
        T=T,
        h_lipschitz=max(abs(r), abs(mu - r) / sigma),
        x_domain=(x0 - half, x0 + half),
        name="black_scholes",
    )


def linear_coupled_instance(x0=0.5, T=0.5, g=np.tanh, x_domain=None) -> BsdeSpec:
    """``dX = (X + Y) dt + (X + Y) dW``, ``dY = (X + Y) dt + Z dW``, ``Y_T = g(X_T)``."""
    return BsdeSpec(
        b=lambda t, x, y, z: x + y,
        sigma=lambda t, x, y: x + y,
        h=lambda t, x, y, z: x + y,
        g=g,
        x0=x0,
        T=T,
        h_lipschitz=1.0,
        x_domain=x_domain,
        sigma_bar=abs(x0) + 1.0,
        name="linear_coupled",
    )
