"""Static two-player games: best responses, pure and 2x2 mixed Nash, Cournot.

Payoffs are utilities here (higher is better).  The dynamic solvers elsewhere
in the package minimize costs instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, MfgLabError


@dataclass(frozen=True, eq=False)
class BimatrixGame:
    payoff1: np.ndarray
    payoff2: np.ndarray
    row_labels: tuple = ()
    col_labels: tuple = ()

    def __post_init__(self):
        a, b = np.asarray(self.payoff1, float), np.asarray(self.payoff2, float)
        if a.ndim != 2 or a.shape != b.shape or a.size == 0:
            raise InvalidArgument("payoff matrices must be nonempty and of equal 2-d shape")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidArgument("payoffs must be finite")
        object.__setattr__(self, "payoff1", a)
        object.__setattr__(self, "payoff2", b)

    @property
    def rows(self) -> int:
        return self.payoff1.shape[0]

    @property
    def cols(self) -> int:
        return self.payoff1.shape[1]


@dataclass(frozen=True)
class MixedProfile:
    p: tuple
    q: tuple


def prisoners_dilemma() -> BimatrixGame:
    # ordinal payoffs: freedom 3, one year 2, five years 1, ten years 0
    u1 = [[1, 3], [0, 2]]
    return BimatrixGame(np.array(u1), np.array(u1).T, ("accuse", "not accuse"), ("accuse", "not accuse"))


def matching_pennies() -> BimatrixGame:
    u1 = np.array([[1, -1], [-1, 1]])
    return BimatrixGame(u1, -u1, ("head", "tails"), ("head", "tails"))


def best_response(g: BimatrixGame, player: int, opponent_action: int) -> set[int]:
    """All maximizers against a fixed opponent action; ties are kept."""
    if player == 1:
        if not 0 <= opponent_action < g.cols:
            raise InvalidArgument(f"column index {opponent_action} out of range")
        payoff = g.payoff1[:, opponent_action]
    elif player == 2:
        if not 0 <= opponent_action < g.rows:
            raise InvalidArgument(f"row index {opponent_action} out of range")
        payoff = g.payoff2[opponent_action, :]
    else:
        raise InvalidArgument("player must be 1 or 2")
    return set(np.flatnonzero(payoff == payoff.max()).tolist())


def pure_nash(g: BimatrixGame) -> list[tuple[int, int]]:
    """Mutual best responses in row-major order."""
    return [
        (i, j)
        for i in range(g.rows)
        for j in range(g.cols)
        if i in best_response(g, 1, j) and j in best_response(g, 2, i)
    ]


def expected_payoffs(g: BimatrixGame, p, q) -> tuple[float, float]:
    p, q = np.asarray(p, float), np.asarray(q, float)
    return float(p @ g.payoff1 @ q), float(p @ g.payoff2 @ q)


def deviation_gain(g: BimatrixGame, prof: MixedProfile) -> float:
    """Largest unilateral improvement; pure deviations suffice by linearity."""
    p, q = np.asarray(prof.p), np.asarray(prof.q)
    u1, u2 = expected_payoffs(g, p, q)
    return float(max((g.payoff1 @ q).max() - u1, (p @ g.payoff2).max() - u2, 0.0))


def mixed_nash_2x2(g: BimatrixGame, tol: float = 1e-10) -> MixedProfile:
    """Interior indifference solution if it exists, else a pure equilibrium."""
    if g.payoff1.shape != (2, 2):
        raise InvalidArgument("mixed_nash_2x2 needs a 2x2 game")
    a, b = g.payoff1, g.payoff2
    # q makes player 1 indifferent between rows; p makes player 2 indifferent
    den_q = a[0, 0] - a[0, 1] - a[1, 0] + a[1, 1]
    den_p = b[0, 0] - b[1, 0] - b[0, 1] + b[1, 1]
    if den_q != 0 and den_p != 0:
        q = (a[1, 1] - a[0, 1]) / den_q
        p = (b[1, 1] - b[1, 0]) / den_p
        # weights can round onto the boundary; the gain check decides
        if 0 <= p <= 1 and 0 <= q <= 1:
            prof = MixedProfile((p, 1 - p), (q, 1 - q))
            if deviation_gain(g, prof) <= tol:
                return prof
    for i, j in pure_nash(g):
        prof = MixedProfile(tuple(np.eye(2)[i]), tuple(np.eye(2)[j]))
        return prof
    raise MfgLabError("no equilibrium found for a 2x2 game; numerics failed")


def cournot_best_response(a: float, c: float, q_other: float) -> float:
    return (a - c - q_other) / 2


def cournot(a: float, c: float) -> tuple[float, float]:
    """Duopoly equilibrium for inverse demand ``P = a - Q`` and unit cost ``c``."""
    if not c >= 0:
        raise InvalidArgument("marginal cost must be nonnegative")
    if not a > c:
        raise InvalidArgument("demand intercept must exceed marginal cost")
    q = (a - c) / 3
    return q, q
