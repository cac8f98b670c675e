"""One-dimensional probability measures.

Everything that couples agents in this package goes through an
:class:`EmpiricalMeasure`: a finite set of sorted atoms with weights.  CDFs are
right-continuous step functions, quantiles are generalized inverses, and the
Wasserstein-1 distance is the exact integral of ``|F - G|`` over the merged
breakpoints.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from .errors import InvalidArgument

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p, w = np.asarray(self.points, float), np.asarray(self.weights, float)
        if p.ndim != 1 or p.shape != w.shape or p.size == 0:
            raise InvalidArgument("points and weights must be equal-length nonempty 1-d arrays")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(w))):
            raise InvalidArgument("non-finite atom or weight")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL * max(1, p.size):
            raise InvalidArgument(f"weights must be nonnegative and sum to 1 (got {w.sum()!r})")
        if p.size > 1 and np.any(np.diff(p) <= 0):
            raise InvalidArgument("points must be strictly increasing; use from_atoms to merge")
        object.__setattr__(self, "points", _frozen(p))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_atoms(cls, points, weights=None) -> "EmpiricalMeasure":
        """Sort, merge atoms closer than ``MERGE_TOL`` and renormalize."""
        p = np.asarray(points, float).ravel()
        if p.size == 0:
            raise InvalidArgument("cannot build a measure from no atoms")
        if not np.all(np.isfinite(p)):
            raise InvalidArgument("non-finite sample")
        w = np.full(p.size, 1.0 / p.size) if weights is None else np.asarray(weights, float).ravel()
        if w.shape != p.shape or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgument("weights must be finite, nonnegative and match points")
        total = w.sum()
        if total <= 0:
            raise InvalidArgument("total weight must be positive")
        order = np.argsort(p, kind="stable")
        p, w = p[order], w[order] / total
        new_group = np.empty(p.size, bool)
        new_group[0] = True
        new_group[1:] = np.diff(p) > MERGE_TOL
        starts = np.flatnonzero(new_group)
        merged_w = np.add.reduceat(w, starts)
        keep = merged_w > 0
        pts, wts = p[starts][keep], merged_w[keep]
        return cls(pts, wts / wts.sum())

    @property
    def size(self) -> int:
        return self.points.size

    def mean(self) -> float:
        return float(self.weights @ self.points)

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.points - m) ** 2)

    def cdf(self, x):
        return cdf(self, x)

    def quantile(self, q):
        return quantile(self, q)

    def shift(self, c: float) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points + c, self.weights)

    def resample(self, n: int) -> np.ndarray:
        """``n`` equally weighted points at the mid-rank quantiles."""
        q = (np.arange(n) + 0.5) / n
        return quantile(self, q)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point", "weight"])
        for p, wt in zip(self.points, self.weights):
            w.writerow([repr(float(p)), repr(float(wt))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EmpiricalMeasure":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls.from_atoms([float(r["point"]) for r in rows], [float(r["weight"]) for r in rows])


def empirical_from_samples(samples: Sequence[float]) -> EmpiricalMeasure:
    """Equal-weight empirical measure of ``samples`` with duplicates merged."""
    s = np.asarray(samples, float).ravel()
    if s.size == 0:
        raise InvalidArgument("empirical measure of an empty sample")
    return EmpiricalMeasure.from_atoms(s)


def cdf(m: EmpiricalMeasure, x):
    """Right-continuous CDF ``m((-inf, x])``; vectorized over ``x``."""
    cw = np.concatenate([[0.0], np.cumsum(m.weights)])
    cw[-1] = 1.0
    idx = np.searchsorted(m.points, x, side="right")
    out = cw[idx]
    return float(out) if np.ndim(out) == 0 else out


def _cdf_left(m: EmpiricalMeasure, x):
    cw = np.concatenate([[0.0], np.cumsum(m.weights)])
    cw[-1] = 1.0
    return cw[np.searchsorted(m.points, x, side="left")]


def quantile(m: EmpiricalMeasure, q):
    """Generalized inverse: smallest atom ``x`` with ``cdf(m, x) >= q``."""
    qa = np.asarray(q, float)
    if np.any(qa <= 0) or np.any(qa > 1) or not np.all(np.isfinite(qa)):
        raise InvalidArgument("quantile level must lie in (0, 1]")
    cw = np.cumsum(m.weights)
    cw[-1] = 1.0
    # slack absorbs rounding in the cumulative sum
    idx = np.searchsorted(cw, qa - 1e-14, side="left")
    out = m.points[np.minimum(idx, m.size - 1)]
    return float(out) if np.ndim(out) == 0 else out


def wasserstein1(m: EmpiricalMeasure, n: EmpiricalMeasure) -> float:
    """Exact ``int |F_m - F_n| dx`` on the merged breakpoint set."""
    grid = np.union1d(m.points, n.points)
    if grid.size == 1:
        return 0.0
    gap = np.abs(cdf(m, grid[:-1]) - cdf(n, grid[:-1]))
    return float(gap @ np.diff(grid))


def w1_sorted(a: np.ndarray, b: np.ndarray) -> float:
    """W1 between two equal-size, equal-weight samples (sorts its inputs)."""
    a, b = np.sort(np.asarray(a, float)), np.sort(np.asarray(b, float))
    if a.shape != b.shape:
        return wasserstein1(empirical_from_samples(a), empirical_from_samples(b))
    return float(np.mean(np.abs(a - b)))


# --------------------------------------------------------------------------
# reference distributions


@dataclass(frozen=True)
class DistributionSpec:
    """Parametric or atomic law on the real line.

    ``kind`` is one of ``atom-mixture`` (``points``, ``weights``), ``normal``
    (``loc``, ``scale``), ``uniform`` (``low``, ``high``) or ``empirical``
    (``points``; equal weights).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        k, p = self.kind, self.params
        if k == "atom-mixture":
            pts = np.asarray(p.get("points", ()), float)
            w = np.asarray(p.get("weights", ()), float)
            if pts.size == 0 or pts.shape != w.shape:
                raise InvalidArgument("atom-mixture needs matching points and weights")
            if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise InvalidArgument("atom-mixture weights must be nonnegative and sum to 1")
        elif k == "normal":
            if not p.get("scale", 0) > 0:
                raise InvalidArgument("normal scale must be positive")
        elif k == "uniform":
            if not p.get("high", 0) > p.get("low", 0):
                raise InvalidArgument("uniform needs low < high")
        elif k == "empirical":
            if len(p.get("points", ())) == 0:
                raise InvalidArgument("empirical law needs points")
        else:
            raise InvalidArgument(f"unknown distribution kind {k!r}")

    @classmethod
    def dirac(cls, x: float) -> "DistributionSpec":
        return cls("atom-mixture", {"points": [float(x)], "weights": [1.0]})

    @classmethod
    def normal(cls, loc=0.0, scale=1.0) -> "DistributionSpec":
        return cls("normal", {"loc": float(loc), "scale": float(scale)})

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionSpec":
        d = dict(d)
        return cls(d.pop("kind"), d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def as_measure(self) -> EmpiricalMeasure | None:
        """Exact atomic representation, or ``None`` for continuous laws."""
        if self.kind == "atom-mixture":
            return EmpiricalMeasure.from_atoms(self.params["points"], self.params["weights"])
        if self.kind == "empirical":
            return empirical_from_samples(self.params["points"])
        return None

    def support(self) -> tuple[float, float]:
        m = self.as_measure()
        if m is not None:
            return float(m.points[0]), float(m.points[-1])
        if self.kind == "uniform":
            return float(self.params["low"]), float(self.params["high"])
        return -np.inf, np.inf

    def mean(self) -> float:
        m = self.as_measure()
        if m is not None:
            return m.mean()
        if self.kind == "normal":
            return float(self.params.get("loc", 0.0))
        return 0.5 * (self.params["low"] + self.params["high"])

    def std(self) -> float:
        m = self.as_measure()
        if m is not None:
            return float(np.sqrt(m.variance()))
        if self.kind == "normal":
            return float(self.params["scale"])
        return (self.params["high"] - self.params["low"]) / np.sqrt(12)

    def cdf(self, x):
        m = self.as_measure()
        if m is not None:
            return cdf(m, x)
        if self.kind == "normal":
            loc, sc = self.params.get("loc", 0.0), self.params["scale"]
            return special.ndtr((np.asarray(x, float) - loc) / sc)
        lo, hi = self.params["low"], self.params["high"]
        return np.clip((np.asarray(x, float) - lo) / (hi - lo), 0.0, 1.0)

    def cdf_left(self, x):
        m = self.as_measure()
        if m is not None:
            return _cdf_left(m, x)
        return self.cdf(x)

    def ppf(self, q):
        m = self.as_measure()
        if m is not None:
            return quantile(m, q)
        if self.kind == "normal":
            return stats.norm.ppf(q, self.params.get("loc", 0.0), self.params["scale"])
        lo, hi = self.params["low"], self.params["high"]
        return lo + np.asarray(q, float) * (hi - lo)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        m = self.as_measure()
        if m is not None:
            return rng.choice(m.points, size=n, p=m.weights)
        if self.kind == "normal":
            return rng.normal(self.params.get("loc", 0.0), self.params["scale"], size=n)
        return rng.uniform(self.params["low"], self.params["high"], size=n)

    def mixture_atoms(self, nodes: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Atoms and weights representing the law; continuous kinds use
        Gauss-Legendre quadrature on the support (uniform) or on the
        ``+-8`` scale window (normal)."""
        m = self.as_measure()
        if m is not None:
            return m.points.copy(), m.weights.copy()
        x, w = np.polynomial.legendre.leggauss(nodes)
        if self.kind == "uniform":
            lo, hi = self.params["low"], self.params["high"]
            return lo + (x + 1) * (hi - lo) / 2, w / 2
        loc, sc = self.params.get("loc", 0.0), self.params["scale"]
        pts = loc + 8 * sc * x
        dens = stats.norm.pdf(pts, loc, sc) * 8 * sc * w
        return pts, dens / dens.sum()


def sup_cdf_distance(m: EmpiricalMeasure, ref: DistributionSpec) -> float:
    """Kolmogorov distance ``sup_x |F_m(x) - F_ref(x)|``.

    Both step functions are piecewise constant between the merged
    breakpoints, so the supremum is attained at a breakpoint or at its left
    limit.
    """
    grid = m.points
    ref_m = ref.as_measure()
    if ref_m is not None:
        grid = np.union1d(grid, ref_m.points)
    right = np.abs(cdf(m, grid) - ref.cdf(grid))
    left = np.abs(_cdf_left(m, grid) - ref.cdf_left(grid))
    return float(max(right.max(), left.max()))


# --------------------------------------------------------------------------
# flows


@dataclass(frozen=True, eq=False)
class MeasureFlow:
    times: np.ndarray
    measures: tuple

    def __post_init__(self):
        t = np.asarray(self.times, float)
        if t.ndim != 1 or t.size < 1 or t[0] != 0.0:
            raise InvalidArgument("flow times must start at 0")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InvalidArgument("flow times must be strictly increasing")
        if len(self.measures) != t.size:
            raise InvalidArgument("need exactly one measure per time node")
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "measures", tuple(self.measures))

    @classmethod
    def from_samples(cls, times, samples: np.ndarray) -> "MeasureFlow":
        """``samples`` has one row per time node."""
        return cls(times, tuple(empirical_from_samples(s) for s in samples))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def index(self, t: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol:
            raise InvalidArgument(f"time {t} is not a node of the flow grid")
        return i

    def at(self, t: float) -> EmpiricalMeasure:
        return self.measures[self.index(t)]

    def means(self) -> np.ndarray:
        return np.array([m.mean() for m in self.measures])

    def quantile_table(self, levels=(0.05, 0.25, 0.5, 0.75, 0.95)) -> np.ndarray:
        return np.array([[quantile(m, q) for q in levels] for m in self.measures])


def flow_distance(a: MeasureFlow, b: MeasureFlow) -> float:
    """``sup_t W1(a_t, b_t)`` over the nodes of ``a`` (must be nodes of ``b``)."""
    return max(wasserstein1(m, b.at(t)) for t, m in zip(a.times, a.measures))


def quantile_table_csv(flow: MeasureFlow, levels=(0.05, 0.25, 0.5, 0.75, 0.95)) -> str:
    names = ["t"] + [f"q{int(round(100 * q)):02d}" for q in levels]
    rows = flow.quantile_table(levels)
    lines = [",".join(names)]
    for t, r in zip(flow.times, rows):
        lines.append(",".join(repr(float(v)) for v in (t, *r)))
    return "\n".join(lines) + "\n"
