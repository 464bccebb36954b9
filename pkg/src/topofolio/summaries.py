"""Persistence landscapes and distances between persistence diagrams.

Landscapes are stored exactly: every level is a piecewise-linear function
kept as its breakpoints, built from tent functions without any grid
approximation. Norms and distances integrate the linear segments in closed
form, so values are exact up to floating-point rounding for every real
p >= 1 as well as p = inf.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .persistence import PersistenceDiagram

__all__ = [
    "PersistenceLandscape",
    "landscape",
    "landscape_norm",
    "landscape_distance",
    "wasserstein",
    "persistence_to_empty",
    "landscape_to_csv",
    "landscape_from_csv",
]


def _check_p(p) -> float:
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    return p


@dataclass(frozen=True)
class PersistenceLandscape:
    """A sequence of piecewise-linear levels lambda_1 >= lambda_2 >= ... >= 0.

    Each level is an (m, 2) array of (t, value) breakpoints with strictly
    increasing t, non-negative values, and value 0 at both ends. The function
    is linear between consecutive breakpoints and 0 outside their span.
    """

    levels: tuple

    def __post_init__(self):
        cleaned = []
        for lvl in self.levels:
            arr = np.asarray(lvl, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
                raise ValueError("each level needs at least two (t, value) breakpoints")
            if not np.all(np.isfinite(arr)):
                raise ValueError("landscape breakpoints must be finite")
            if np.any(np.diff(arr[:, 0]) <= 0):
                raise ValueError("breakpoint t values must be strictly increasing")
            if np.any(arr[:, 1] < 0):
                raise ValueError("landscape values must be non-negative")
            if arr[0, 1] != 0.0 or arr[-1, 1] != 0.0:
                raise ValueError("levels must start and end at value 0")
            arr = arr.copy()
            arr.setflags(write=False)
            cleaned.append(arr)
        object.__setattr__(self, "levels", tuple(cleaned))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def value(self, t, k: int = 1):
        """Evaluate level ``k`` (1-based, as in lambda_k) at scalar or array t."""
        if k < 1:
            raise ValueError("level index k is 1-based")
        t = np.asarray(t, dtype=np.float64)
        if k > len(self.levels):
            return np.zeros_like(t) if t.ndim else 0.0
        arr = self.levels[k - 1]
        out = np.interp(t, arr[:, 0], arr[:, 1], left=0.0, right=0.0)
        return out if t.ndim else float(out)

    def equals(self, other: "PersistenceLandscape") -> bool:
        if self.n_levels != other.n_levels:
            return False
        return all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.levels, other.levels)
        )


def _tent_values(births, deaths, t):
    """Evaluate every tent at every t: result[i, j] = tent_i(t[j]).

    At a tent's own midpoint the exact peak height (d - b) / 2 is used, so
    the sup norm of the landscape reproduces the max half-persistence to the
    last bit instead of losing an ulp to the min-of-slopes form.
    """
    b = births[:, None]
    d = deaths[:, None]
    tt = t[None, :]
    lin = np.maximum(0.0, np.minimum(tt - b, d - tt))
    return np.where(tt == (b + d) / 2.0, (d - b) / 2.0, lin)


def _prune_collinear(ts, vs):
    pos = np.flatnonzero(vs > 0.0)
    if pos.size == 0:
        return ts[:0], vs[:0]
    # keep one zero on each side of the support, drop longer zero runs
    lo = max(pos[0] - 1, 0)
    hi = min(pos[-1] + 1, len(ts) - 1)
    ts = ts[lo : hi + 1]
    vs = vs[lo : hi + 1]
    keep = [0]
    for idx in range(1, len(ts) - 1):
        t1, v1 = ts[keep[-1]], vs[keep[-1]]
        t2, v2 = ts[idx], vs[idx]
        t3, v3 = ts[idx + 1], vs[idx + 1]
        if (t3 - t1) * (v2 - v1) != (t2 - t1) * (v3 - v1):
            keep.append(idx)
    keep.append(len(ts) - 1)
    return ts[keep], vs[keep]


def landscape(diagram: PersistenceDiagram, k_max="all") -> PersistenceLandscape:
    """Build the persistence landscape of a finite diagram.

    Level k at any t is the k-th largest tent value over all features, where
    the tent of a feature (b, d) rises with slope +1 from b, peaks at height
    (d - b) / 2, and falls back to 0 at d. Zero-persistence features produce
    the zero tent and are skipped. Levels that are identically zero are
    omitted, so the landscape of an empty diagram has no levels.

    Parameters
    ----------
    diagram : PersistenceDiagram
        Finite features only; restrict the homology dimension beforehand.
    k_max : int or "all"
        Keep at most this many levels.
    """
    if np.any(np.isinf(diagram.deaths)):
        raise ValueError(
            "landscape of an essential (infinite-death) feature is undefined; "
            "drop or truncate essential classes first"
        )
    if k_max != "all":
        k_max = int(k_max)
        if k_max < 1:
            raise ValueError("k_max must be a positive integer or 'all'")
    pos = diagram.deaths > diagram.births
    births = diagram.births[pos]
    deaths = diagram.deaths[pos]
    n = births.size
    if n == 0:
        return PersistenceLandscape(levels=())
    # Between consecutive candidate abscissas no two tents cross and none
    # meets zero, so the k-th largest is linear there: births, deaths and all
    # rising/falling intersections (b_i + d_j) / 2 cover every breakpoint.
    cands = np.concatenate(
        [births, deaths, ((births[:, None] + deaths[None, :]) / 2.0).ravel()]
    )
    cands = np.unique(cands)
    vals = _tent_values(births, deaths, cands)
    vals.sort(axis=0)
    vals = vals[::-1]  # row k-1 holds the k-th largest value at each candidate
    n_levels = n if k_max == "all" else min(n, k_max)
    levels = []
    for k in range(n_levels):
        vk = vals[k]
        if not np.any(vk > 0.0):
            break
        ts, vs = _prune_collinear(cands, vk)
        levels.append(np.column_stack([ts, vs]))
    return PersistenceLandscape(levels=tuple(levels))


def _segment_power_integral(v1: float, v2: float, dt: float, p: float) -> float:
    """Integral of |v(t)|^p over a segment where v is linear from v1 to v2.

    The naive antiderivative ratio (G(v2) - G(v1)) / (v2 - v1) cancels
    catastrophically when v1 and v2 are close, so crossing segments are split
    at the zero (each half then has a zero endpoint) and same-sign segments
    use the subtraction-free divided difference for integer p.
    """
    if v1 == v2:
        return abs(v1) ** p * dt
    if (v1 < 0.0 < v2) or (v2 < 0.0 < v1):
        t0 = dt * abs(v1) / (abs(v1) + abs(v2))
        return (t0 * abs(v1) ** p + (dt - t0) * abs(v2) ** p) / (p + 1.0)
    a = abs(v1)
    b = abs(v2)
    if p == int(p):
        q = int(p)
        # (b^(q+1) - a^(q+1)) / (b - a) written as sum of a^k b^(q-k)
        s = 0.0
        for k in range(q + 1):
            s += a**k * b ** (q - k)
        return s * dt / (q + 1.0)
    hi = max(a, b)
    lo = min(a, b)
    if hi == 0.0:
        return 0.0
    if hi - lo <= 1e-8 * hi:
        return ((a + b) / 2.0) ** p * dt
    return (hi ** (p + 1.0) - lo ** (p + 1.0)) / ((p + 1.0) * (hi - lo)) * dt


def _level_norm_pow(arr, p: float) -> float:
    total = 0.0
    ts = arr[:, 0]
    vs = arr[:, 1]
    for i in range(len(ts) - 1):
        total += _segment_power_integral(vs[i], vs[i + 1], ts[i + 1] - ts[i], p)
    return total


def landscape_norm(lam: PersistenceLandscape, p) -> float:
    """The p-norm (sum_k ||lambda_k||_p^p)^(1/p); p = inf gives the max peak."""
    if math.isinf(float(p)):
        peak = 0.0
        for arr in lam.levels:
            peak = max(peak, float(arr[:, 1].max()))
        return peak
    p = _check_p(p)
    total = 0.0
    for arr in lam.levels:
        total += _level_norm_pow(arr, p)
    return total ** (1.0 / p)


def _difference_grid(a, b):
    """Breakpoints of the difference of two levels, with values of each."""
    ts = np.unique(np.concatenate([a[:, 0], b[:, 0]]))
    va = np.interp(ts, a[:, 0], a[:, 1], left=0.0, right=0.0)
    vb = np.interp(ts, b[:, 0], b[:, 1], left=0.0, right=0.0)
    return ts, va - vb


_ZERO_LEVEL = np.array([[0.0, 0.0], [1.0, 0.0]])


def landscape_distance(lx: PersistenceLandscape, ly: PersistenceLandscape, p) -> float:
    """Norm of the levelwise difference; missing levels count as zero."""
    n = max(lx.n_levels, ly.n_levels)
    pf = float(p)
    if math.isinf(pf):
        worst = 0.0
        for k in range(n):
            a = lx.levels[k] if k < lx.n_levels else _ZERO_LEVEL
            b = ly.levels[k] if k < ly.n_levels else _ZERO_LEVEL
            _, diff = _difference_grid(a, b)
            gap = float(np.abs(diff).max()) if diff.size else 0.0
            worst = max(worst, gap)
        return worst
    p = _check_p(p)
    total = 0.0
    for k in range(n):
        a = lx.levels[k] if k < lx.n_levels else _ZERO_LEVEL
        b = ly.levels[k] if k < ly.n_levels else _ZERO_LEVEL
        ts, diff = _difference_grid(a, b)
        for i in range(len(ts) - 1):
            total += _segment_power_integral(
                diff[i], diff[i + 1], ts[i + 1] - ts[i], p
            )
    return total ** (1.0 / p)


def _finite_points(diagram: PersistenceDiagram):
    if np.any(np.isinf(diagram.deaths)):
        raise ValueError(
            "distance between diagrams with essential classes is undefined; "
            "drop or truncate them first"
        )
    return diagram.births, diagram.deaths


def _augmented_cost(b1, d1, b2, d2):
    """Ground cost matrix with diagonal slots appended to both sides.

    Row i < n1 is a point of the first diagram, rows beyond are diagonal
    slots; likewise for columns and the second diagram. A point matched to
    any diagonal slot pays its own projection cost (half its persistence,
    under the sup-norm ground metric), and diagonal-diagonal pairs are free.
    """
    n1 = b1.size
    n2 = b2.size
    size = n1 + n2
    cost = np.zeros((size, size))
    if n1 and n2:
        cost[:n1, :n2] = np.maximum(
            np.abs(b1[:, None] - b2[None, :]), np.abs(d1[:, None] - d2[None, :])
        )
    diag1 = (d1 - b1) / 2.0
    diag2 = (d2 - b2) / 2.0
    cost[:n1, n2:] = diag1[:, None]
    cost[n1:, :n2] = diag2[None, :]
    return cost


def _bottleneck(cost: np.ndarray) -> float:
    """Smallest c such that a perfect matching exists on edges of cost <= c."""
    size = cost.shape[0]
    if size == 0:
        return 0.0
    cands = np.unique(cost)

    def feasible(c: float) -> bool:
        graph = csr_matrix(cost <= c)
        match = maximum_bipartite_matching(graph, perm_type="column")
        return bool(np.all(match >= 0))

    lo, hi = 0, cands.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(cands[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(cands[lo])


def wasserstein(d1: PersistenceDiagram, d2: PersistenceDiagram, p) -> float:
    """p-Wasserstein distance with sup-norm ground cost and diagonal matching.

    Both diagrams are augmented with the diagonal projections of the other's
    points, so diagrams of different sizes compare naturally and an unmatched
    feature pays half its persistence. p = inf is the bottleneck distance.
    The assignment is solved exactly.
    """
    b1, dd1 = _finite_points(d1)
    b2, dd2 = _finite_points(d2)
    if b1.size == 0 and b2.size == 0:
        return 0.0
    cost = _augmented_cost(b1, dd1, b2, dd2)
    pf = float(p)
    if math.isinf(pf):
        return _bottleneck(cost)
    p = _check_p(p)
    rows, cols = linear_sum_assignment(cost**p)
    return float((cost[rows, cols] ** p).sum()) ** (1.0 / p)


def persistence_to_empty(diagram: PersistenceDiagram, p) -> float:
    """Distance to the empty diagram in closed form: (2^-p sum pers^p)^(1/p)."""
    births, deaths = _finite_points(diagram)
    pers = deaths - births
    if pers.size == 0:
        return 0.0
    pf = float(p)
    if math.isinf(pf):
        return float(pers.max()) / 2.0
    p = _check_p(p)
    return float(np.sum((pers / 2.0) ** p)) ** (1.0 / p)


def landscape_to_csv(lam: PersistenceLandscape, path) -> None:
    """Write breakpoints as rows (level, t, value); level is 1-based."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "t", "value"])
        for k, arr in enumerate(lam.levels, start=1):
            for t, v in arr:
                writer.writerow([k, "%.17g" % t, "%.17g" % v])


def landscape_from_csv(path) -> PersistenceLandscape:
    by_level: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["level", "t", "value"]:
            raise ValueError(f"unexpected landscape CSV header: {header}")
        for row in reader:
            if not row:
                continue
            k = int(row[0])
            by_level.setdefault(k, []).append((float(row[1]), float(row[2])))
    if by_level and sorted(by_level) != list(range(1, len(by_level) + 1)):
        raise ValueError("landscape CSV levels must be consecutive from 1")
    levels = tuple(np.asarray(by_level[k]) for k in sorted(by_level))
    return PersistenceLandscape(levels=levels)
