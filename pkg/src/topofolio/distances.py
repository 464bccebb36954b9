"""Distances between return series built on persistence diagrams and landscapes.

Four time-aware distances are provided. AWD averages Wasserstein distances
between diagrams of overlapping sub-series (ABD is the same thing at p = inf),
and ALD does the same with landscape distances. DWD and DLD embed the
difference series x - y and measure how far its diagram or landscape is from
empty, which keeps them sensitive to time alignment: a series and its
reversal can have identical diagrams (zero Wasserstein distance) while their
difference carries visible topology.

Classical baselines (Spearman/Pearson correlation distances and the negative
squared Euclidean similarity) share the same pairwise-matrix entry point.
Everything here is pure and deterministic; pairwise matrices are identical
regardless of evaluation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, TransformerMixin

from .embedding import pairwise_distances, takens_embed
from .panels import SubSeriesPlan, make_subseries, subseries_weights
from .persistence import FiltrationSpec, PersistenceDiagram, rips_persistence
from .summaries import (
    PersistenceLandscape,
    landscape,
    landscape_distance,
    landscape_norm,
    persistence_to_empty,
    wasserstein,
)
from ._validation import as_series

__all__ = [
    "DistanceSpec",
    "KINDS",
    "series_diagram",
    "series_landscape",
    "awd",
    "dwd",
    "ald",
    "dld",
    "corr_distance",
    "euclid_sq_neg",
    "pairwise_matrix",
    "PairwiseDistance",
    "matrix_to_csv",
    "matrix_from_csv",
]

KINDS = (
    "AWD",
    "ABD",
    "DWD",
    "ALD",
    "DLD",
    "WD",
    "LD",
    "SpearmanDist",
    "PearsonDist",
    "EuclidSq",
)

_SUBSERIES_KINDS = ("AWD", "ABD", "ALD")
_DIAGRAM_KINDS = _SUBSERIES_KINDS + ("DWD", "DLD", "WD", "LD")


@dataclass(frozen=True)
class DistanceSpec:
    """Configuration shared by every series distance.

    ``subseries`` and ``weights`` apply to the averaging kinds only
    (AWD/ABD/ALD); when left unset the plan defaults to pieces of about a
    third of the series, half-overlapping, and uniform weights. ABD is AWD at
    p = inf, so its p must be inf or unset.
    """

    kind: str
    p: float = 1.0
    subseries: SubSeriesPlan | None = None
    weights: tuple | None = None
    dim: int = 2
    delay: int = 1
    homology_dim: int = 1
    max_radius: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}; use one of {KINDS}")
        p = float(self.p)
        if math.isnan(p) or p < 1.0:
            raise ValueError(f"p must be >= 1 or inf, got {self.p}")
        if self.kind == "ABD" and not math.isinf(p):
            raise ValueError("ABD is AWD at p = inf; set p to inf or leave it")
        if self.subseries is not None and self.kind not in _SUBSERIES_KINDS:
            raise ValueError(f"{self.kind} does not take a sub-series plan")
        if self.weights is not None:
            if self.kind not in _SUBSERIES_KINDS:
                raise ValueError(f"{self.kind} does not take sub-series weights")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.homology_dim not in (0, 1):
            raise ValueError("homology_dim must be 0 or 1")
        if self.dim < 1 or self.delay < 1:
            raise ValueError("embedding needs dim >= 1 and delay >= 1")

    def resolve_plan(self, n: int) -> SubSeriesPlan:
        if self.subseries is not None:
            self.subseries.validate_for(n)
            return self.subseries
        return SubSeriesPlan.default_for(n)

    def filtration(self) -> FiltrationSpec:
        return FiltrationSpec(max_dim=self.homology_dim, max_radius=self.max_radius)


def series_diagram(x, spec: DistanceSpec) -> PersistenceDiagram:
    """Embed a series and return its finite diagram in spec.homology_dim."""
    cloud = takens_embed(x, dim=spec.dim, delay=spec.delay)
    diagram = rips_persistence(cloud, spec.filtration())
    return diagram.restrict(spec.homology_dim).finite()


def series_landscape(x, spec: DistanceSpec) -> PersistenceLandscape:
    return landscape(series_diagram(x, spec))


def _pair_check(x, y):
    x = as_series(x)
    y = as_series(y)
    if x.shape != y.shape:
        raise ValueError(f"series lengths differ: {x.shape[0]} vs {y.shape[0]}")
    return x, y


def awd(x, y, spec: DistanceSpec) -> float:
    """Weighted average Wasserstein distance over matched sub-series diagrams."""
    x, y = _pair_check(x, y)
    plan = spec.resolve_plan(x.shape[0])
    w = subseries_weights(plan, spec.weights)
    total = 0.0
    for wi, xs, ys in zip(w, make_subseries(x, plan), make_subseries(y, plan)):
        total += wi * wasserstein(
            series_diagram(xs, spec), series_diagram(ys, spec), spec.p
        )
    return total


def ald(x, y, spec: DistanceSpec) -> float:
    """Weighted average landscape distance over matched sub-series."""
    x, y = _pair_check(x, y)
    plan = spec.resolve_plan(x.shape[0])
    w = subseries_weights(plan, spec.weights)
    total = 0.0
    for wi, xs, ys in zip(w, make_subseries(x, plan), make_subseries(y, plan)):
        total += wi * landscape_distance(
            series_landscape(xs, spec), series_landscape(ys, spec), spec.p
        )
    return total


def dwd(x, y, spec: DistanceSpec) -> float:
    """Distance of the difference-series diagram from the empty diagram.

    Equals zero whenever x - y is constant (the embedded cloud is a single
    repeated point) and, unlike plain Wasserstein between the two diagrams,
    generally changes when one series is time-reversed.
    """
    x, y = _pair_check(x, y)
    return persistence_to_empty(series_diagram(x - y, spec), spec.p)


def dld(x, y, spec: DistanceSpec) -> float:
    """Landscape norm of the difference-series landscape."""
    x, y = _pair_check(x, y)
    return landscape_norm(series_landscape(x - y, spec), spec.p)


def corr_distance(x, y, kind: str) -> float:
    """sqrt(2 (1 - rho)) for Spearman or Pearson correlation rho; lies in [0, 2]."""
    x, y = _pair_check(x, y)
    if x.shape[0] < 2:
        raise ValueError("correlation needs at least 2 observations")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ValueError("correlation distance is undefined for constant series")
    if kind == "spearman":
        x = rankdata(x)
        y = rankdata(y)
    elif kind != "pearson":
        raise ValueError(f"kind must be 'spearman' or 'pearson', got {kind!r}")
    rho = float(np.corrcoef(x, y)[0, 1])
    return math.sqrt(max(0.0, 2.0 * (1.0 - rho)))


def euclid_sq_neg(x, y) -> float:
    """Negative squared Euclidean gap; a similarity, not a distance."""
    x, y = _pair_check(x, y)
    d = x - y
    return -float(d @ d)


def _corr_matrix(series: np.ndarray, kind: str) -> np.ndarray:
    n = series.shape[0]
    for i in range(n):
        if np.ptp(series[i]) == 0.0:
            raise ValueError(f"series {i} is constant; correlation is undefined")
    rows = series
    if kind == "SpearmanDist":
        rows = np.apply_along_axis(rankdata, 1, series)
    rho = np.corrcoef(rows)
    out = np.sqrt(np.maximum(0.0, 2.0 * (1.0 - rho)))
    np.fill_diagonal(out, 0.0)
    return out


def pairwise_matrix(series, spec: DistanceSpec) -> np.ndarray:
    """Symmetric matrix of spec.kind over the rows of ``series``.

    Per-entity diagrams and landscapes are computed once and reused across
    pairs; difference-based kinds need one diagram per pair. The result does
    not depend on evaluation order.
    """
    X = np.asarray(series, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-d array with at least two series")
    n = X.shape[0]
    kind = spec.kind

    if kind == "EuclidSq":
        diff = X[:, None, :] - X[None, :, :]
        return -(diff**2).sum(axis=-1)
    if kind in ("SpearmanDist", "PearsonDist"):
        return _corr_matrix(X, kind)

    out = np.zeros((n, n))
    if kind in ("DWD", "DLD"):
        for i in range(n):
            for j in range(i + 1, n):
                d = dwd(X[i], X[j], spec) if kind == "DWD" else dld(X[i], X[j], spec)
                out[i, j] = out[j, i] = d
        return out

    if kind in ("AWD", "ABD"):
        plan = spec.resolve_plan(X.shape[1])
        w = subseries_weights(plan, spec.weights)
        diagrams = [
            [series_diagram(piece, spec) for piece in make_subseries(X[i], plan)]
            for i in range(n)
        ]
        for i in range(n):
            for j in range(i + 1, n):
                d = sum(
                    wi * wasserstein(di, dj, spec.p)
                    for wi, di, dj in zip(w, diagrams[i], diagrams[j])
                )
                out[i, j] = out[j, i] = d
        return out
    if kind == "ALD":
        plan = spec.resolve_plan(X.shape[1])
        w = subseries_weights(plan, spec.weights)
        lams = [
            [series_landscape(piece, spec) for piece in make_subseries(X[i], plan)]
            for i in range(n)
        ]
        for i in range(n):
            for j in range(i + 1, n):
                d = sum(
                    wi * landscape_distance(li, lj, spec.p)
                    for wi, li, lj in zip(w, lams[i], lams[j])
                )
                out[i, j] = out[j, i] = d
        return out
    if kind == "WD":
        diagrams = [series_diagram(X[i], spec) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = wasserstein(diagrams[i], diagrams[j], spec.p)
        return out
    # LD
    lams = [series_landscape(X[i], spec) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = landscape_distance(lams[i], lams[j], spec.p)
    return out


class PairwiseDistance(BaseEstimator, TransformerMixin):
    """Transformer from an (n_series, n_periods) array to its distance matrix.

    Thin estimator wrapper around pairwise_matrix so distance choice and
    embedding parameters plug into pipelines and grid search. Stateless:
    fit only validates.
    """

    def __init__(
        self,
        kind: str = "AWD",
        p: float = 1.0,
        subseries: SubSeriesPlan | None = None,
        weights: tuple | None = None,
        dim: int = 2,
        delay: int = 1,
        homology_dim: int = 1,
        max_radius: float | None = None,
    ):
        self.kind = kind
        self.p = p
        self.subseries = subseries
        self.weights = weights
        self.dim = dim
        self.delay = delay
        self.homology_dim = homology_dim
        self.max_radius = max_radius

    def _spec(self) -> DistanceSpec:
        return DistanceSpec(
            kind=self.kind,
            p=self.p,
            subseries=self.subseries,
            weights=self.weights,
            dim=self.dim,
            delay=self.delay,
            homology_dim=self.homology_dim,
            max_radius=self.max_radius,
        )

    def fit(self, X, y=None):
        self._spec()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("expected an (n_series, n_periods) array")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        return pairwise_matrix(X, self._spec())


def matrix_to_csv(matrix, ids, path) -> None:
    """Square matrix with identifiers as both header row and first column."""
    matrix = np.asarray(matrix, dtype=np.float64)
    ids = list(ids)
    if matrix.shape != (len(ids), len(ids)):
        raise ValueError(
            f"matrix shape {matrix.shape} does not match {len(ids)} identifiers"
        )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + ids)
        for name, row in zip(ids, matrix):
            writer.writerow([name] + ["%.17g" % v for v in row])


def matrix_from_csv(path):
    """Inverse of matrix_to_csv; returns (matrix, ids)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "":
            raise ValueError("matrix CSV must start with an empty corner cell")
        ids = header[1:]
        rows = []
        for row in reader:
            if not row:
                continue
            if row[0] != ids[len(rows)]:
                raise ValueError(
                    f"row label {row[0]!r} does not match column {ids[len(rows)]!r}"
                )
            rows.append([float(v) for v in row[1:]])
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.shape != (len(ids), len(ids)):
        raise ValueError("matrix CSV is not square")
    return matrix, ids
