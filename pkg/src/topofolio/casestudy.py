"""Control-chart clustering benchmark over the full distance family.

The benchmark clusters a labeled set of control-chart series under each
distance measure and reports clustering accuracy per algorithm, which is how
the series distances are compared head to head outside of a market context.
The canonical input is the UCI synthetic-control file (600 charts of 60
points, six classes in fixed row blocks of 100); ``synthesize_control_charts``
regenerates statistically matching data from the published process for
environments without the file.

Distance names follow the benchmark's own vocabulary: the persistence-based
kinds keep their library names (WD, LD, AWD, ALD, DWD, DLD), ``d1`` and ``d2``
are the Spearman and Pearson correlation distances, and ``ED`` is the plain
Euclidean distance between the raw series.
"""

from __future__ import annotations

import csv
import io
import os

import numpy as np

from .cluster import clustering_accuracy, k_medoids, select_damping
from .distances import DistanceSpec, pairwise_matrix
from .panels import DataError
from .similarity import kernel_from_distances

__all__ = [
    "CASESTUDY_ALGORITHMS",
    "CASESTUDY_DISTANCES",
    "CONTROL_CHART_CLASSES",
    "casestudy_distance_matrix",
    "casestudy_to_csv",
    "load_control_charts",
    "run_casestudy",
    "synthesize_control_charts",
]

CONTROL_CHART_CLASSES = (
    "normal",
    "cyclic",
    "increasing_trend",
    "decreasing_trend",
    "upward_shift",
    "downward_shift",
)

CASESTUDY_DISTANCES = ("WD", "LD", "AWD", "ALD", "DWD", "DLD", "d1", "d2", "ED")
CASESTUDY_ALGORITHMS = ("KMedoids", "APC")

_KIND_BY_NAME = {
    "WD": "WD",
    "LD": "LD",
    "AWD": "AWD",
    "ALD": "ALD",
    "DWD": "DWD",
    "DLD": "DLD",
    "d1": "SpearmanDist",
    "d2": "PearsonDist",
}

_ROWS = 600
_COLS = 60
_BLOCK = 100


def load_control_charts(path):
    """Parse the UCI synthetic-control file into (series, class labels).

    The file is a whitespace-separated stream of 600 x 60 values whose class
    is fixed by row position: rows 0-99 normal, 100-199 cyclic, 200-299
    increasing trend, 300-399 decreasing trend, 400-499 upward shift and
    500-599 downward shift. Returns the value matrix and the integer class
    vector indexing into CONTROL_CHART_CLASSES.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    expected = _ROWS * _COLS
    if len(tokens) != expected:
        raise DataError(
            f"{path}: expected {expected} values ({_ROWS} charts of {_COLS}), "
            f"found {len(tokens)}"
        )
    values = np.empty(expected, dtype=np.float64)
    for pos, token in enumerate(tokens):
        try:
            values[pos] = float(token)
        except ValueError:
            raise DataError(
                f"{path}: token {pos + 1} is not numeric: {token!r}"
            ) from None
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise DataError(f"{path}: token {bad + 1} is not finite")
    series = values.reshape(_ROWS, _COLS)
    labels = np.repeat(np.arange(len(CONTROL_CHART_CLASSES)), _BLOCK)
    return series, labels


def synthesize_control_charts(n_per_class: int = 100, length: int = 60,
                              seed: int = 0):
    """Generate surrogate control charts from the published process.

    Every chart starts from level m = 30 with uniform noise r(t) in [-3, 3]
    scaled by s = 2. Class effects are then added per series: a sinusoid with
    amplitude and period drawn from [10, 15] (cyclic), a slope from
    [0.2, 0.5] times t with either sign (trends), or a level change from
    [7.5, 20] switched on at a time drawn from the middle third of the chart
    with either sign (shifts). Returns (series, labels) shaped like the UCI
    file, classes stacked in CONTROL_CHART_CLASSES order.
    """
    n_per_class = int(n_per_class)
    length = int(length)
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    if length < 4:
        raise ValueError(f"length must be >= 4, got {length}")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    rows = []
    for label in range(len(CONTROL_CHART_CLASSES)):
        for _ in range(n_per_class):
            chart = 30.0 + 2.0 * rng.uniform(-3.0, 3.0, length)
            if label == 1:
                amplitude = rng.uniform(10.0, 15.0)
                period = rng.uniform(10.0, 15.0)
                chart += amplitude * np.sin(2.0 * np.pi * t / period)
            elif label in (2, 3):
                slope = rng.uniform(0.2, 0.5)
                chart += slope * t if label == 2 else -slope * t
            elif label in (4, 5):
                size = rng.uniform(7.5, 20.0)
                onset = rng.uniform(length / 3.0, 2.0 * length / 3.0)
                step = (t >= onset).astype(np.float64)
                chart += size * step if label == 4 else -size * step
            rows.append(chart)
    series = np.vstack(rows)
    labels = np.repeat(np.arange(len(CONTROL_CHART_CLASSES)), n_per_class)
    return series, labels


def casestudy_distance_matrix(series, name: str, *, p: float = 1.0,
                              dim: int = 2, delay: int = 1,
                              homology_dim: int = 1) -> np.ndarray:
    """Distance matrix over chart rows for one named benchmark distance."""
    X = np.asarray(series, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-d array with at least two charts")
    if name == "ED":
        return np.sqrt(-pairwise_matrix(X, DistanceSpec(kind="EuclidSq")))
    if name not in _KIND_BY_NAME:
        raise ValueError(
            f"unknown distance {name!r}; use one of {CASESTUDY_DISTANCES}"
        )
    kind = _KIND_BY_NAME[name]
    if kind in ("SpearmanDist", "PearsonDist"):
        spec = DistanceSpec(kind=kind)
    else:
        spec = DistanceSpec(kind=kind, p=p, dim=dim, delay=delay,
                            homology_dim=homology_dim)
    return pairwise_matrix(X, spec)


def run_casestudy(series, truth, distances=CASESTUDY_DISTANCES,
                  algorithms=CASESTUDY_ALGORITHMS, *, k: int = 6,
                  sigma_sq: float = 0.01, p: float = 1.0, dim: int = 2,
                  delay: int = 1, homology_dim: int = 1,
                  damping_grid=(0.5, 0.6, 0.7, 0.8, 0.9)) -> dict:
    """Accuracy of each distance x algorithm pair on labeled charts.

    K-medoids runs on the raw distances with k clusters; affinity propagation
    runs on the Gaussian kernel exp(-d^2 / sigma_sq) with the damping selected
    by silhouette over the grid. The same embedding and norm parameters feed
    every persistence-based distance. Returns nested dicts
    {distance: {algorithm: accuracy}} preserving the requested order.
    """
    X = np.asarray(series, dtype=np.float64)
    truth = np.asarray(truth).ravel()
    if X.ndim != 2 or X.shape[0] != truth.size:
        raise ValueError("series rows and truth labels must align")
    distances = tuple(distances)
    algorithms = tuple(algorithms)
    if not distances or not algorithms:
        raise ValueError("need at least one distance and one algorithm")
    for algo in algorithms:
        if algo not in CASESTUDY_ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {algo!r}; use one of {CASESTUDY_ALGORITHMS}"
            )
    if not (2 <= k <= X.shape[0]):
        raise ValueError(f"k must lie in [2, {X.shape[0]}], got {k}")
    table = {}
    for name in distances:
        D = casestudy_distance_matrix(X, name, p=p, dim=dim, delay=delay,
                                      homology_dim=homology_dim)
        row = {}
        for algo in algorithms:
            if algo == "KMedoids":
                clustering = k_medoids(D, k)
            else:
                S = kernel_from_distances(D, sigma_sq=sigma_sq)
                clustering = select_damping(S, grid=damping_grid,
                                            distances=D).clustering
            row[algo] = clustering_accuracy(clustering.labels, truth)
        table[name] = row
    return table


def casestudy_to_csv(table: dict, path) -> None:
    """Write the accuracy table as distance,algorithm,accuracy rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["distance", "algorithm", "accuracy"])
    for name, row in table.items():
        for algo, acc in row.items():
            writer.writerow([name, algo, "%.17g" % acc])
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)
