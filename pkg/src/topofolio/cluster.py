"""Clustering of assets from similarity or distance matrices.

Affinity propagation is the primary method: exemplars are actual entities,
and repeated runs on the same input give the same result because nothing is
randomly initialized. K-medoids and average-linkage hierarchical clustering
are provided for comparison, along with the agreement measures used to judge
them (silhouette, adjusted Rand index, Jaccard similarity, assignment-based
accuracy).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import squareform
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_distance_matrix, check_square, check_symmetric

__all__ = [
    "Clustering",
    "APCParams",
    "affinity_propagation",
    "select_damping",
    "DampingSelection",
    "silhouette_score",
    "k_medoids",
    "hierarchical",
    "select_cluster_count",
    "CountSelection",
    "adjusted_rand_index",
    "jaccard_similarity",
    "clustering_accuracy",
    "clustering_to_csv",
    "clustering_from_csv",
    "AffinityPropagation",
    "KMedoids",
    "AverageLinkage",
]


@dataclass(frozen=True)
class Clustering:
    """A partition with one representative entity per cluster.

    labels[i] is the cluster of entity i; exemplars[c] is the entity
    representing cluster c, and its own label is c.
    """

    labels: np.ndarray
    exemplars: tuple
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "exemplars", tuple(int(e) for e in self.exemplars))
        k = len(self.exemplars)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-d array")
        if k == 0:
            raise ValueError("at least one exemplar is required")
        if labels.min() < 0 or labels.max() >= k:
            raise ValueError(f"labels must reference clusters 0..{k - 1}")
        for c, e in enumerate(self.exemplars):
            if not (0 <= e < labels.size):
                raise ValueError(f"exemplar {e} is not an entity")
            if labels[e] != c:
                raise ValueError(f"exemplar {e} of cluster {c} carries label {labels[e]}")

    @property
    def n_clusters(self) -> int:
        return len(self.exemplars)

    @property
    def n_entities(self) -> int:
        return int(self.labels.size)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


@dataclass(frozen=True)
class APCParams:
    """Knobs of the message-passing loop.

    preference is the self-similarity written onto the diagonal before
    iterating; "median" uses the median off-diagonal similarity. Larger
    values produce more exemplars.
    """

    damping: float = 0.5
    preference: float | str = "median"
    max_iterations: int = 500
    stable_iterations: int = 25

    def __post_init__(self):
        if not (0.0 <= self.damping < 1.0):
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")
        if isinstance(self.preference, str) and self.preference != "median":
            raise ValueError("preference must be a real number or 'median'")
        if self.max_iterations < 1 or self.stable_iterations < 1:
            raise ValueError("iteration counts must be positive")


def _similarity_values(S) -> np.ndarray:
    values = getattr(S, "values", S)
    values = check_square(np.asarray(values, dtype=np.float64), "similarity matrix")
    return check_symmetric(values, "similarity matrix")


def affinity_propagation(S, params: APCParams | None = None) -> Clustering:
    """Cluster by exchanging responsibility and availability messages.

    Each round updates all responsibilities from the current availabilities,
    r(i,k) <- s(i,k) - max over k' != k of (a(i,k') + s(i,k')), then all
    availabilities from the fresh responsibilities, and blends both with the
    previous round using the damping weight. Entity k is an exemplar when
    a(k,k) + r(k,k) > 0; the loop stops once that decision set is non-empty
    and unchanged for stable_iterations rounds, or at max_iterations with
    converged=False. An empty set does not count as stable: under heavy
    damping the messages still move long after the (empty) decisions do.
    Non-exemplars join the exemplar they are most similar to.

    If no entity qualifies as an exemplar (deeply negative preference), the
    entity with the largest off-diagonal similarity column sum anchors a
    single cluster and the result is marked not converged.
    """
    if params is None:
        params = APCParams()
    S_in = _similarity_values(S)
    n = S_in.shape[0]
    if n == 0:
        raise ValueError("similarity matrix is empty")
    if n == 1:
        return Clustering(labels=np.zeros(1, np.int64), exemplars=(0,), iterations=0)
    S = S_in.copy()
    if params.preference == "median":
        pref = float(np.median(S[~np.eye(n, dtype=bool)]))
    else:
        pref = float(params.preference)
    np.fill_diagonal(S, pref)

    lam = params.damping
    R = np.zeros((n, n))
    A = np.zeros((n, n))
    rows = np.arange(n)
    current = np.zeros(n, dtype=bool)
    stable = 0
    it = 0
    converged = False
    for it in range(1, params.max_iterations + 1):
        AS = A + S
        top = np.argmax(AS, axis=1)
        first = AS[rows, top]
        AS[rows, top] = -np.inf
        second = AS.max(axis=1)
        R_new = S - first[:, None]
        R_new[rows, top] = S[rows, top] - second
        R = (1.0 - lam) * R_new + lam * R

        Rp = np.maximum(R, 0.0)
        np.fill_diagonal(Rp, np.diag(R))
        colsum = Rp.sum(axis=0)
        A_new = np.minimum(0.0, colsum[None, :] - Rp)
        A_new[rows, rows] = colsum - np.diag(R)
        A = (1.0 - lam) * A_new + lam * A

        decisions = (np.diag(A) + np.diag(R)) > 0.0
        if np.array_equal(decisions, current):
            stable += 1
            if stable >= params.stable_iterations and decisions.any():
                converged = True
                break
        else:
            stable = 0
            current = decisions

    exemplar_idx = np.flatnonzero(current)
    if exemplar_idx.size == 0:
        exemplar_idx = np.array([int(np.argmax(S.sum(axis=0) - np.diag(S)))])
        converged = False
    labels = np.argmax(S[:, exemplar_idx], axis=1)
    labels[exemplar_idx] = np.arange(exemplar_idx.size)
    return Clustering(
        labels=labels,
        exemplars=tuple(int(e) for e in exemplar_idx),
        iterations=it,
        converged=converged,
    )


def silhouette_score(distances, labels) -> float:
    """Mean of (b - a) / max(a, b); singleton-cluster entities contribute 0.

    a is the mean distance to the entity's own cluster (itself excluded) and
    b the smallest mean distance to any other cluster. Needs at least two
    clusters.
    """
    D = check_distance_matrix(distances)
    labels = np.asarray(labels, dtype=np.int64)
    n = D.shape[0]
    if labels.shape != (n,):
        raise ValueError("labels do not match the distance matrix")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    members = {c: np.flatnonzero(labels == c) for c in uniq}
    total = 0.0
    for i in range(n):
        own = members[labels[i]]
        if own.size == 1:
            continue
        a = D[i, own].sum() / (own.size - 1)
        b = np.inf
        for c in uniq:
            if c == labels[i]:
                continue
            other = members[c]
            b = min(b, D[i, other].mean())
        total += (b - a) / max(a, b)
    return total / n


@dataclass(frozen=True)
class DampingSelection:
    damping: float
    clustering: Clustering
    silhouette: float | None
    fallback: bool
    tried: tuple  # (damping, n_clusters, silhouette or None, converged) rows


def select_damping(S, grid=(0.5, 0.6, 0.7, 0.8, 0.9), distances=None,
                   params: APCParams | None = None) -> DampingSelection:
    """Run affinity propagation per damping value, keep the best silhouette.

    The silhouette is computed on ``distances`` (the distance matrix the
    similarities came from). Ties go to the smaller damping. When every run
    yields a single cluster the silhouette is undefined everywhere; the
    largest damping that converged is returned with fallback=True.
    """
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise ValueError("damping grid must be non-empty")
    if distances is None:
        raise ValueError("a distance matrix is needed to score the runs")
    D = check_distance_matrix(distances)
    base = params if params is not None else APCParams()
    tried = []
    results = {}
    best = None  # (score, damping)
    for lam in grid:
        run_params = APCParams(
            damping=lam,
            preference=base.preference,
            max_iterations=base.max_iterations,
            stable_iterations=base.stable_iterations,
        )
        clustering = affinity_propagation(S, run_params)
        results[lam] = clustering
        if clustering.n_clusters >= 2:
            score = silhouette_score(D, clustering.labels)
        else:
            score = None
        tried.append((lam, clustering.n_clusters, score, clustering.converged))
        if score is not None and (best is None or score > best[0]):
            best = (score, lam)
    if best is not None:
        score, lam = best
        return DampingSelection(
            damping=lam,
            clustering=results[lam],
            silhouette=score,
            fallback=False,
            tried=tuple(tried),
        )
    converged = [lam for lam in grid if results[lam].converged]
    lam = max(converged) if converged else max(grid)
    return DampingSelection(
        damping=lam,
        clustering=results[lam],
        silhouette=None,
        fallback=True,
        tried=tuple(tried),
    )


def _medoid_cost(D: np.ndarray, medoids: np.ndarray) -> float:
    return float(D[:, medoids].min(axis=1).sum())


def _greedy_init(D: np.ndarray, k: int) -> np.ndarray:
    """Global medoid first, then repeatedly the entity farthest from the set."""
    n = D.shape[0]
    medoids = [int(np.argmin(D.sum(axis=1)))]
    nearest = D[:, medoids[0]].copy()
    for _ in range(1, k):
        cand = int(np.argmax(nearest))
        medoids.append(cand)
        nearest = np.minimum(nearest, D[:, cand])
    return np.asarray(sorted(medoids), dtype=np.int64)


def _pam_improve(D: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    """Best-improvement swaps until the objective stops decreasing."""
    n = D.shape[0]
    medoids = medoids.copy()
    while True:
        Dm = D[:, medoids]
        order = np.argsort(Dm, axis=1, kind="stable")
        near = order[:, 0]
        d1 = Dm[np.arange(n), near]
        d2 = Dm[np.arange(n), order[:, 1]] if medoids.size > 1 else np.full(n, np.inf)
        in_set = np.zeros(n, dtype=bool)
        in_set[medoids] = True
        best_delta = -1e-12
        best_swap = None
        for h in range(n):
            if in_set[h]:
                continue
            dh = D[:, h]
            # removing medoid m: points whose nearest is m fall back to the
            # cheaper of their second-nearest and the candidate h; everyone
            # else can only improve to h
            gain_other = np.minimum(dh - d1, 0.0)
            for mi in range(medoids.size):
                is_mine = near == mi
                delta = float(
                    np.where(is_mine, np.minimum(dh, d2) - d1, gain_other).sum()
                )
                if delta < best_delta:
                    best_delta = delta
                    best_swap = (mi, h)
        if best_swap is None:
            return medoids
        mi, h = best_swap
        medoids[mi] = h
        medoids.sort()


def _labels_from_medoids(D: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    labels = np.argmin(D[:, medoids], axis=1)
    labels[medoids] = np.arange(medoids.size)
    return labels


def k_medoids(distances, k: int, seed: int | None = None, restarts: int = 0) -> Clustering:
    """PAM-style clustering with a deterministic start.

    The initial medoids are the global medoid plus farthest-first additions;
    best-improvement swaps then run to a local optimum, so the objective
    never increases. Optional random restarts (seeded) keep the best
    objective, breaking ties toward the deterministic run.
    """
    D = check_distance_matrix(distances)
    n = D.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if k == n:
        return Clustering(labels=np.arange(n), exemplars=tuple(range(n)))
    medoids = _pam_improve(D, _greedy_init(D, k))
    cost = _medoid_cost(D, medoids)
    if restarts > 0:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            init = np.asarray(
                sorted(rng.choice(n, size=k, replace=False)), dtype=np.int64
            )
            trial = _pam_improve(D, init)
            trial_cost = _medoid_cost(D, trial)
            if trial_cost < cost:
                medoids, cost = trial, trial_cost
    labels = _labels_from_medoids(D, medoids)
    return Clustering(labels=labels, exemplars=tuple(int(m) for m in medoids))


def hierarchical(distances, k: int) -> Clustering:
    """Average-linkage agglomerative clustering cut at k clusters.

    Each cluster is represented by the member with the smallest total
    distance to the rest of its cluster.
    """
    D = check_distance_matrix(distances)
    n = D.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if n == 1:
        return Clustering(labels=np.zeros(1, np.int64), exemplars=(0,))
    Z = linkage(squareform(D, checks=False), method="average")
    raw = fcluster(Z, t=k, criterion="maxclust")
    # renumber clusters by first appearance and pick min-total-distance reps
    exemplars = []
    labels = np.empty(n, dtype=np.int64)
    seen = {}
    for i, c in enumerate(raw):
        if c not in seen:
            seen[c] = len(seen)
        labels[i] = seen[c]
    for c in range(len(seen)):
        members = np.flatnonzero(labels == c)
        totals = D[np.ix_(members, members)].sum(axis=1)
        exemplars.append(int(members[int(np.argmin(totals))]))
    return Clustering(labels=labels, exemplars=tuple(exemplars))


@dataclass(frozen=True)
class CountSelection:
    k: int
    clustering: Clustering
    silhouette: float
    tried: tuple  # (k, silhouette) rows


def select_cluster_count(distances, k_values, method: str = "kmedoids",
                         seed: int | None = None) -> CountSelection:
    """Pick the cluster count maximizing the silhouette; ties take smaller k."""
    D = check_distance_matrix(distances)
    k_values = [int(k) for k in k_values]
    if not k_values:
        raise ValueError("k_values must be non-empty")
    if method == "kmedoids":
        fit = lambda k: k_medoids(D, k, seed=seed)
    elif method == "hierarchical":
        fit = lambda k: hierarchical(D, k)
    else:
        raise ValueError(f"method must be 'kmedoids' or 'hierarchical', got {method!r}")
    best = None
    tried = []
    for k in sorted(set(k_values)):
        clustering = fit(k)
        if len(set(clustering.labels.tolist())) < 2:
            continue
        score = silhouette_score(D, clustering.labels)
        tried.append((k, score))
        if best is None or score > best[0]:
            best = (score, k, clustering)
    if best is None:
        raise ValueError("no k in the grid produced at least 2 clusters")
    score, k, clustering = best
    return CountSelection(k=k, clustering=clustering, silhouette=score, tried=tuple(tried))


def _comb2(x: np.ndarray) -> float:
    return float((x * (x - 1) / 2.0).sum())


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected pair-counting agreement between two partitions."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ValueError("label vectors must be non-empty and equally long")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(contingency, (ai, bi), 1.0)
    sum_cells = _comb2(contingency)
    sum_rows = _comb2(contingency.sum(axis=1))
    sum_cols = _comb2(contingency.sum(axis=0))
    total = a.size * (a.size - 1) / 2.0
    # cleared-denominator form: every term is an exactly represented integer
    numer = sum_cells * total - sum_rows * sum_cols
    denom = (sum_rows + sum_cols) / 2.0 * total - sum_rows * sum_cols
    if denom == 0.0:
        return 1.0
    return numer / denom


def jaccard_similarity(a, b) -> float:
    """|A and B| / |A or B|; two empty sets count as identical."""
    a = set(a)
    b = set(b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def clustering_accuracy(labels, truth) -> float:
    """Best achievable fraction of matches over one-to-one cluster renamings."""
    labels = np.asarray(labels).ravel()
    truth = np.asarray(truth).ravel()
    if labels.shape != truth.shape or labels.size == 0:
        raise ValueError("label vectors must be non-empty and equally long")
    _, li = np.unique(labels, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    confusion = np.zeros((li.max() + 1, ti.max() + 1))
    np.add.at(confusion, (li, ti), 1.0)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return float(confusion[rows, cols].sum()) / labels.size


def clustering_to_csv(clustering: Clustering, ids, path) -> None:
    ids = list(ids)
    if len(ids) != clustering.n_entities:
        raise ValueError(
            f"{len(ids)} identifiers for {clustering.n_entities} entities"
        )
    exemplar_set = set(clustering.exemplars)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity_id", "cluster_id", "is_exemplar"])
        for i, name in enumerate(ids):
            writer.writerow(
                [name, int(clustering.labels[i]), int(i in exemplar_set)]
            )


def clustering_from_csv(path):
    """Returns (Clustering, ids)."""
    ids = []
    labels = []
    exemplar_rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["entity_id", "cluster_id", "is_exemplar"]:
            raise ValueError(f"unexpected clustering CSV header: {header}")
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            labels.append(int(row[1]))
            if int(row[2]):
                exemplar_rows.append(len(ids) - 1)
    labels = np.asarray(labels, dtype=np.int64)
    exemplars = sorted(exemplar_rows, key=lambda i: labels[i])
    return Clustering(labels=labels, exemplars=tuple(exemplars)), ids


class AffinityPropagation(BaseEstimator, ClusterMixin):
    """Estimator form of affinity_propagation over a precomputed similarity."""

    def __init__(self, damping: float = 0.5, preference="median",
                 max_iterations: int = 500, stable_iterations: int = 25):
        self.damping = damping
        self.preference = preference
        self.max_iterations = max_iterations
        self.stable_iterations = stable_iterations

    def fit(self, X, y=None):
        params = APCParams(
            damping=self.damping,
            preference=self.preference,
            max_iterations=self.max_iterations,
            stable_iterations=self.stable_iterations,
        )
        result = affinity_propagation(X, params)
        self.labels_ = result.labels
        self.exemplar_indices_ = np.asarray(result.exemplars, dtype=np.int64)
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        return self



class KMedoids(BaseEstimator, ClusterMixin):
    """Estimator form of k_medoids over a precomputed distance matrix."""

    def __init__(self, n_clusters: int = 2, seed: int | None = None, restarts: int = 0):
        self.n_clusters = n_clusters
        self.seed = seed
        self.restarts = restarts

    def fit(self, X, y=None):
        result = k_medoids(X, self.n_clusters, seed=self.seed, restarts=self.restarts)
        self.labels_ = result.labels
        self.medoid_indices_ = np.asarray(result.exemplars, dtype=np.int64)
        return self



class AverageLinkage(BaseEstimator, ClusterMixin):
    """Estimator form of hierarchical over a precomputed distance matrix."""

    def __init__(self, n_clusters: int = 2):
        self.n_clusters = n_clusters

    def fit(self, X, y=None):
        result = hierarchical(X, self.n_clusters)
        self.labels_ = result.labels
        self.representative_indices_ = np.asarray(result.exemplars, dtype=np.int64)
        return self

