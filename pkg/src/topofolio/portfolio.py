"""Long-only portfolio construction on the unit simplex.

All solvers minimize a convex quadratic over {w : sum(w) = 1, w >= 0} with a
primal active-set method started from equal weights. The subproblem on each
working set is solved directly, so optimality is detected exactly through the
KKT conditions instead of a step-size schedule, and the path from equal
weights makes the returned minimizer deterministic even when the objective is
rank-deficient and the minimizer is not unique.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from ._validation import as_float_matrix, as_series, check_symmetric
from .similarity import INDEX_ID

__all__ = [
    "Portfolio",
    "MomentEstimates",
    "estimate_moments",
    "solve_mv",
    "solve_gmv",
    "solve_index_tracking",
    "solve_it_cardinality",
    "select_max_similarity",
    "tracking_error_variance",
    "portfolio_to_csv",
    "portfolio_from_csv",
]

_WEIGHT_FLOOR = 1e-10


@dataclass(frozen=True)
class Portfolio:
    """Simplex weights keyed by asset id; exact zeros are dropped.

    Entries in [-1e-10, 0] are treated as solver dust and clipped away;
    anything more negative is rejected. The surviving weights must sum to 1
    within 1e-8.
    """

    weights: dict

    def __post_init__(self):
        clean = {}
        total = 0.0
        for key, value in self.weights.items():
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"weight for {key!r} is not finite")
            if value < -_WEIGHT_FLOOR:
                raise ValueError(f"negative weight {value} for {key!r}")
            if value <= 0.0:
                continue
            clean[str(key)] = value
            total += value
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"weights sum to {total}, expected 1")
        object.__setattr__(self, "weights", clean)

    @property
    def n_active(self) -> int:
        return len(self.weights)

    def weight(self, asset_id) -> float:
        return self.weights.get(str(asset_id), 0.0)

    def as_vector(self, asset_ids) -> np.ndarray:
        return np.array([self.weights.get(str(a), 0.0) for a in asset_ids])


@dataclass(frozen=True)
class MomentEstimates:
    """Sample mean vector and covariance matrix of simple returns."""

    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        mu = as_series(self.mu, "mu")
        Sigma = check_symmetric(self.Sigma, "Sigma", tol=1e-10)
        if Sigma.shape[0] != mu.size:
            raise ValueError(
                f"mu has {mu.size} entries but Sigma is {Sigma.shape}"
            )
        if Sigma.size and np.min(np.diag(Sigma)) < 0.0:
            raise ValueError("Sigma has negative diagonal entries")
        mu.setflags(write=False)
        Sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)

    @property
    def n_assets(self) -> int:
        return int(self.mu.size)


def estimate_moments(R) -> MomentEstimates:
    """Sample mean and T-1 denominator covariance; rows are observations."""
    R = as_float_matrix(R, "returns")
    if R.shape[0] < 2:
        raise ValueError("moment estimation needs at least 2 observations")
    if R.shape[1] < 1:
        raise ValueError("moment estimation needs at least 1 asset")
    mu = R.mean(axis=0)
    Sigma = np.atleast_2d(np.cov(R, rowvar=False, ddof=1))
    Sigma = (Sigma + Sigma.T) / 2.0
    return MomentEstimates(mu=mu, Sigma=Sigma)


def _default_ids(n: int) -> tuple:
    return tuple(str(i) for i in range(n))


def _psd_ridge(Sigma: np.ndarray) -> np.ndarray:
    """Symmetrize and lift the spectrum when roundoff made it indefinite."""
    sym = (Sigma + Sigma.T) / 2.0
    if sym.shape[0] == 0:
        return sym
    smallest = float(np.linalg.eigvalsh(sym)[0])
    if smallest < -1e-10:
        sym = sym + (1e-10 - smallest) * np.eye(sym.shape[0])
    return sym


def _simplex_qp(Q: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Minimize 0.5 w'Qw + c'w over the simplex, Q symmetric PSD.

    Primal active set from equal weights. Each working set solves the
    equality-constrained subproblem via a direct (least-squares) solve; when
    the subproblem is unbounded (Q singular along the face) a projected
    gradient step stands in, which still terminates because every such step
    either hits a bound or certifies face stationarity.
    """
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    w = np.full(n, 1.0 / n)
    free = np.ones(n, dtype=bool)
    bound_tol = 1e-11
    for _ in range(60 * (n + 1)):
        F = np.flatnonzero(free)
        k = F.size
        KKT = np.zeros((k + 1, k + 1))
        KKT[:k, :k] = Q[np.ix_(F, F)]
        KKT[:k, k] = -1.0  # stationarity reads Qw + c = nu * 1
        KKT[k, :k] = 1.0
        rhs = np.concatenate([-c[F], [1.0]])
        sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
        consistent = (
            np.abs(KKT @ sol - rhs).max() <= 1e-9 * max(1.0, np.abs(rhs).max())
        )
        if consistent:
            cand = np.zeros(n)
            cand[F] = sol[:k]
            nu = sol[k]
            if cand[F].min() >= -bound_tol:
                w = np.clip(cand, 0.0, None)
                w /= w.sum()
                g = Q @ w + c
                blocked = np.flatnonzero(~free)
                if blocked.size == 0:
                    return w
                multipliers = g[blocked] - nu
                worst = int(np.argmin(multipliers))
                if multipliers[worst] >= -1e-9 * max(1.0, np.abs(g).max()):
                    return w
                free[blocked[worst]] = True
                continue
            # walk toward the candidate until a bound blocks the step
            d = cand - w
            cap = 1.0
        else:
            # unbounded subproblem: steepest descent within the face
            g = Q @ w + c
            d = np.zeros(n)
            d[F] = -(g[F] - g[F].mean())
            scale_g = max(1.0, np.abs(g).max())
            if np.abs(d).max() <= 1e-12 * scale_g:
                nu = g[F].mean()
                blocked = np.flatnonzero(~free)
                if blocked.size == 0:
                    return w
                multipliers = g[blocked] - nu
                worst = int(np.argmin(multipliers))
                if multipliers[worst] >= -1e-9 * scale_g:
                    return w
                free[blocked[worst]] = True
                continue
            dQd = float(d @ Q @ d)
            cap = float(-(d @ g)) / dQd if dQd > 0.0 else np.inf
        negative = d < -1e-300
        if negative.any():
            ratios = -w[negative] / d[negative]
            alpha = min(cap, float(ratios.min()))
        else:
            alpha = cap
        if not np.isfinite(alpha):
            raise RuntimeError("active-set solver found an unbounded direction")
        w = w + alpha * d
        hit = free & (w <= bound_tol)
        w[hit] = 0.0
        free[hit] = False
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        if not free.any():
            raise RuntimeError("active-set solver emptied the working set")
    raise RuntimeError("active-set solver exceeded its iteration limit")


def _kkt_residual(Q: np.ndarray, c: np.ndarray, w: np.ndarray) -> float:
    """Max violation of the simplex-QP optimality conditions at w."""
    g = Q @ w + c
    support = w > 1e-12
    if not support.any():
        return float("inf")
    nu = g[support].mean()
    stationarity = float(np.abs(g[support] - nu).max())
    bound = float(max(0.0, (nu - g[~support]).max())) if (~support).any() else 0.0
    feasibility = abs(float(w.sum()) - 1.0)
    negativity = float(max(0.0, -w.min()))
    return max(stationarity, bound, feasibility, negativity)


def _solve_checked(Q: np.ndarray, c: np.ndarray) -> np.ndarray:
    w = _simplex_qp(Q, c)
    g_scale = max(1.0, float(np.abs(Q @ w + c).max()))
    residual = _kkt_residual(Q, c, w)
    if residual > 1e-8 * g_scale:
        raise RuntimeError(
            f"solver stopped with KKT residual {residual:.3e}"
        )
    return w


def _finish(w: np.ndarray, asset_ids) -> Portfolio:
    w = np.clip(w, 0.0, None)
    w[w < _WEIGHT_FLOOR] = 0.0  # keep the map aligned with CSV output
    w = w / w.sum()
    return Portfolio(weights={a: x for a, x in zip(asset_ids, w) if x > 0.0})


def solve_mv(est: MomentEstimates, gamma: float = 1.0, asset_ids=None) -> Portfolio:
    """Maximize w'mu - (gamma/2) w'Sigma w over the simplex."""
    if not (math.isfinite(gamma) and gamma > 0.0):
        raise ValueError(f"gamma must be positive, got {gamma}")
    if asset_ids is None:
        asset_ids = _default_ids(est.n_assets)
    Q = gamma * _psd_ridge(est.Sigma)
    w = _solve_checked(Q, -est.mu)
    return _finish(w, asset_ids)


def solve_gmv(est: MomentEstimates, asset_ids=None) -> Portfolio:
    """Minimize w'Sigma w over the simplex; expected returns play no part."""
    if asset_ids is None:
        asset_ids = _default_ids(est.n_assets)
    Q = 2.0 * _psd_ridge(est.Sigma)
    w = _solve_checked(Q, np.zeros(est.n_assets))
    return _finish(w, asset_ids)


def tracking_error_variance(R, r0, w) -> float:
    """Mean squared deviation of portfolio returns from the index."""
    R = as_float_matrix(R, "returns")
    r0 = as_series(r0, "index returns")
    w = as_series(w, "weights")
    return float(np.mean((R @ w - r0) ** 2))


def _tracking_terms(R: np.ndarray, r0: np.ndarray):
    T = R.shape[0]
    Q = (2.0 / T) * (R.T @ R)
    Q = (Q + Q.T) / 2.0
    c = -(2.0 / T) * (R.T @ r0)
    return Q, c


def _check_tracking_inputs(R, r0):
    R = as_float_matrix(R, "returns")
    r0 = as_series(r0, "index returns")
    if R.shape[1] == 0:
        raise ValueError("candidate asset set is empty")
    if R.shape[0] != r0.size or r0.size < 1:
        raise ValueError(
            f"{R.shape[0]} return rows do not match {r0.size} index returns"
        )
    return R, r0


def solve_index_tracking(R, r0, asset_ids=None) -> Portfolio:
    """Minimize (1/T) ||Rw - r0||^2 over the simplex.

    With more assets than observations the minimizer is generally not
    unique; the active-set path from equal weights (with minimum-norm
    subproblem solutions) fixes which one is returned.
    """
    R, r0 = _check_tracking_inputs(R, r0)
    if asset_ids is None:
        asset_ids = _default_ids(R.shape[1])
    Q, c = _tracking_terms(R, r0)
    w = _solve_checked(Q, c)
    return _finish(w, asset_ids)


def solve_it_cardinality(R, r0, k_max: int, time_budget: float = 60.0,
                         max_evals: int | None = None, asset_ids=None,
                         stats: dict | None = None) -> Portfolio:
    """Index tracking with at most k_max holdings.

    Greedy forward selection adds the asset whose refit most reduces the
    tracking error variance, then single-asset swaps run until none improves
    or the budget (wall-clock seconds, optionally an evaluation count for
    reproducible runs) is spent. A heuristic: the support is not guaranteed
    globally optimal, but the result is never worse than the best greedy
    prefix. A ``stats`` dict, when given, receives the refit count under
    "evals" so budgeted runs can be compared.
    """
    R, r0 = _check_tracking_inputs(R, r0)
    n = R.shape[1]
    if not (1 <= k_max <= n):
        raise ValueError(f"k_max must lie in [1, {n}], got {k_max}")
    if not time_budget > 0.0:
        raise ValueError(f"time budget must be positive, got {time_budget}")
    if max_evals is not None and max_evals < 1:
        raise ValueError(f"max_evals must be positive, got {max_evals}")
    if asset_ids is None:
        asset_ids = _default_ids(n)
    if k_max == n:
        if stats is not None:
            stats["evals"] = 0
        return solve_index_tracking(R, r0, asset_ids)

    deadline = time.monotonic() + time_budget
    state = {"evals": 0}
    cache = {}

    def exhausted():
        if max_evals is not None and state["evals"] >= max_evals:
            return True
        return time.monotonic() >= deadline

    def refit(support):
        if support in cache:
            return cache[support]
        state["evals"] += 1
        cols = np.asarray(support)
        Q, c = _tracking_terms(R[:, cols], r0)
        w = _solve_checked(Q, c)
        objective = tracking_error_variance(R[:, cols], r0, w)
        cache[support] = (objective, w)
        return cache[support]

    best_support = None
    best_objective = np.inf
    support = ()
    for _ in range(k_max):
        step_best = None
        for j in range(n):
            if j in support:
                continue
            trial = tuple(sorted(support + (j,)))
            objective, _ = refit(trial)
            if step_best is None or objective < step_best[0]:
                step_best = (objective, trial)
        support = step_best[1]
        if step_best[0] < best_objective:
            best_objective, best_support = step_best[0], support
        if exhausted():
            break

    improved = True
    while improved and not exhausted():
        improved = False
        swap_best = None
        for out in best_support:
            for j in range(n):
                if j in best_support:
                    continue
                trial = tuple(sorted(set(best_support) - {out} | {j}))
                objective, _ = refit(trial)
                if objective < best_objective - 1e-15 and (
                    swap_best is None or objective < swap_best[0]
                ):
                    swap_best = (objective, trial)
                if exhausted():
                    break
            if exhausted():
                break
        if swap_best is not None:
            best_objective, best_support = swap_best
            improved = True

    _, w = refit(best_support)
    if stats is not None:
        stats["evals"] = state["evals"]
    ids = [asset_ids[j] for j in best_support]
    return _finish(w, ids)


def select_max_similarity(S, m: int) -> tuple:
    """The m assets most similar to the index row, in panel order."""
    entities = getattr(S, "entities", None)
    values = getattr(S, "values", None)
    if entities is None or values is None:
        raise TypeError("expected a similarity matrix with entities and values")
    if INDEX_ID not in entities:
        raise ValueError(f"similarity matrix has no {INDEX_ID} row")
    idx = entities.index(INDEX_ID)
    asset_positions = np.array([i for i in range(len(entities)) if i != idx])
    if not (1 <= m <= asset_positions.size):
        raise ValueError(f"m must lie in [1, {asset_positions.size}], got {m}")
    sims = values[idx, asset_positions]
    order = np.argsort(-sims, kind="stable")[:m]
    chosen = np.sort(asset_positions[order])
    return tuple(entities[i] for i in chosen)


def portfolio_to_csv(portfolio: Portfolio, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["asset_id", "weight"])
        for asset_id, weight in portfolio.weights.items():
            if weight >= _WEIGHT_FLOOR:
                writer.writerow([asset_id, "%.17g" % weight])


def portfolio_from_csv(path) -> Portfolio:
    weights = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["asset_id", "weight"]:
            raise ValueError(f"unexpected portfolio CSV header: {header}")
        for row in reader:
            if not row:
                continue
            weights[row[0]] = float(row[1])
    return Portfolio(weights=weights)
