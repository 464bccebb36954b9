"""Rolling-window backtests of cluster-based portfolios, metrics, and tests.

Two clustering strategies and a set of benchmark rules share one protocol:
slide an in-sample window over the return history, build a portfolio from
in-sample data only, hold it unchanged over the following out-of-sample
segment, and concatenate the held-out returns for evaluation. Log returns
feed the similarity kernels; simple returns feed moment estimation, the
optimizers, and realized performance. K7 is the exception on the kernel
side, since its similarity is the negative squared gap between simple
return series.

Turnover compares consecutive windows' starting weights (the first window
has no predecessor and is skipped, so the normalizer N is the number of
rebalances). Holdings are not drift-adjusted within a window.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .cluster import (
    APCParams,
    Clustering,
    affinity_propagation,
    clustering_to_csv,
    select_cluster_count,
    select_damping,
)
from .distances import DistanceSpec, pairwise_matrix
from .panels import PricePanel, ReturnPanel, WindowPlan, compute_returns, make_windows
from .portfolio import (
    Portfolio,
    estimate_moments,
    select_max_similarity,
    solve_gmv,
    solve_index_tracking,
    solve_it_cardinality,
    solve_mv,
)
from .similarity import (
    KERNELS,
    SimilarityMatrix,
    kernel_distance_spec,
    kernel_from_distances,
    panel_series,
)

__all__ = [
    "STRATEGIES",
    "CLUSTERING_ALGOS",
    "StrategyConfig",
    "WindowResult",
    "BacktestReport",
    "run_strategy1",
    "run_strategy2",
    "run_benchmark",
    "run_backtest",
    "tracking_metrics",
    "wealth_metrics",
    "ttest_one_tailed",
    "sharpe_z_test",
    "ceq_test",
    "compare_series",
    "compare_reports",
    "report_to_dict",
    "report_to_json",
    "write_report_files",
]

STRATEGIES = (
    "IndexTracking",
    "MV",
    "GMV",
    "MaxSimilarity",
    "CardinalityIT",
    "FullReplication",
    "Naive",
)

CLUSTERING_ALGOS = ("APC", "KMedoids", "Hierarchical")

#: strategies whose portfolio comes out of run_benchmark
BENCHMARK_STRATEGIES = (
    "MaxSimilarity",
    "CardinalityIT",
    "FullReplication",
    "Naive",
    "MV",
    "GMV",
)


@dataclass(frozen=True)
class StrategyConfig:
    """Everything one backtest run depends on besides the price panel.

    ``strategy`` picks the portfolio rule; MV and GMV mean exemplar
    portfolios under run_strategy2 and all-asset portfolios under
    run_benchmark. ``window`` is (in_len, out_len, step) in return periods.
    ``apc`` left unset selects the damping per window by silhouette over
    ``damping_grid``; ``cluster_counts`` left unset derives a silhouette
    grid for the medoid and linkage algorithms. ``sigma_sq`` switches the
    exponential kernels from local scaling (parameter ``m``) to a fixed
    bandwidth. ``cardinality_max_evals`` caps the refit count of the
    cardinality heuristic so a run is reproducible regardless of wall-clock
    speed.
    """

    strategy: str
    kernel_id: str = "K1"
    distance_spec: DistanceSpec | None = None
    apc: APCParams | None = None
    clustering_algo: str = "APC"
    window: tuple = (126, 21, 21)
    gamma: float = 1.0
    m: int = 7
    sigma_sq: float | None = None
    damping_grid: tuple = (0.5, 0.6, 0.7, 0.8, 0.9)
    cluster_counts: tuple | None = None
    max_similarity_m: int = 20
    cardinality_k: int = 20
    cardinality_budget: float = 60.0
    cardinality_max_evals: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; use one of {STRATEGIES}"
            )
        if self.kernel_id not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel_id!r}")
        if self.clustering_algo not in CLUSTERING_ALGOS:
            raise ValueError(
                f"unknown clustering algorithm {self.clustering_algo!r}; "
                f"use one of {CLUSTERING_ALGOS}"
            )
        window = tuple(int(v) for v in self.window)
        if len(window) != 3 or min(window) < 1:
            raise ValueError(
                f"window must be (in_len, out_len, step) with positive entries, "
                f"got {self.window!r}"
            )
        object.__setattr__(self, "window", window)
        gamma = float(self.gamma)
        if not (math.isfinite(gamma) and gamma > 0.0):
            raise ValueError(f"gamma must be a positive real, got {self.gamma!r}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "damping_grid",
                           tuple(float(g) for g in self.damping_grid))
        if self.cluster_counts is not None:
            counts = tuple(int(k) for k in self.cluster_counts)
            if not counts or min(counts) < 1:
                raise ValueError(f"bad cluster_counts {self.cluster_counts!r}")
            object.__setattr__(self, "cluster_counts", counts)
        if self.max_similarity_m < 1:
            raise ValueError(f"max_similarity_m must be >= 1, got {self.max_similarity_m}")
        if self.cardinality_k < 1:
            raise ValueError(f"cardinality_k must be >= 1, got {self.cardinality_k}")


@dataclass(frozen=True)
class WindowResult:
    """One window's selection, weights, and held-out returns.

    ``cluster_snapshot`` and ``cluster_entities`` are present for the
    clustering strategies and None for benchmark rules; the entities tuple
    names the snapshot's rows (index first) so labels stay interpretable
    after the window's similarity matrix is gone.
    """

    window: WindowPlan
    selected_assets: frozenset
    weights: Portfolio
    oos_portfolio_returns: np.ndarray
    oos_index_returns: np.ndarray
    cluster_snapshot: Clustering | None = None
    cluster_entities: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.weights, Portfolio):
            raise TypeError("weights must be a Portfolio")
        out_len = self.window.out_end - self.window.out_start
        rp = np.asarray(self.oos_portfolio_returns, dtype=np.float64)
        ri = np.asarray(self.oos_index_returns, dtype=np.float64)
        if rp.shape != (out_len,) or ri.shape != (out_len,):
            raise ValueError(
                f"out-of-sample return sequences must have length {out_len}, "
                f"got {rp.shape} and {ri.shape}"
            )
        if not (np.all(np.isfinite(rp)) and np.all(np.isfinite(ri))):
            raise ValueError("out-of-sample returns must be finite")
        rp = rp.copy()
        ri = ri.copy()
        rp.setflags(write=False)
        ri.setflags(write=False)
        object.__setattr__(self, "oos_portfolio_returns", rp)
        object.__setattr__(self, "oos_index_returns", ri)
        object.__setattr__(self, "selected_assets",
                           frozenset(str(a) for a in self.selected_assets))
        if self.cluster_snapshot is not None:
            entities = self.cluster_entities
            if entities is None or len(entities) != self.cluster_snapshot.n_entities:
                raise ValueError(
                    "cluster_snapshot needs a matching cluster_entities tuple"
                )
            object.__setattr__(self, "cluster_entities",
                               tuple(str(e) for e in entities))


@dataclass(frozen=True)
class BacktestReport:
    """Per-window results plus aggregate metrics, tests, and warning flags.

    ``metrics`` maps every metric name to a float or to None when the value
    is undefined on this run (the reason is then in ``flags``). ``tests``
    maps a test name to its (statistic, p_value) pair.
    """

    config: StrategyConfig | None
    per_window: tuple
    metrics: dict
    tests: dict
    flags: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "per_window", tuple(self.per_window))
        if not self.per_window:
            raise ValueError("a report needs at least one window")
        for res in self.per_window:
            if not isinstance(res, WindowResult):
                raise TypeError("per_window must contain WindowResult entries")
        object.__setattr__(self, "flags", tuple(str(f) for f in self.flags))


# ---------------------------------------------------------------------------
# rolling engine


@dataclass(frozen=True)
class _Frame:
    """Per-window data views: kernel input panel plus simple-return blocks."""

    window: WindowPlan
    kernel_panel: ReturnPanel  # in-sample returns feeding the kernel
    R_in: np.ndarray           # (T_in, n) simple in-sample returns, assets as columns
    r0_in: np.ndarray          # (T_in,) simple in-sample index returns
    R_out: np.ndarray          # (n, out_len) simple out-of-sample returns
    r0_out: np.ndarray         # (out_len,)


def _slice_panel(panel: ReturnPanel, start: int, end: int) -> ReturnPanel:
    return ReturnPanel(
        kind=panel.kind,
        dates=panel.dates[start:end],
        index_returns=panel.index_returns[start:end],
        asset_returns=panel.asset_returns[:, start:end],
        asset_ids=panel.asset_ids,
    )


def _frames(panel: PricePanel, config: StrategyConfig):
    simple = compute_returns(panel, "simple")
    kernel_source = simple if config.kernel_id == "K7" else compute_returns(panel, "log")
    in_len, out_len, step = config.window
    frames = []
    for window in make_windows(simple.n_periods, in_len, out_len, step):
        frames.append(_Frame(
            window=window,
            kernel_panel=_slice_panel(kernel_source, window.in_start, window.in_end),
            R_in=simple.asset_returns[:, window.in_start:window.in_end].T,
            r0_in=simple.index_returns[window.in_start:window.in_end],
            R_out=simple.asset_returns[:, window.out_start:window.out_end],
            r0_out=simple.index_returns[window.out_start:window.out_end],
        ))
    return frames


def _window_similarity(frame: _Frame, config: StrategyConfig):
    """Similarity matrix over index plus assets, and the distance matrix
    behind it that silhouettes and medoid clustering run on."""
    spec = kernel_distance_spec(config.kernel_id, config.distance_spec)
    ids, rows = panel_series(frame.kernel_panel)
    dist = pairwise_matrix(rows, spec)
    if config.kernel_id == "K7":
        return SimilarityMatrix("K7", ids, dist), -dist
    values = kernel_from_distances(dist, m=config.m, sigma_sq=config.sigma_sq)
    return SimilarityMatrix(config.kernel_id, ids, values), dist


def _count_grid(n_entities: int, config: StrategyConfig) -> tuple:
    if config.cluster_counts is not None:
        return config.cluster_counts
    grid = tuple(k for k in range(10, 51) if k < n_entities)
    if not grid:
        grid = tuple(range(2, n_entities)) or (min(2, n_entities),)
    return grid


def _cluster_window(S: SimilarityMatrix, distances: np.ndarray,
                    config: StrategyConfig, w_idx: int, flags: list) -> Clustering:
    if config.clustering_algo == "APC":
        if config.apc is not None:
            clustering = affinity_propagation(S, config.apc)
            if not clustering.converged:
                flags.append(f"window {w_idx}: affinity propagation did not converge")
            return clustering
        chosen = select_damping(S, grid=config.damping_grid, distances=distances)
        if chosen.fallback:
            flags.append(
                f"window {w_idx}: every damping produced a single cluster; "
                f"kept damping {chosen.damping:g}"
            )
        return chosen.clustering
    method = "kmedoids" if config.clustering_algo == "KMedoids" else "hierarchical"
    grid = _count_grid(distances.shape[0], config)
    return select_cluster_count(distances, grid, method=method).clustering


def _held_out_returns(frame: _Frame, weights: Portfolio, asset_ids) -> np.ndarray:
    rows = {a: i for i, a in enumerate(asset_ids)}
    active = sorted(weights.weights, key=rows.__getitem__)
    vec = weights.as_vector(active)
    R = frame.R_out[[rows[a] for a in active], :]
    return vec @ R


def _window_context(w_idx: int, exc: Exception) -> Exception:
    """The same error with the failing window prepended to its message."""
    if str(exc).startswith("window "):
        return exc
    message = f"window {w_idx}: {exc}"
    try:
        return type(exc)(message)
    except TypeError:
        return RuntimeError(message)


def _strategy2_entities(clustering: Clustering, values: np.ndarray) -> list:
    """Entity indices of the investable exemplars, one per cluster.

    Entity 0 is the index and is never investable: a cluster whose exemplar
    is the index contributes its best substitute instead, the member with
    the largest total similarity to the cluster, and is skipped when the
    index is its only member.
    """
    chosen = []
    for c, exemplar in enumerate(clustering.exemplars):
        if exemplar != 0:
            chosen.append(int(exemplar))
            continue
        members = np.flatnonzero(clustering.labels == c)
        candidates = members[members != 0]
        if candidates.size == 0:
            continue
        totals = values[np.ix_(candidates, members)].sum(axis=1)
        chosen.append(int(candidates[int(np.argmax(totals))]))
    return sorted(chosen)


def run_strategy1(panel: PricePanel, config: StrategyConfig) -> BacktestReport:
    """Backtest the cluster-then-track rule.

    Per window: build the similarity matrix over the index and all assets,
    cluster, and form a tracking portfolio from the assets sharing the
    index's cluster (the index itself is not investable). When the index
    sits alone in its cluster the selection falls back to the assets most
    similar to the index, which is flagged in the report.
    """
    if config.strategy != "IndexTracking":
        raise ValueError(
            f"run_strategy1 expects strategy 'IndexTracking', got {config.strategy!r}"
        )
    flags: list = []
    results = []
    for w_idx, frame in enumerate(_frames(panel, config)):
        try:
            S, distances = _window_similarity(frame, config)
            clustering = _cluster_window(S, distances, config, w_idx, flags)
            entities = S.entities
            index_label = int(clustering.labels[0])
            members = np.flatnonzero(clustering.labels == index_label)
            selected = tuple(entities[i] for i in members if i != 0)
            if not selected:
                m_eff = min(config.max_similarity_m, panel.n_assets)
                selected = select_max_similarity(S, m_eff)
                flags.append(
                    f"window {w_idx}: index cluster has no assets; "
                    f"fell back to the {m_eff} most index-similar assets"
                )
            rows = [panel.asset_ids.index(a) for a in selected]
            weights = solve_index_tracking(frame.R_in[:, rows], frame.r0_in,
                                           asset_ids=selected)
        except Exception as exc:
            raise _window_context(w_idx, exc) from exc
        results.append(WindowResult(
            window=frame.window,
            selected_assets=frozenset(selected),
            weights=weights,
            oos_portfolio_returns=_held_out_returns(frame, weights, panel.asset_ids),
            oos_index_returns=frame.r0_out,
            cluster_snapshot=clustering,
            cluster_entities=entities,
        ))
    return _assemble(config, results, flags)


def run_strategy2(panel: PricePanel, config: StrategyConfig) -> BacktestReport:
    """Backtest the cluster-then-diversify rule.

    Per window: cluster the index and all assets, keep one exemplar per
    cluster (substituting the index by its cluster's most central asset if
    the index itself comes out as an exemplar), estimate moments on the
    exemplars' in-sample simple returns, and hold the MV or GMV portfolio.
    """
    if config.strategy not in ("MV", "GMV"):
        raise ValueError(
            f"run_strategy2 expects strategy 'MV' or 'GMV', got {config.strategy!r}"
        )
    flags: list = []
    results = []
    for w_idx, frame in enumerate(_frames(panel, config)):
        try:
            S, distances = _window_similarity(frame, config)
            clustering = _cluster_window(S, distances, config, w_idx, flags)
            entities = S.entities
            chosen = _strategy2_entities(clustering, S.values)
            if not chosen:
                raise ValueError(
                    f"window {w_idx}: every cluster exemplar is the index; "
                    "no investable asset"
                )
            selected = tuple(entities[i] for i in chosen)
            rows = [i - 1 for i in chosen]  # entity i is asset row i - 1
            est = estimate_moments(frame.R_in[:, rows])
            if config.strategy == "MV":
                weights = solve_mv(est, gamma=config.gamma, asset_ids=selected)
            else:
                weights = solve_gmv(est, asset_ids=selected)
        except Exception as exc:
            raise _window_context(w_idx, exc) from exc
        results.append(WindowResult(
            window=frame.window,
            selected_assets=frozenset(selected),
            weights=weights,
            oos_portfolio_returns=_held_out_returns(frame, weights, panel.asset_ids),
            oos_index_returns=frame.r0_out,
            cluster_snapshot=clustering,
            cluster_entities=entities,
        ))
    return _assemble(config, results, flags)


def run_benchmark(panel: PricePanel, config: StrategyConfig) -> BacktestReport:
    """Backtest a benchmark rule under the same rolling protocol.

    MaxSimilarity tracks with the assets most similar to the index,
    CardinalityIT tracks under a holding cap, FullReplication tracks with
    every asset, Naive holds equal weights, and MV / GMV optimize over all
    assets at once. No clustering is involved, so cluster snapshots are
    absent from the windows.
    """
    if config.strategy not in BENCHMARK_STRATEGIES:
        raise ValueError(
            f"run_benchmark expects one of {BENCHMARK_STRATEGIES}, "
            f"got {config.strategy!r}"
        )
    flags: list = []
    results = []
    all_ids = panel.asset_ids
    for w_idx, frame in enumerate(_frames(panel, config)):
        try:
            if config.strategy == "MaxSimilarity":
                S, _ = _window_similarity(frame, config)
                selected = select_max_similarity(
                    S, min(config.max_similarity_m, panel.n_assets))
                rows = [all_ids.index(a) for a in selected]
                weights = solve_index_tracking(frame.R_in[:, rows], frame.r0_in,
                                               asset_ids=selected)
            elif config.strategy == "CardinalityIT":
                search = {}
                weights = solve_it_cardinality(
                    frame.R_in, frame.r0_in,
                    k_max=min(config.cardinality_k, panel.n_assets),
                    time_budget=config.cardinality_budget,
                    max_evals=config.cardinality_max_evals,
                    asset_ids=all_ids,
                    stats=search,
                )
                flags.append(
                    f"window {w_idx}: cardinality search used "
                    f"{search['evals']} refits"
                )
                selected = tuple(a for a in all_ids if a in weights.weights)
            elif config.strategy == "FullReplication":
                selected = all_ids
                weights = solve_index_tracking(frame.R_in, frame.r0_in,
                                               asset_ids=all_ids)
            elif config.strategy == "Naive":
                selected = all_ids
                share = 1.0 / panel.n_assets
                weights = Portfolio({a: share for a in all_ids})
            else:  # MV or GMV over the full asset universe
                selected = all_ids
                est = estimate_moments(frame.R_in)
                if config.strategy == "MV":
                    weights = solve_mv(est, gamma=config.gamma, asset_ids=all_ids)
                else:
                    weights = solve_gmv(est, asset_ids=all_ids)
        except Exception as exc:
            raise _window_context(w_idx, exc) from exc
        if config.strategy == "Naive":
            # the mean, not a weighted sum, so the equal-weight return is the
            # cross-asset average bit for bit
            oos = frame.R_out.mean(axis=0)
        else:
            oos = _held_out_returns(frame, weights, all_ids)
        results.append(WindowResult(
            window=frame.window,
            selected_assets=frozenset(selected),
            weights=weights,
            oos_portfolio_returns=oos,
            oos_index_returns=frame.r0_out,
        ))
    return _assemble(config, results, flags)


def run_backtest(panel: PricePanel, config: StrategyConfig,
                 mode: str = "auto") -> BacktestReport:
    """Dispatch to the run matching the configured strategy.

    MV and GMV are ambiguous between exemplar portfolios and all-asset
    benchmarks; ``mode='auto'`` resolves them to the exemplar run, and
    ``mode='benchmark'`` forces the all-asset variant.
    """
    if mode == "auto":
        mode = {"IndexTracking": "strategy1", "MV": "strategy2",
                "GMV": "strategy2"}.get(config.strategy, "benchmark")
    if mode == "strategy1":
        return run_strategy1(panel, config)
    if mode == "strategy2":
        return run_strategy2(panel, config)
    if mode == "benchmark":
        return run_benchmark(panel, config)
    raise ValueError(f"unknown mode {mode!r}; use auto, strategy1, strategy2 or benchmark")


# ---------------------------------------------------------------------------
# metrics


def _concat_oos(per_window):
    rp = np.concatenate([w.oos_portfolio_returns for w in per_window])
    ri = np.concatenate([w.oos_index_returns for w in per_window])
    return rp, ri


def _turnover(per_window) -> float:
    """Mean absolute weight change across rebalances; 0 with a single window."""
    if len(per_window) < 2:
        return 0.0
    ids = sorted(set().union(*(w.weights.weights for w in per_window)))
    vectors = [w.weights.as_vector(ids) for w in per_window]
    total = sum(float(np.abs(b - a).sum()) for a, b in zip(vectors, vectors[1:]))
    return total / (len(per_window) - 1)


def _tracking_values(per_window):
    rp, ri = _concat_oos(per_window)
    flags = []
    diff = rp - ri
    te = float(np.mean(diff**2))
    emr = float(np.mean(rp) - np.mean(ri))
    if rp.std() == 0.0 or ri.std() == 0.0:
        cor = None
        flags.append("COR undefined: a return series has zero variance")
    else:
        cor = float(np.corrcoef(rp, ri)[0, 1])
    if te > 0.0:
        info = emr / te
    else:
        info = None
        flags.append("INFO undefined: zero tracking error")
    te_beas = float(np.sqrt(np.sum(diff**2)) / diff.size)
    values = {
        "TE": te,
        "EMR": emr,
        "COR": cor,
        "INFO": info,
        "TR": _turnover(per_window),
        "TE_beas": te_beas,
    }
    return values, flags


def _wealth_values(per_window, gamma: float):
    rp, _ = _concat_oos(per_window)
    flags = []
    mean = float(np.mean(rp))
    if rp.size < 2:
        std = sr = ceq = None
        flags.append("standard deviation undefined: fewer than 2 held-out returns")
    else:
        std = float(np.std(rp, ddof=1))
        ceq = mean - 0.5 * gamma * std**2
        if std == 0.0:
            sr = None
            flags.append("SR undefined: zero standard deviation")
        else:
            sr = mean / std
    hhi = float(np.mean([
        sum(v * v for v in w.weights.weights.values()) for w in per_window
    ]))
    values = {
        "mean": mean,
        "std": std,
        "SR": sr,
        "CEQ": ceq,
        "TR": _turnover(per_window),
        "HHI": hhi,
    }
    return values, flags


def tracking_metrics(result: BacktestReport) -> dict:
    """Index-relative metrics over the concatenated held-out returns.

    TE is the mean squared deviation from the index, EMR the mean excess
    return, COR the correlation with the index, INFO the ratio EMR / TE,
    TR the turnover between consecutive windows' starting weights, and
    TE_beas the root-sum-of-squares deviation divided by the period count.
    Raises when COR is undefined because a series has zero variance.
    """
    values, _ = _tracking_values(result.per_window)
    if values["COR"] is None:
        raise ValueError("correlation undefined: a return series has zero variance")
    return values


def wealth_metrics(result: BacktestReport, gamma: float = 1.0) -> dict:
    """Stand-alone performance over the concatenated held-out returns.

    Reports the mean, standard deviation, SR = mean / std, the certainty
    equivalent mean - (gamma / 2) * variance, turnover, and the mean
    concentration sum of squared weights across windows. Raises on fewer
    than two held-out returns or a zero standard deviation.
    """
    if not (math.isfinite(gamma) and gamma > 0.0):
        raise ValueError(f"gamma must be a positive real, got {gamma!r}")
    values, _ = _wealth_values(result.per_window, gamma)
    if values["std"] is None:
        raise ValueError("need at least 2 held-out returns")
    if values["SR"] is None:
        raise ValueError("Sharpe ratio undefined: zero standard deviation")
    return values


def _assemble(config, results, flags) -> BacktestReport:
    per_window = tuple(sorted(results, key=lambda r: r.window.in_start))
    tracking, tflags = _tracking_values(per_window)
    wealth, wflags = _wealth_values(per_window, config.gamma)
    metrics = dict(tracking)
    metrics.update(wealth)
    all_flags = list(flags) + tflags + wflags
    rp, ri = _concat_oos(per_window)
    tests = {}
    try:
        tests["excess_mean_t"] = ttest_one_tailed(rp - ri, 0.0)
    except ValueError as exc:
        all_flags.append(f"excess mean t-test skipped: {exc}")
    try:
        tests["mean_t"] = ttest_one_tailed(rp, 0.0)
    except ValueError as exc:
        all_flags.append(f"mean t-test skipped: {exc}")
    return BacktestReport(
        config=config,
        per_window=per_window,
        metrics=metrics,
        tests=tests,
        flags=tuple(dict.fromkeys(all_flags)),
    )


# ---------------------------------------------------------------------------
# significance tests


def _test_series(x, name: str, min_len: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def ttest_one_tailed(sample, mu0: float = 0.0):
    """Upper-tail one-sample t-test of the mean against mu0.

    Returns (t, p) with t = (mean - mu0) / (s / sqrt(N)) and the p-value
    from the t distribution with N - 1 degrees of freedom.
    """
    x = _test_series(sample, "sample", 2)
    s = float(np.std(x, ddof=1))
    if s == 0.0:
        raise ValueError("zero sample variance")
    t = (float(np.mean(x)) - float(mu0)) / (s / math.sqrt(x.size))
    return float(t), float(stats.t.sf(t, x.size - 1))


def sharpe_z_test(returns1, returns2):
    """Upper-tail z-test that the first series has the larger Sharpe ratio.

    The statistic is (s2 * m1 - s1 * m2) / sqrt(ups) with

        ups = (2 s1^2 s2^2 - 2 s1 s2 s12 + 0.5 m1 s2^2 + 0.5 m2 s1^2
               - (m1 m2 / (s1 s2)) s12^2) / n

    over sample means m, standard deviations s, and covariance s12. The
    variance expression is not a positive quadratic form, so it can come
    out non-positive; a numerator at round-off scale then still reports
    (0, 0.5), anything larger raises.
    """
    x = _test_series(returns1, "returns1", 2)
    y = _test_series(returns2, "returns2", 2)
    if x.size != y.size:
        raise ValueError(f"series lengths differ: {x.size} vs {y.size}")
    m1, m2 = float(np.mean(x)), float(np.mean(y))
    s1, s2 = float(np.std(x, ddof=1)), float(np.std(y, ddof=1))
    if s1 == 0.0 or s2 == 0.0:
        raise ValueError("zero variance")
    s12 = float(np.cov(x, y, ddof=1)[0, 1])
    ups = (2.0 * s1**2 * s2**2 - 2.0 * s1 * s2 * s12
           + 0.5 * m1 * s2**2 + 0.5 * m2 * s1**2
           - (m1 * m2 / (s1 * s2)) * s12**2) / x.size
    numerator = s2 * m1 - s1 * m2
    if ups > 0.0:
        z = numerator / math.sqrt(ups)
        return float(z), float(stats.norm.sf(z))
    if abs(numerator) <= 1e-12 * max(1.0, abs(s2 * m1) + abs(s1 * m2)):
        return 0.0, 0.5
    raise ValueError(
        f"variance expression is not positive ({ups:g}); z statistic undefined"
    )


def ceq_test(returns1, returns2, gamma: float = 1.0):
    """Upper-tail z-test that the first series has the larger certainty
    equivalent, mean - (gamma / 2) * variance.

    The variance of the difference comes from the asymptotic normal
    distribution of the two means and variances: the gradient of the CEQ
    difference is (1, -1, -gamma/2, gamma/2) and the moment covariance uses
    Var(mean_i) = v_i / n, Cov(mean_1, mean_2) = v_12 / n, Var(v_i) =
    2 v_i^2 / n, and Cov(v_1, v_2) = 2 v_12^2 / n. Perfectly dependent
    series make that variance zero: a CEQ difference at round-off scale
    then reports (0, 0.5), two constant series raise, and a deterministic
    nonzero difference reports a signed infinite statistic.
    """
    if not (math.isfinite(gamma) and gamma > 0.0):
        raise ValueError(f"gamma must be a positive real, got {gamma!r}")
    x = _test_series(returns1, "returns1", 3)
    y = _test_series(returns2, "returns2", 3)
    if x.size != y.size:
        raise ValueError(f"series lengths differ: {x.size} vs {y.size}")
    n = x.size
    m1, m2 = float(np.mean(x)), float(np.mean(y))
    v1, v2 = float(np.var(x, ddof=1)), float(np.var(y, ddof=1))
    v12 = float(np.cov(x, y, ddof=1)[0, 1])
    ceq1 = m1 - 0.5 * gamma * v1
    ceq2 = m2 - 0.5 * gamma * v2
    delta = ceq1 - ceq2
    var = ((v1 + v2 - 2.0 * v12)
           + (gamma**2 / 4.0) * (2.0 * v1**2 + 2.0 * v2**2 - 4.0 * v12**2)) / n
    if var > 0.0:
        z = delta / math.sqrt(var)
        return float(z), float(stats.norm.sf(z))
    if abs(delta) <= 1e-12 * max(1.0, abs(ceq1), abs(ceq2)):
        return 0.0, 0.5
    if v1 == 0.0 and v2 == 0.0:
        raise ValueError("both series are constant; CEQ test degenerate")
    z = math.inf if delta > 0.0 else -math.inf
    return z, 0.0 if delta > 0.0 else 1.0


def compare_series(returns1, returns2, gamma: float = 1.0) -> dict:
    """Pairwise significance tests on two aligned return series.

    Returns mean_diff_t (paired upper-tail t-test of the return difference),
    sharpe_z, and ceq_z, each oriented so a positive statistic favors the
    first series.
    """
    rp1 = np.asarray(returns1, dtype=np.float64).ravel()
    rp2 = np.asarray(returns2, dtype=np.float64).ravel()
    if rp1.size != rp2.size:
        raise ValueError(
            f"series cover {rp1.size} vs {rp2.size} held-out periods"
        )
    return {
        "mean_diff_t": ttest_one_tailed(rp1 - rp2, 0.0),
        "sharpe_z": sharpe_z_test(rp1, rp2),
        "ceq_z": ceq_test(rp1, rp2, gamma),
    }


def compare_reports(report1: BacktestReport, report2: BacktestReport,
                    gamma: float = 1.0) -> dict:
    """compare_series over two runs' concatenated held-out returns.

    Both runs must cover the same periods.
    """
    rp1, _ = _concat_oos(report1.per_window)
    rp2, _ = _concat_oos(report2.per_window)
    return compare_series(rp1, rp2, gamma)


# ---------------------------------------------------------------------------
# report emission


def _json_value(v):
    if v is None:
        return None
    f = float(v)
    return f if math.isfinite(f) else str(f)


def report_to_dict(report: BacktestReport) -> dict:
    """Plain-data form of a report, safe for JSON serialization."""
    windows = []
    for res in report.per_window:
        w = res.window
        entry = {
            "in_start": w.in_start,
            "in_end": w.in_end,
            "out_start": w.out_start,
            "out_end": w.out_end,
            "selected_assets": sorted(res.selected_assets),
            "weights": {a: float(x) for a, x in sorted(res.weights.weights.items())},
            "oos_portfolio_returns": [float(x) for x in res.oos_portfolio_returns],
            "oos_index_returns": [float(x) for x in res.oos_index_returns],
        }
        if res.cluster_snapshot is None:
            entry["clusters"] = None
        else:
            snap = res.cluster_snapshot
            entry["clusters"] = {
                "labels": {e: int(l) for e, l in
                           zip(res.cluster_entities, snap.labels)},
                "exemplars": [res.cluster_entities[i] for i in snap.exemplars],
                "converged": bool(snap.converged),
            }
        windows.append(entry)
    config = None
    if report.config is not None:
        config = dataclasses.asdict(report.config)
    return {
        "config": config,
        "metrics": {k: _json_value(v) for k, v in report.metrics.items()},
        "tests": {k: {"statistic": _json_value(s), "p_value": _json_value(p)}
                  for k, (s, p) in report.tests.items()},
        "flags": list(report.flags),
        "windows": windows,
    }


def report_to_json(report: BacktestReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


def _metrics_csv_text(report: BacktestReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "value"])
    rows = [(name, report.metrics[name]) for name in sorted(report.metrics)]
    for name in sorted(report.tests):
        stat, p = report.tests[name]
        rows.append((f"test_{name}_stat", stat))
        rows.append((f"test_{name}_p", p))
    for name, value in rows:
        writer.writerow([name, "" if value is None else "%.17g" % value])
    return buf.getvalue()


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_report_files(report: BacktestReport, directory, prefix: str = "backtest"):
    """Write the report as JSON, a flat metrics CSV, and one cluster
    snapshot CSV per window that has one. Files are written to a temporary
    name and renamed into place; returns the paths written."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    json_path = os.path.join(directory, f"{prefix}.json")
    _atomic_write_text(json_path, report_to_json(report))
    paths.append(json_path)
    csv_path = os.path.join(directory, f"{prefix}_metrics.csv")
    _atomic_write_text(csv_path, _metrics_csv_text(report))
    paths.append(csv_path)
    for k, res in enumerate(report.per_window):
        if res.cluster_snapshot is None:
            continue
        snap_path = os.path.join(directory, f"{prefix}_window{k:03d}_clusters.csv")
        clustering_to_csv(res.cluster_snapshot, res.cluster_entities, f"{snap_path}.tmp")
        os.replace(f"{snap_path}.tmp", snap_path)
        paths.append(snap_path)
    return paths
