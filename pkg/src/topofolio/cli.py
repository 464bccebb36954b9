"""Batch commands wiring loaders, distances, clustering, and backtests.

Every command reads one flat config file plus ``--set key=value`` overrides,
writes its artifacts atomically under the output directory (the
TOPOFOLIO_OUTDIR environment variable overrides the configured one), and
prints the paths it wrote. Identical config and inputs give byte-identical
outputs; the only wall-clock dependence in the pipeline is the cardinality
search budget, whose refit count ends up in the report flags, and setting
``cardinality_max_evals`` removes even that.

Exit codes: 0 success, 2 unusable config or arguments, 3 missing or
malformed data, 4 numerical failure. Every failed run prints a single
``error: code=<n> kind=<kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from .backtest import (
    StrategyConfig,
    _atomic_write_text,
    _cluster_window,
    compare_series,
    run_backtest,
    write_report_files,
)
from .casestudy import (
    CASESTUDY_DISTANCES,
    casestudy_to_csv,
    load_control_charts,
    run_casestudy,
    synthesize_control_charts,
)
from .cluster import APCParams, clustering_to_csv
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .distances import DistanceSpec, pairwise_matrix
from .panels import (
    DataError,
    SubSeriesPlan,
    compute_returns,
    load_csv_prices,
    load_orlib_indtrack,
)
from .similarity import (
    KERNELS,
    SimilarityMatrix,
    kernel_from_distances,
    panel_series,
)

__all__ = [
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_DATA",
    "EXIT_NUMERICAL",
    "OUTDIR_ENV",
    "cmd_distances",
    "cmd_cluster",
    "cmd_backtest",
    "cmd_casestudy",
    "cmd_report_merge",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

OUTDIR_ENV = "TOPOFOLIO_OUTDIR"

_SUBSERIES_KINDS = ("AWD", "ABD", "ALD")


def _outdir(config: RunConfig) -> str:
    return os.environ.get(OUTDIR_ENV) or config.outdir


def _prefix(config: RunConfig) -> str:
    return config.prefix if config.prefix is not None else "run"


def _load_panel(config: RunConfig):
    if config.data is None:
        raise ConfigError("data: a path to the input panel is required")
    if config.format is None:
        raise ConfigError("format: csv or orlib is required for panel input")
    if config.format == "csv":
        if config.index_column is None:
            raise ConfigError("index_column: required for csv input")
        return load_csv_prices(config.data, config.index_column)
    if config.format == "orlib":
        return load_orlib_indtrack(
            config.data,
            index_position=config.orlib_index_position,
            layout=config.orlib_layout,
        )
    raise ConfigError(f"format {config.format!r} does not describe a price panel")


def _distance_spec(config: RunConfig, n_periods: int) -> DistanceSpec:
    """The distance spec behind the configured kernel, sized for one series."""
    if config.kernel not in KERNELS:
        raise ConfigError(
            f"kernel: unknown kernel {config.kernel!r}; use one of {sorted(KERNELS)}"
        )
    kind = KERNELS[config.kernel]
    fields = {
        "kind": kind,
        "p": config.p,
        "dim": config.dim,
        "delay": config.delay,
        "homology_dim": config.homology_dim,
    }
    if kind in _SUBSERIES_KINDS:
        if config.subseries_length is not None or config.subseries_shift is not None:
            try:
                fields["subseries"] = SubSeriesPlan.default_for(
                    n_periods,
                    length=config.subseries_length,
                    shift=config.subseries_shift,
                )
            except (DataError, ValueError) as exc:
                raise ConfigError(f"subseries plan: {exc}") from exc
        fields["weights"] = config.subseries_weights
    elif (config.subseries_length is not None
          or config.subseries_shift is not None
          or config.subseries_weights is not None):
        raise ConfigError(
            f"{config.kernel} is built on {kind}, which takes no sub-series plan"
        )
    try:
        return DistanceSpec(**fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _strategy_config(config: RunConfig, n_periods: int | None = None) -> StrategyConfig:
    spec_len = n_periods if n_periods is not None else config.in_len
    spec = _distance_spec(config, spec_len)
    apc = None
    if config.damping is not None:
        try:
            apc = APCParams(
                damping=config.damping,
                preference=config.preference,
                max_iterations=config.max_iterations,
                stable_iterations=config.stable_iterations,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    counts = (config.k,) if config.k is not None else config.cluster_counts
    try:
        return StrategyConfig(
            strategy=config.strategy,
            kernel_id=config.kernel,
            distance_spec=spec,
            apc=apc,
            clustering_algo=config.clustering,
            window=(config.in_len, config.out_len, config.step),
            gamma=config.gamma,
            m=config.m,
            sigma_sq=config.sigma_sq,
            damping_grid=config.damping_grid,
            cluster_counts=counts,
            max_similarity_m=config.max_similarity_m,
            cardinality_k=config.cardinality_k,
            cardinality_budget=config.cardinality_budget,
            cardinality_max_evals=config.cardinality_max_evals,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _kernel_matrices(config: RunConfig, panel):
    """(entity ids, distance matrix, similarity values) for the full panel."""
    returns = compute_returns(panel, "simple" if config.kernel == "K7" else "log")
    ids, rows = panel_series(returns)
    spec = _distance_spec(config, rows.shape[1])
    raw = pairwise_matrix(rows, spec)
    if config.kernel == "K7":
        return ids, -raw, raw
    try:
        values = kernel_from_distances(raw, m=config.m, sigma_sq=config.sigma_sq)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ids, raw, values


def _matrix_csv_text(ids, matrix: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["entity"] + list(ids))
    for name, row in zip(ids, matrix):
        writer.writerow([name] + ["%.17g" % v for v in row])
    return buf.getvalue()


def cmd_distances(config: RunConfig) -> list:
    """Materialize the distance and similarity matrices over index + assets."""
    panel = _load_panel(config)
    ids, D, S = _kernel_matrices(config, panel)
    outdir = _outdir(config)
    os.makedirs(outdir, exist_ok=True)
    prefix = _prefix(config)
    paths = []
    for tag, matrix in (("distance", D), ("similarity", S)):
        path = os.path.join(outdir, f"{prefix}_{tag}.csv")
        _atomic_write_text(path, _matrix_csv_text(ids, matrix))
        paths.append(path)
    return paths


def cmd_cluster(config: RunConfig) -> list:
    """Cluster the full-sample panel and write matrices plus the partition."""
    panel = _load_panel(config)
    ids, D, S = _kernel_matrices(config, panel)
    sc = _strategy_config(config, n_periods=panel.n_dates - 1)
    flags: list = []
    clustering = _cluster_window(SimilarityMatrix(config.kernel, ids, S), D,
                                 sc, 0, flags)
    outdir = _outdir(config)
    os.makedirs(outdir, exist_ok=True)
    prefix = _prefix(config)
    paths = []
    for tag, matrix in (("distance", D), ("similarity", S)):
        path = os.path.join(outdir, f"{prefix}_{tag}.csv")
        _atomic_write_text(path, _matrix_csv_text(ids, matrix))
        paths.append(path)
    cluster_path = os.path.join(outdir, f"{prefix}_clusters.csv")
    clustering_to_csv(clustering, ids, f"{cluster_path}.tmp")
    os.replace(f"{cluster_path}.tmp", cluster_path)
    paths.append(cluster_path)
    for flag in flags:
        print(f"flag: {flag}")
    return paths


def cmd_backtest(config: RunConfig) -> list:
    """Run the configured strategy over rolling windows and write the report."""
    panel = _load_panel(config)
    sc = _strategy_config(config)
    report = run_backtest(panel, sc, mode=config.mode)
    return list(write_report_files(report, _outdir(config), _prefix(config)))


def cmd_casestudy(config: RunConfig) -> list:
    """Cluster labeled control charts under every distance; write accuracies."""
    if config.data is not None:
        if config.format not in (None, "charts"):
            raise ConfigError(
                f"format {config.format!r} does not describe control charts"
            )
        series, truth = load_control_charts(config.data)
    elif config.seed is not None:
        series, truth = synthesize_control_charts(seed=config.seed)
    else:
        raise ConfigError(
            "casestudy needs data=<control chart file> or seed=<n> "
            "for surrogate charts"
        )
    names = config.distances if config.distances is not None else CASESTUDY_DISTANCES
    for name in names:
        if name not in CASESTUDY_DISTANCES:
            raise ConfigError(
                f"distances: unknown distance {name!r}; "
                f"use names from {CASESTUDY_DISTANCES}"
            )
    table = run_casestudy(
        series, truth,
        distances=names,
        k=config.k if config.k is not None else 6,
        sigma_sq=config.sigma_sq if config.sigma_sq is not None else 0.01,
        p=config.p, dim=config.dim, delay=config.delay,
        homology_dim=config.homology_dim,
        damping_grid=config.damping_grid,
    )
    outdir = _outdir(config)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{_prefix(config)}_accuracy.csv")
    casestudy_to_csv(table, path)
    return [path]


def _report_returns(path) -> np.ndarray:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid report JSON: {exc}") from exc
    try:
        windows = data["windows"]
        series = [np.asarray(w["oos_portfolio_returns"], dtype=np.float64)
                  for w in windows]
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: missing report structure: {exc}") from exc
    if not series:
        raise DataError(f"{path}: report has no windows")
    return np.concatenate(series)


def cmd_report_merge(config: RunConfig, report_a, report_b) -> list:
    """Significance tests between two written reports' held-out returns."""
    rp1 = _report_returns(report_a)
    rp2 = _report_returns(report_b)
    tests = compare_series(rp1, rp2, gamma=config.gamma)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "value"])
    for name, (stat, pvalue) in tests.items():
        writer.writerow([f"test_{name}_stat", "%.17g" % stat])
        writer.writerow([f"test_{name}_p", "%.17g" % pvalue])
    outdir = _outdir(config)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{_prefix(config)}_compare.csv")
    _atomic_write_text(path, buf.getvalue())
    return [path]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topofolio",
        description="Batch pipeline: price panels to distances, clusters, "
                    "portfolios and backtest reports.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", metavar="PATH",
                        help="flat key = value config file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append",
                        default=[], dest="overrides",
                        help="override one config key (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("distances", parents=[common],
                   help="write distance and similarity matrix CSVs")
    sub.add_parser("cluster", parents=[common],
                   help="cluster the full panel and write the partition")
    sub.add_parser("backtest", parents=[common],
                   help="run a rolling backtest and write the report")
    sub.add_parser("casestudy", parents=[common],
                   help="accuracy of each distance on labeled control charts")
    merge = sub.add_parser("report-merge", parents=[common],
                           help="significance tests between two report JSONs")
    merge.add_argument("reports", nargs=2, metavar="REPORT_JSON",
                       help="the two backtest reports to compare")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        config = load_config(args.config) if args.config else RunConfig()
        config = apply_overrides(config, args.overrides)
        if args.command == "report-merge":
            paths = cmd_report_merge(config, args.reports[0], args.reports[1])
        else:
            command = {
                "distances": cmd_distances,
                "cluster": cmd_cluster,
                "backtest": cmd_backtest,
                "casestudy": cmd_casestudy,
            }[args.command]
            paths = command(config)
    except ConfigError as exc:
        print(f"error: code={EXIT_CONFIG} kind=config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: code={EXIT_DATA} kind=data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        print(
            f"error: code={EXIT_NUMERICAL} kind=numerical: "
            f"{type(exc).__name__}: {exc}",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    for path in paths:
        print(path)
    return EXIT_OK
