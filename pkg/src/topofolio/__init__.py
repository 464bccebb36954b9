"""Persistence-based time-series distances and the portfolios built on them.

The package turns a panel of prices into pairwise distances between return
series (Wasserstein and landscape variants over delay-embedded persistence
diagrams, plus correlation and Euclidean baselines), kernels those distances
into similarities, clusters the entities, and backtests sparse
index-tracking and mean-variance portfolios assembled from the clusters.
Each stage is importable on its own; the ``topofolio`` command drives the
whole pipeline from flat config files.
"""

from .backtest import (
    BacktestReport,
    StrategyConfig,
    WindowResult,
    ceq_test,
    compare_reports,
    compare_series,
    report_to_dict,
    report_to_json,
    run_backtest,
    run_benchmark,
    run_strategy1,
    run_strategy2,
    sharpe_z_test,
    tracking_metrics,
    ttest_one_tailed,
    wealth_metrics,
    write_report_files,
)
from .casestudy import (
    load_control_charts,
    run_casestudy,
    synthesize_control_charts,
)
from .cluster import (
    AffinityPropagation,
    APCParams,
    AverageLinkage,
    Clustering,
    KMedoids,
    adjusted_rand_index,
    affinity_propagation,
    clustering_accuracy,
    hierarchical,
    jaccard_similarity,
    k_medoids,
    select_cluster_count,
    select_damping,
    silhouette_score,
)
from .config import ConfigError, RunConfig, config_to_text, load_config
from .distances import (
    KINDS,
    DistanceSpec,
    PairwiseDistance,
    pairwise_matrix,
    series_diagram,
    series_landscape,
)
from .embedding import TakensEmbedding, takens_embed
from .panels import (
    DataError,
    PricePanel,
    ReturnPanel,
    SubSeriesPlan,
    WindowPlan,
    compute_returns,
    load_csv_prices,
    load_orlib_indtrack,
    make_subseries,
    make_windows,
)
from .persistence import (
    FiltrationSpec,
    PersistenceDiagram,
    rips_from_distances,
    rips_persistence,
)
from .portfolio import (
    MomentEstimates,
    Portfolio,
    estimate_moments,
    select_max_similarity,
    solve_gmv,
    solve_it_cardinality,
    solve_index_tracking,
    solve_mv,
    tracking_error_variance,
)
from .similarity import (
    KERNELS,
    SimilarityKernel,
    SimilarityMatrix,
    build_kernel_matrix,
    kernel_from_distances,
    local_scales,
)
from .summaries import (
    PersistenceLandscape,
    landscape,
    landscape_distance,
    landscape_norm,
    persistence_to_empty,
    wasserstein,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # panels
    "DataError",
    "PricePanel",
    "ReturnPanel",
    "SubSeriesPlan",
    "WindowPlan",
    "compute_returns",
    "load_csv_prices",
    "load_orlib_indtrack",
    "make_subseries",
    "make_windows",
    # embedding and persistence
    "TakensEmbedding",
    "takens_embed",
    "FiltrationSpec",
    "PersistenceDiagram",
    "rips_from_distances",
    "rips_persistence",
    "PersistenceLandscape",
    "landscape",
    "landscape_distance",
    "landscape_norm",
    "persistence_to_empty",
    "wasserstein",
    # distances and similarity
    "KINDS",
    "DistanceSpec",
    "PairwiseDistance",
    "pairwise_matrix",
    "series_diagram",
    "series_landscape",
    "KERNELS",
    "SimilarityKernel",
    "SimilarityMatrix",
    "build_kernel_matrix",
    "kernel_from_distances",
    "local_scales",
    # clustering
    "AffinityPropagation",
    "APCParams",
    "AverageLinkage",
    "Clustering",
    "KMedoids",
    "adjusted_rand_index",
    "affinity_propagation",
    "clustering_accuracy",
    "hierarchical",
    "jaccard_similarity",
    "k_medoids",
    "select_cluster_count",
    "select_damping",
    "silhouette_score",
    # portfolios
    "MomentEstimates",
    "Portfolio",
    "estimate_moments",
    "select_max_similarity",
    "solve_gmv",
    "solve_it_cardinality",
    "solve_index_tracking",
    "solve_mv",
    "tracking_error_variance",
    # backtests
    "BacktestReport",
    "StrategyConfig",
    "WindowResult",
    "ceq_test",
    "compare_reports",
    "compare_series",
    "report_to_dict",
    "report_to_json",
    "run_backtest",
    "run_benchmark",
    "run_strategy1",
    "run_strategy2",
    "sharpe_z_test",
    "tracking_metrics",
    "ttest_one_tailed",
    "wealth_metrics",
    "write_report_files",
    # control-chart benchmark
    "load_control_charts",
    "run_casestudy",
    "synthesize_control_charts",
    # configuration
    "ConfigError",
    "RunConfig",
    "config_to_text",
    "load_config",
]
