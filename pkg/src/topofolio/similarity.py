"""Kernel similarity matrices over the index and its constituent assets.

Kernels K1 to K4 exponentiate the four series distances (AWD, DWD, ALD, DLD),
K5 and K6 use Spearman and Pearson correlation distances, and K7 is the raw
negative squared tracking gap with no exponential. Scaling is data driven by
default: sigma_ij is the product of each entity's distance to its m-th
nearest neighbor, with m = 7 unless configured otherwise. A fixed sigma^2 is
available as an alternative.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_distance_matrix
from .distances import DistanceSpec, pairwise_matrix
from .panels import ReturnPanel

__all__ = [
    "KERNELS",
    "INDEX_ID",
    "SimilarityMatrix",
    "local_scales",
    "kernel_from_distances",
    "kernel_distance_spec",
    "build_kernel_matrix",
    "panel_series",
    "SimilarityKernel",
]

# kernel id -> the distance kind the kernel is built on
KERNELS = {
    "K1": "AWD",
    "K2": "DWD",
    "K3": "ALD",
    "K4": "DLD",
    "K5": "SpearmanDist",
    "K6": "PearsonDist",
    "K7": "EuclidSq",
}

INDEX_ID = "INDEX"

_SCALE_FLOOR = 1e-12


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric similarity values over entities, index first.

    K1 to K6 produce entries in (0, 1] with a unit diagonal; K7 is the raw
    negative squared gap, so entries are <= 0 with a zero diagonal.
    """

    kernel_id: str
    entities: tuple
    values: np.ndarray

    def __post_init__(self):
        if self.kernel_id not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel_id!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        n = len(self.entities)
        if vals.shape != (n, n):
            raise ValueError(
                f"values shape {vals.shape} does not match {n} entities"
            )
        if len(set(self.entities)) != n:
            raise ValueError("entity identifiers must be unique")
        if not np.all(np.isfinite(vals)):
            raise ValueError("similarities must be finite")
        if np.abs(vals - vals.T).max() > 1e-12:
            raise ValueError("similarity matrix must be symmetric within 1e-12")
        diag = np.diag(vals)
        if self.kernel_id == "K7":
            if np.any(vals > 0.0) or np.any(diag != 0.0):
                raise ValueError("K7 entries must be <= 0 with a zero diagonal")
        else:
            if np.any(vals <= 0.0) or np.any(vals > 1.0) or np.any(diag != 1.0):
                raise ValueError(
                    f"{self.kernel_id} entries must lie in (0, 1] with a unit diagonal"
                )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "entities", tuple(self.entities))

    @property
    def n_entities(self) -> int:
        return len(self.entities)


def local_scales(distances, m: int = 7) -> np.ndarray:
    """Pairwise scales sigma_ij from each entity's m-th nearest neighbor.

    The neighbor count excludes the entity itself, so m must be below the
    entity count. An entity whose m-th neighbor sits at distance zero
    (duplicate series) has its per-entity scale floored at 1e-12 times the
    median positive off-diagonal distance, keeping the division defined.
    """
    D = check_distance_matrix(distances)
    n = D.shape[0]
    if not (1 <= m <= n - 1):
        raise ValueError(f"m must lie in [1, {n - 1}] for {n} entities, got {m}")
    others = np.sort(D + np.diag(np.full(n, np.inf)), axis=1)
    mth = others[:, m - 1].copy()
    if np.any(mth == 0.0):
        off = D[~np.eye(n, dtype=bool)]
        positive = off[off > 0.0]
        floor = _SCALE_FLOOR * float(np.median(positive)) if positive.size else _SCALE_FLOOR
        mth[mth == 0.0] = floor
    return mth[:, None] * mth[None, :]


def kernel_from_distances(distances, m: int = 7, sigma_sq=None) -> np.ndarray:
    """exp(-d_ij^2 / sigma_ij) with local scaling, or a fixed sigma^2."""
    D = check_distance_matrix(distances)
    if sigma_sq is None:
        scale = local_scales(D, m)
    else:
        sigma_sq = float(sigma_sq)
        if not (sigma_sq > 0.0) or math.isinf(sigma_sq):
            raise ValueError(f"sigma_sq must be a positive real, got {sigma_sq}")
        scale = sigma_sq
    vals = np.exp(-(D**2) / scale)
    np.fill_diagonal(vals, 1.0)
    return vals


def panel_series(panel: ReturnPanel):
    """Stack the panel as (ids, series rows) with the index as entity 0."""
    ids = (INDEX_ID,) + tuple(panel.asset_ids)
    rows = np.vstack([panel.index_returns[None, :], panel.asset_returns])
    return ids, rows


def kernel_distance_spec(kernel_id: str, spec: DistanceSpec | None = None) -> DistanceSpec:
    """The distance spec a kernel is built on.

    With no ``spec`` the kernel's distance kind is used with its defaults.
    Otherwise the kind is overridden to match the kernel while the parameters
    that still apply (p, embedding, sub-series plan) are carried over.
    """
    if kernel_id not in KERNELS:
        raise ValueError(f"unknown kernel {kernel_id!r}; use one of {sorted(KERNELS)}")
    kind = KERNELS[kernel_id]
    if spec is None:
        return DistanceSpec(kind=kind)
    if spec.kind == kind:
        return spec
    keep = {"p", "dim", "delay", "homology_dim", "max_radius"}
    fields = {
        f.name: getattr(spec, f.name)
        for f in dataclasses.fields(spec)
        if f.name in keep
    }
    if kind in ("AWD", "ABD", "ALD"):
        fields["subseries"] = spec.subseries
        fields["weights"] = spec.weights
    if kind not in ("AWD", "ABD", "ALD", "DWD", "DLD", "WD", "LD"):
        fields.pop("p", None)
    return DistanceSpec(kind=kind, **fields)


def build_kernel_matrix(
    panel: ReturnPanel,
    kernel_id: str,
    spec: DistanceSpec | None = None,
    m: int = 7,
    sigma_sq=None,
) -> SimilarityMatrix:
    """Similarity matrix of one kernel over index plus assets.

    ``spec`` carries p, sub-series plan, and embedding parameters for the
    distance underneath K1 to K4; its kind is overridden to match the kernel.
    K5 to K7 ignore everything in ``spec`` except that override. ``sigma_sq``
    switches K1 to K6 from local scaling to a fixed bandwidth; K7 is used raw
    and takes no scaling at all.
    """
    spec = kernel_distance_spec(kernel_id, spec)
    ids, rows = panel_series(panel)
    dist = pairwise_matrix(rows, spec)
    if kernel_id == "K7":
        values = dist
    else:
        values = kernel_from_distances(dist, m=m, sigma_sq=sigma_sq)
    return SimilarityMatrix(kernel_id=kernel_id, entities=ids, values=values)


class SimilarityKernel(BaseEstimator, TransformerMixin):
    """Transformer from an (n_series, n_periods) array to kernel similarities.

    Row 0 is treated as the index only in the sense that it is just another
    entity; the kernel formula makes no distinction. Stateless apart from
    input validation.
    """

    def __init__(
        self,
        kernel_id: str = "K1",
        m: int = 7,
        sigma_sq=None,
        p: float = 1.0,
        dim: int = 2,
        delay: int = 1,
        homology_dim: int = 1,
    ):
        self.kernel_id = kernel_id
        self.m = m
        self.sigma_sq = sigma_sq
        self.p = p
        self.dim = dim
        self.delay = delay
        self.homology_dim = homology_dim

    def _spec(self) -> DistanceSpec:
        kind = KERNELS[self.kernel_id]
        if kind in ("AWD", "ABD", "ALD", "DWD", "DLD"):
            return DistanceSpec(
                kind=kind,
                p=self.p,
                dim=self.dim,
                delay=self.delay,
                homology_dim=self.homology_dim,
            )
        return DistanceSpec(kind=kind)

    def fit(self, X, y=None):
        if self.kernel_id not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel_id!r}")
        self._spec()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("expected an (n_series, n_periods) array")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        self.fit(X)
        X = np.asarray(X, dtype=np.float64)
        dist = pairwise_matrix(X, self._spec())
        if self.kernel_id == "K7":
            return dist
        return kernel_from_distances(dist, m=self.m, sigma_sq=self.sigma_sq)
