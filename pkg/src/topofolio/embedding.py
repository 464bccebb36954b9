"""Delay embedding of scalar time series into point clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_series


@dataclass(frozen=True)
class PointCloud:
    """A finite point set in R^dim together with the delay that produced it."""

    points: np.ndarray  # (n_points, dim)
    dim: int
    delay: int

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"points shape {pts.shape} inconsistent with dim {self.dim}")
        if pts.shape[0] < 1:
            raise ValueError("point cloud is empty")
        pts.setflags(write=False)

    def __len__(self) -> int:
        return self.points.shape[0]


def embed_length(n: int, dim: int, delay: int) -> int:
    """Number of delay vectors a series of n samples yields."""
    return n - (dim - 1) * delay


def takens_embed(series, dim: int = 2, delay: int = 1) -> PointCloud:
    """Embed a series as points (x_j, x_{j+delay}, ..., x_{j+(dim-1)delay})."""
    x = as_series(series)
    if dim < 1 or delay < 1:
        raise ValueError(f"dim and delay must be >= 1, got dim={dim}, delay={delay}")
    m = embed_length(x.shape[0], dim, delay)
    if m < 1:
        raise ValueError(
            f"series of length {x.shape[0]} too short for dim={dim}, delay={delay}"
        )
    cols = [x[a * delay: a * delay + m] for a in range(dim)]
    return PointCloud(points=np.stack(cols, axis=1), dim=dim, delay=delay)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix, summing sorted squared differences per pair.

    Sorting makes the result invariant under coordinate permutations of the
    inputs, so clouds that are coordinate-reversals of each other (as produced
    by reversed series) get bitwise-identical distance matrices.
    """
    pts = np.asarray(points, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    sq = np.sort(diff * diff, axis=-1)
    return np.sqrt(sq.sum(axis=-1))


class TakensEmbedding(BaseEstimator, TransformerMixin):
    """Transformer turning rows of a series panel into delay-embedded clouds."""

    def __init__(self, dim: int = 2, delay: int = 1):
        self.dim = dim
        self.delay = delay

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return [takens_embed(row, self.dim, self.delay) for row in X]
