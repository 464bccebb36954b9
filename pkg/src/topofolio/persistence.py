"""Vietoris-Rips persistent homology of point clouds (H0 and H1).

Simplices enter the filtration at their diameter; the pairing comes from the
standard boundary-matrix column reduction with clearing (see _reduction). With
the default automatic radius the filtration runs to the enclosing-set diameter,
where the 2-skeleton is complete, so exactly one dimension-0 class survives and
no dimension-1 class does. A user-truncated radius can leave several survivors;
all of them are reported with infinite death.

Conventions: dimension-0 features keep zero-persistence deaths (duplicate
points die at 0 and the merge-count bookkeeping needs them); dimension-1 pairs
with death == birth are reduction artifacts of simultaneous insertion and are
never reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._reduction import covering_radius, rips_reduce
from .embedding import PointCloud, pairwise_distances

INF = math.inf


@dataclass(frozen=True)
class FiltrationSpec:
    """How far to build the filtration and what to keep.

    max_radius None means automatic: the diameter of the cloud. threshold > 0
    additionally drops features with persistence below it.
    """

    max_dim: int = 1
    max_radius: float | None = None
    threshold: float = 0.0

    def __post_init__(self):
        if self.max_dim not in (0, 1):
            raise ValueError(f"max_dim must be 0 or 1, got {self.max_dim}")
        if self.max_radius is not None and not self.max_radius >= 0:
            raise ValueError(f"max_radius must be >= 0, got {self.max_radius}")
        if self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")


@dataclass(frozen=True)
class PersistenceDiagram:
    """Multiset of (birth, death, dim) features; death == inf marks essential
    classes. Arrays are stored in canonical (dim, birth, death) order."""

    births: np.ndarray
    deaths: np.ndarray
    dims: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.births, dtype=np.float64)
        d = np.asarray(self.deaths, dtype=np.float64)
        m = np.asarray(self.dims, dtype=np.int64)
        if not (b.shape == d.shape == m.shape) or b.ndim != 1:
            raise ValueError("births, deaths and dims must be equal-length vectors")
        if np.any(np.isnan(b)) or np.any(np.isnan(d)):
            raise ValueError("diagram contains NaN")
        if np.any(b < 0) or np.any(d < b):
            raise ValueError("need 0 <= birth <= death for every feature")
        order = np.lexsort((d, b, m))
        b, d, m = b[order], d[order], m[order]
        for name, arr in (("births", b), ("deaths", d), ("dims", m)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.births.shape[0]

    @property
    def essential(self) -> np.ndarray:
        return np.isinf(self.deaths)

    def restrict(self, dim: int) -> "PersistenceDiagram":
        """Features of one homology dimension only."""
        keep = self.dims == dim
        return PersistenceDiagram(self.births[keep], self.deaths[keep], self.dims[keep])

    def finite(self) -> "PersistenceDiagram":
        """Drop essential (infinite-death) classes."""
        keep = ~self.essential
        return PersistenceDiagram(self.births[keep], self.deaths[keep], self.dims[keep])

    def persistences(self) -> np.ndarray:
        return self.deaths - self.births

    def equals(self, other: "PersistenceDiagram") -> bool:
        return (
            np.array_equal(self.dims, other.dims)
            and np.array_equal(self.births, other.births)
            and np.array_equal(self.deaths, other.deaths)
        )


def _as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    pts = np.asarray(cloud, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError(f"cloud must be a non-empty (n, d) array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("cloud contains non-finite coordinates")
    return pts


def rips_persistence(cloud, spec: FiltrationSpec | None = None) -> PersistenceDiagram:
    """Persistence diagram of the Vietoris-Rips filtration of a point cloud."""
    if spec is None:
        spec = FiltrationSpec()
    pts = _as_points(cloud)
    dist = pairwise_distances(pts)
    return rips_from_distances(dist, spec)


def rips_from_distances(dist: np.ndarray, spec: FiltrationSpec | None = None
                        ) -> PersistenceDiagram:
    """Same as rips_persistence but starting from a distance matrix."""
    if spec is None:
        spec = FiltrationSpec()
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] < 1:
        raise ValueError(f"distance matrix must be square and non-empty, got {dist.shape}")
    max_radius = spec.max_radius
    if max_radius is None:
        max_radius = float(dist.max()) if dist.size else 0.0
    if spec.max_dim >= 1:
        cap = min(float(covering_radius(dist)), max_radius)
    else:
        cap = max_radius
    h0_deaths, ess0, h1_b, h1_d, h1_ess = rips_reduce(
        dist, max_radius, cap, spec.max_dim
    )

    births = [np.zeros(h0_deaths.shape[0]), np.zeros(ess0)]
    deaths = [h0_deaths, np.full(ess0, INF)]
    dims = [np.zeros(h0_deaths.shape[0], np.int64), np.zeros(ess0, np.int64)]
    if spec.max_dim >= 1:
        births += [h1_b, h1_ess]
        deaths += [h1_d, np.full(h1_ess.shape[0], INF)]
        dims += [np.ones(h1_b.shape[0], np.int64), np.ones(h1_ess.shape[0], np.int64)]
    b = np.concatenate(births)
    d = np.concatenate(deaths)
    m = np.concatenate(dims)
    if spec.threshold > 0:
        keep = np.isinf(d) | (d - b >= spec.threshold)
        b, d, m = b[keep], d[keep], m[keep]
    return PersistenceDiagram(b, d, m)


def diagram_to_csv(diagram: PersistenceDiagram, path) -> None:
    """Write features as dim,birth,death rows (death 'inf' for essential)."""
    with open(path, "w") as fh:
        fh.write("dim,birth,death\n")
        for dim, b, d in zip(diagram.dims, diagram.births, diagram.deaths):
            dtxt = "inf" if math.isinf(d) else format(d, ".17g")
            fh.write(f"{dim},{format(b, '.17g')},{dtxt}\n")


def diagram_from_csv(path) -> PersistenceDiagram:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "dim,birth,death":
            raise ValueError(f"{path}: unexpected header {header!r}")
        dims, births, deaths = [], [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields")
            dims.append(int(parts[0]))
            births.append(float(parts[1]))
            deaths.append(INF if parts[2] == "inf" else float(parts[2]))
    return PersistenceDiagram(np.array(births), np.array(deaths),
                              np.array(dims, dtype=np.int64))
