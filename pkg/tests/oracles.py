"""Independent brute-force reference implementations used only by tests.

These are deliberately naive: full simplex enumeration, textbook column
reduction without clearing or truncation, exhaustive matching enumeration.
They exist to cross-check the fast implementations on small inputs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def brute_rips_diagram(points, max_dim=1):
    """Textbook boundary-matrix reduction over the full simplex list.

    Returns a list of (dim, birth, death) with death == inf for essential
    classes, dimension-0 zero-persistence pairs kept, dimension >= 1
    zero-persistence pairs dropped (matching the package conventions).
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))

    simplices = []  # (diameter, dim, vertex tuple)
    for v in range(n):
        simplices.append((0.0, 0, (v,)))
    for i, j in itertools.combinations(range(n), 2):
        simplices.append((dist[i, j], 1, (i, j)))
    if max_dim >= 1:
        for i, j, k in itertools.combinations(range(n), 3):
            diam = max(dist[i, j], dist[i, k], dist[j, k])
            simplices.append((diam, 2, (i, j, k)))
    simplices.sort(key=lambda s: (s[0], s[1], s[2]))
    index_of = {s[2]: pos for pos, s in enumerate(simplices)}

    columns = []
    for diam, dim, verts in simplices:
        if dim == 0:
            columns.append(set())
        else:
            faces = itertools.combinations(verts, dim)
            columns.append({index_of[f] for f in faces})

    low_owner = {}
    pairs = {}
    for j, col in enumerate(columns):
        col = set(col)
        while col:
            low = max(col)
            if low not in low_owner:
                low_owner[low] = j
                pairs[low] = j
                break
            col ^= columns[low_owner[low]]
        columns[j] = col

    features = []
    paired = set(pairs) | set(pairs.values())
    for low, j in pairs.items():
        diam_b, dim_b, _ = simplices[low]
        diam_d, dim_d, _ = simplices[j]
        if dim_b == 0:
            features.append((0, diam_b, diam_d))
        elif diam_d > diam_b:
            features.append((dim_b, diam_b, diam_d))
    for pos, (diam, dim, _) in enumerate(simplices):
        if pos not in paired and dim <= max_dim:
            features.append((dim, diam, math.inf))
    features.sort()
    return features


def diagram_to_tuples(diagram):
    """Canonical (dim, birth, death) tuples of a package PersistenceDiagram."""
    return sorted(zip(diagram.dims.tolist(), diagram.births.tolist(),
                      diagram.deaths.tolist()))


def brute_wasserstein(pts1, pts2, p):
    """Exact Wasserstein-p by enumerating every augmented matching.

    pts1/pts2 are (n, 2) arrays of finite (birth, death) pairs. Points left
    unmatched pay their own half-persistence (distance to the diagonal in the
    sup norm). p may be math.inf for the bottleneck distance.
    """
    a = np.asarray(pts1, dtype=float).reshape(-1, 2)
    b = np.asarray(pts2, dtype=float).reshape(-1, 2)
    n1, n2 = len(a), len(b)
    half1 = (a[:, 1] - a[:, 0]) / 2.0
    half2 = (b[:, 1] - b[:, 0]) / 2.0

    def cost_of(matching):
        costs = []
        used1, used2 = set(), set()
        for i, j in matching:
            costs.append(max(abs(a[i, 0] - b[j, 0]), abs(a[i, 1] - b[j, 1])))
            used1.add(i)
            used2.add(j)
        costs.extend(half1[i] for i in range(n1) if i not in used1)
        costs.extend(half2[j] for j in range(n2) if j not in used2)
        if not costs:
            return 0.0
        if p == math.inf:
            return max(costs)
        return sum(c ** p for c in costs) ** (1.0 / p)

    best = cost_of([])
    for k in range(1, min(n1, n2) + 1):
        for subset1 in itertools.combinations(range(n1), k):
            for subset2 in itertools.permutations(range(n2), k):
                best = min(best, cost_of(list(zip(subset1, subset2))))
    return best


def grid_landscape_norm(diagram_points, p, k_max=None, grid_size=100_000):
    """Dense-grid landscape norm oracle (documented tolerance about 1e-4)."""
    pts = np.asarray(diagram_points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    lo = pts[:, 0].min()
    hi = pts[:, 1].max()
    t = np.linspace(lo, hi, grid_size)
    tents = np.maximum(
        0.0,
        np.minimum(t[:, None] - pts[None, :, 0], pts[None, :, 1] - t[:, None]),
    )
    tents.sort(axis=1)
    tents = tents[:, ::-1]
    if k_max is not None:
        tents = tents[:, :k_max]
    if p == math.inf:
        return float(tents.max())
    dt = (hi - lo) / (grid_size - 1)
    return float(np.trapezoid(tents ** p, dx=dt, axis=0).sum() ** (1.0 / p))
