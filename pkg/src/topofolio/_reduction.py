"""Numba kernels for Vietoris-Rips boundary-matrix reduction.

The reduction is the standard column algorithm with the clearing optimization:
dimension 2 first (triangles over edges), then dimension 1 (edges over
vertices) with the columns of dimension-2 pivots cleared. Columns are stored
bit-packed (one uint64 word per 64 rows), so one column addition over Z/2 is a
short XOR loop and the pivot scan walks downward from the previous pivot.

Simplices are ordered by (diameter, lexicographic vertex tuple); the arrays
handed in are already lexicographically enumerated, so a stable sort on the
diameters alone realizes that order.

Triangles are only materialized up to `cap`. The caller passes
cap = min(max_radius, covering radius); every dimension-1 class dies by the
covering radius eps* = min_v max_u d(v, u) because the complex is a cone from
the minimizing vertex at eps*, so the dimension-1 diagram is unaffected while
the column count drops sharply.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _count_triangles(dist, cap):
    n = dist.shape[0]
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            dij = dist[i, j]
            if dij > cap:
                continue
            for k in range(j + 1, n):
                diam = dij
                if dist[i, k] > diam:
                    diam = dist[i, k]
                if dist[j, k] > diam:
                    diam = dist[j, k]
                if diam <= cap:
                    m += 1
    return m


@njit(cache=True)
def _fill_triangles_enc(dist, cap, enc_out, diam_out):
    """Enumerate triangles under cap lexicographically, encoding the vertex
    triple as (i*n + j)*n + k."""
    n = dist.shape[0]
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            dij = dist[i, j]
            if dij > cap:
                continue
            base = (i * n + j) * n
            for k in range(j + 1, n):
                diam = dij
                if dist[i, k] > diam:
                    diam = dist[i, k]
                if dist[j, k] > diam:
                    diam = dist[j, k]
                if diam <= cap:
                    enc_out[m] = base + k
                    diam_out[m] = diam
                    m += 1
    return m


@njit(cache=True)
def _fill_triangles(dist, cap, erank, tri_edges, tri_diam):
    """Enumerate i<j<k lexicographically; store boundary edge ranks (ascending)."""
    n = dist.shape[0]
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            dij = dist[i, j]
            if dij > cap:
                continue
            for k in range(j + 1, n):
                diam = dij
                if dist[i, k] > diam:
                    diam = dist[i, k]
                if dist[j, k] > diam:
                    diam = dist[j, k]
                if diam <= cap:
                    a = erank[i, j]
                    b = erank[i, k]
                    c = erank[j, k]
                    if a > b:
                        a, b = b, a
                    if b > c:
                        b, c = c, b
                    if a > b:
                        a, b = b, a
                    tri_edges[m, 0] = a
                    tri_edges[m, 1] = b
                    tri_edges[m, 2] = c
                    tri_diam[m] = diam
                    m += 1
    return m


@njit(cache=True)
def _reduce_dim2(tri_edges, n_rows):
    """Column-reduce the triangle boundary matrix over Z/2.

    tri_edges holds each column's three edge ranks ascending, columns already in
    filtration order. Returns, for every edge rank, the index of the triangle
    column whose reduced pivot it is (-1 if none).
    """
    m = tri_edges.shape[0]
    W = (n_rows + 63) >> 6
    if W == 0:
        W = 1
    owner = np.full(n_rows, -1, np.int64)
    owner_col = np.zeros((n_rows, W), np.uint64)
    cur = np.zeros(W, np.uint64)
    pair_tri = np.full(n_rows, -1, np.int64)
    one = np.uint64(1)
    zero = np.uint64(0)
    for j in range(m):
        for w in range(W):
            cur[w] = zero
        top = tri_edges[j, 2]
        for q in range(3):
            e = tri_edges[j, q]
            cur[e >> 6] |= one << np.uint64(e & 63)
        piv = top
        while piv >= 0:
            if owner[piv] == -1:
                owner[piv] = j
                pair_tri[piv] = j
                for w in range(W):
                    owner_col[piv, w] = cur[w]
                break
            hi_word = piv >> 6
            for w in range(hi_word, -1, -1):
                cur[w] ^= owner_col[piv, w]
            piv = -1
            for w in range(hi_word, -1, -1):
                v = cur[w]
                if v != zero:
                    b = 63
                    while (v >> np.uint64(b)) & one == zero:
                        b -= 1
                    piv = (w << 6) | b
                    break
    return pair_tri


@njit(cache=True)
def _reduce_dim2_dual(dist, si, sj, sd, E_cap, tri_rank, m, cap):
    """Same dimension-(1,2) pairing via the anti-transposed (coboundary) matrix.

    Columns are edges in decreasing filtration order, rows are triangles in
    decreasing filtration order, and column e holds the cofacets of e. By the
    anti-transpose duality this reduction produces the same persistence pairs
    as _reduce_dim2, but with ~E columns instead of ~n^3/6, and almost every
    column claims its pivot without any additions.

    tri_rank maps the flattened vertex triple (i*n+j)*n+k (i<j<k) to the
    triangle's increasing filtration rank. Returns the paired triangle rank per
    edge rank (-1 if none).
    """
    n = dist.shape[0]
    W = (m + 63) >> 6
    if W == 0:
        W = 1
    # Claimed columns live in a ragged flat pool: a column whose pivot sits in
    # word h only ever has its words [0..h] read during later merges, so only
    # those words are stored.
    owner_lo = np.full(m, -1, np.int64)
    # a claimed column with pivot in word h stores h+1 words; pivots are
    # roughly uniform over the rows, so half-width per column is typical
    pool_cap = max(64, E_cap * ((W >> 1) + 2))
    pool = np.empty(pool_cap, np.uint64)
    pool_end = 0
    pair_tri = np.full(E_cap, -1, np.int64)
    cur = np.zeros(W, np.uint64)
    one = np.uint64(1)
    zero = np.uint64(0)
    for cr in range(E_cap - 1, -1, -1):
        i = si[cr]
        j = sj[cr]
        dij = sd[cr]
        top = -1
        for k in range(n):
            if k == i or k == j:
                continue
            diam = dij
            if dist[i, k] > diam:
                diam = dist[i, k]
            if dist[j, k] > diam:
                diam = dist[j, k]
            if diam <= cap:
                a, b, c = i, j, k
                if a > b:
                    a, b = b, a
                if b > c:
                    b, c = c, b
                if a > b:
                    a, b = b, a
                row = m - 1 - tri_rank[(a * n + b) * n + c]
                cur[row >> 6] |= one << np.uint64(row & 63)
                if row > top:
                    top = row
        piv = top
        while piv >= 0:
            hi_word = piv >> 6
            slot = owner_lo[piv]
            if slot == -1:
                need = hi_word + 1
                while pool_end + need > pool_cap:
                    pool_cap *= 2
                    grown = np.empty(pool_cap, np.uint64)
                    grown[:pool_end] = pool[:pool_end]
                    pool = grown
                owner_lo[piv] = pool_end
                for w in range(need):
                    pool[pool_end + w] = cur[w]
                    cur[w] = zero
                pool_end += need
                pair_tri[cr] = m - 1 - piv
                break
            for w in range(hi_word, -1, -1):
                cur[w] ^= pool[slot + w]
            piv = -1
            for w in range(hi_word, -1, -1):
                v = cur[w]
                if v != zero:
                    b = 63
                    while (v >> np.uint64(b)) & one == zero:
                        b -= 1
                    piv = (w << 6) | b
                    break
        if piv < 0:
            # column reduced to zero; cur is already clear up to the last
            # merge width, but the initial fill may have set higher words
            for w in range(W):
                cur[w] = zero
    return pair_tri


@njit(cache=True)
def _reduce_dim1(edge_i, edge_j, cleared, n_vertices):
    """Column-reduce the edge boundary matrix over Z/2, skipping cleared columns.

    Returns (paired: bool per edge, became_empty: bool per edge). A paired edge
    kills a vertex class; an empty reduction marks a cycle-creating edge.
    """
    E = edge_i.shape[0]
    W = (n_vertices + 63) >> 6
    if W == 0:
        W = 1
    owner = np.full(n_vertices, -1, np.int64)
    owner_col = np.zeros((n_vertices, W), np.uint64)
    cur = np.zeros(W, np.uint64)
    paired = np.zeros(E, np.bool_)
    empty = np.zeros(E, np.bool_)
    one = np.uint64(1)
    zero = np.uint64(0)
    for r in range(E):
        if cleared[r]:
            continue
        for w in range(W):
            cur[w] = zero
        a = edge_i[r]
        b = edge_j[r]
        cur[a >> 6] |= one << np.uint64(a & 63)
        cur[b >> 6] |= one << np.uint64(b & 63)
        piv = a if a > b else b
        while piv >= 0:
            if owner[piv] == -1:
                owner[piv] = r
                for w in range(W):
                    owner_col[piv, w] = cur[w]
                paired[r] = True
                break
            hi_word = piv >> 6
            for w in range(hi_word, -1, -1):
                cur[w] ^= owner_col[piv, w]
            piv = -1
            for w in range(hi_word, -1, -1):
                v = cur[w]
                if v != zero:
                    bb = 63
                    while (v >> np.uint64(bb)) & one == zero:
                        bb -= 1
                    piv = (w << 6) | bb
                    break
        if piv < 0:
            empty[r] = True
    return paired, empty


@njit(cache=True)
def rips_reduce(dist, max_radius, cap, max_dim):
    """Full persistence pairing for one distance matrix.

    Returns (h0_deaths, h0_essential_count, h1_births, h1_deaths,
    h1_essential_births). Dimension-0 births are all zero and are not
    materialized. cap bounds dimension-2 work and must satisfy
    cap <= max_radius; pass cap = max_radius to disable the shortcut.
    """
    n = dist.shape[0]

    n_pairs = n * (n - 1) // 2
    ei = np.empty(n_pairs, np.int64)
    ej = np.empty(n_pairs, np.int64)
    ed = np.empty(n_pairs, np.float64)
    E = 0
    for i in range(n):
        for j in range(i + 1, n):
            dij = dist[i, j]
            if dij <= max_radius:
                ei[E] = i
                ej[E] = j
                ed[E] = dij
                E += 1
    ei = ei[:E]
    ej = ej[:E]
    ed = ed[:E]
    order = np.argsort(ed, kind="mergesort")
    si = ei[order]
    sj = ej[order]
    sd = ed[order]

    h1_births = np.empty(0, np.float64)
    h1_deaths = np.empty(0, np.float64)
    h1_ess = np.empty(0, np.float64)
    cleared = np.zeros(E, np.bool_)
    E_cap = 0
    pair_tri = np.full(0, -1, np.int64)
    tri_diam_sorted = np.empty(0, np.float64)

    if max_dim >= 1 and n >= 3:
        while E_cap < E and sd[E_cap] <= cap:
            E_cap += 1
        m = _count_triangles(dist, cap)
        if n <= 100:
            # dual (coboundary) route: few columns, near-instant pivots; the
            # bitset pool and the n^3 rank table stay small at this size
            enc = np.empty(m, np.int64)
            tri_diam = np.empty(m, np.float64)
            _fill_triangles_enc(dist, cap, enc, tri_diam)
            torder = np.argsort(tri_diam, kind="mergesort")
            tri_diam_sorted = tri_diam[torder]
            tri_rank = np.empty(n * n * n, np.int64)
            for pos in range(m):
                tri_rank[enc[torder[pos]]] = pos
            pair_tri = _reduce_dim2_dual(dist, si, sj, sd, E_cap, tri_rank, m, cap)
        else:
            erank = np.full((n, n), -1, np.int64)
            for r in range(E_cap):
                erank[si[r], sj[r]] = r
                erank[sj[r], si[r]] = r
            tri_edges = np.empty((m, 3), np.int64)
            tri_diam = np.empty(m, np.float64)
            _fill_triangles(dist, cap, erank, tri_edges, tri_diam)
            torder = np.argsort(tri_diam, kind="mergesort")
            tri_edges = tri_edges[torder]
            tri_diam_sorted = tri_diam[torder]
            pair_tri = _reduce_dim2(tri_edges, E_cap)
        for r in range(E_cap):
            if pair_tri[r] >= 0:
                cleared[r] = True

    paired, empty = _reduce_dim1(si, sj, cleared, n)

    n_h0 = 0
    for r in range(E):
        if paired[r]:
            n_h0 += 1
    h0_deaths = np.empty(n_h0, np.float64)
    q = 0
    for r in range(E):
        if paired[r]:
            h0_deaths[q] = sd[r]
            q += 1
    h0_essential = n - n_h0

    if max_dim >= 1 and n >= 3:
        n_h1 = 0
        for r in range(E_cap):
            if pair_tri[r] >= 0 and tri_diam_sorted[pair_tri[r]] > sd[r]:
                n_h1 += 1
        n_ess = 0
        for r in range(E_cap):
            if empty[r]:
                n_ess += 1
        h1_births = np.empty(n_h1, np.float64)
        h1_deaths = np.empty(n_h1, np.float64)
        h1_ess = np.empty(n_ess, np.float64)
        q = 0
        e = 0
        for r in range(E_cap):
            if pair_tri[r] >= 0:
                death = tri_diam_sorted[pair_tri[r]]
                if death > sd[r]:
                    h1_births[q] = sd[r]
                    h1_deaths[q] = death
                    q += 1
            elif empty[r]:
                h1_ess[e] = sd[r]
                e += 1

    return h0_deaths, h0_essential, h1_births, h1_deaths, h1_ess


@njit(cache=True)
def covering_radius(dist):
    """min over vertices of the distance to their farthest vertex."""
    n = dist.shape[0]
    best = np.inf
    for v in range(n):
        far = 0.0
        for u in range(n):
            if dist[v, u] > far:
                far = dist[v, u]
        if far < best:
            best = far
    return best
