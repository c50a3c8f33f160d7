"""Neighborhood exploration and per-edge local functionals.

Oriented distance between edges is explored with layered BFS from the
head of the start edge, with the start edge's undirected copy removed
before the first step and no vertex ever revisited.  On edges whose
neighborhood ball is a tree this reproduces the self-avoiding-path
distance exactly; on balls containing cycles it is an approximation, so
every exact assertion downstream is restricted to tree-ball edges.

Edges are passed to this module as (tail, head) vertex pairs so the
explorations stay independent of any oriented-edge indexing.
"""

from __future__ import annotations

import numpy as np

from nbspectra.graphs import DirectedEdgeIndex, LabeledGraph, graph_from_edges
from nbspectra.model import SpectralData
from nbspectra.nbops import apply_nb, dense_nb_matrix
from nbspectra.spectral import nb_power_singular_values

__all__ = [
    "tangle_free",
    "cyclic_ball_count",
    "oriented_frontier_layers",
    "oriented_type_counts",
    "s_walks",
    "s_walks_vector",
    "weak_ramanujan_bound",
    "p_functional",
    "s_kl",
    "tree_ball_edges",
    "cheeger_bruteforce",
    "diameter_bound_check",
    "tiny_graph_corpus",
]

Edge = tuple[int, int]


def _ball_vertices(graph: LabeledGraph, v: int, radius: int) -> list[int]:
    dist = {v: 0}
    frontier = [v]
    for d in range(1, radius + 1):
        nxt = []
        for u in frontier:
            for w in graph.adjacency[u]:
                w = int(w)
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return list(dist)


def _ball_cycle_counts(graph: LabeledGraph, ell: int) -> np.ndarray:
    """Independent cycle count (edges - vertices + 1, the ball being
    connected by construction) of every radius-ell ball."""
    counts = np.zeros(graph.n, dtype=np.int64)
    in_ball = np.zeros(graph.n, dtype=bool)
    for v in range(graph.n):
        ball = _ball_vertices(graph, v, ell)
        in_ball[ball] = True
        edges = sum(int(np.count_nonzero(in_ball[graph.adjacency[u]])) for u in ball)
        in_ball[ball] = False
        counts[v] = edges // 2 - len(ball) + 1
    return counts


def tangle_free(graph: LabeledGraph, ell: int) -> tuple[bool, list[int]]:
    """Check that every radius-ell ball contains at most one independent cycle.

    Returns (flag, offending) where offending lists the vertices whose
    ball has two or more independent cycles.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    counts = _ball_cycle_counts(graph, ell)
    offending = np.nonzero(counts > 1)[0].tolist()
    return (not offending, offending)


def cyclic_ball_count(graph: LabeledGraph, ell: int) -> int:
    """Number of vertices whose radius-ell ball contains at least one cycle."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    return int(np.count_nonzero(_ball_cycle_counts(graph, ell) >= 1))


def oriented_frontier_layers(
    graph: LabeledGraph,
    e: Edge,
    tmax: int,
    removed_edges: set[frozenset[int]] | None = None,
) -> list[list[Edge]]:
    """Per-layer lists of oriented edges at oriented distance 0..tmax from e.

    Layer 0 is e itself.  Layer t lists every oriented edge (u, w) with u
    discovered at layer t-1 and w new at layer t; several such edges may
    share the same head w.  The undirected copy of e is removed before
    the first step, and edges in removed_edges (frozenset pairs) are
    never crossed.
    """
    tail, head = e
    blocked = {frozenset((tail, head))}
    if removed_edges:
        blocked |= removed_edges
    layers: list[list[Edge]] = [[(tail, head)]]
    visited = {head}
    frontier = [head]
    for _ in range(tmax):
        edges_t: list[Edge] = []
        new_vertices: dict[int, None] = {}
        for u in frontier:
            for w in graph.adjacency[u]:
                w = int(w)
                if w in visited or frozenset((u, w)) in blocked:
                    continue
                edges_t.append((u, w))
                new_vertices[w] = None
        visited.update(new_vertices)
        frontier = list(new_vertices)
        layers.append(edges_t)
    return layers


def oriented_type_counts(
    graph: LabeledGraph,
    e: Edge,
    t: int,
    removed_edges: set[frozenset[int]] | None = None,
) -> np.ndarray:
    """Counts by head type of the oriented edges at oriented distance t from e."""
    if t < 0:
        raise ValueError("t must be >= 0")
    layers = oriented_frontier_layers(graph, e, t, removed_edges)
    counts = np.zeros(graph.r, dtype=np.int64)
    for _, head in layers[t]:
        counts[graph.types[head] - 1] += 1
    return counts


def s_walks(index: DirectedEdgeIndex, e: int, k: int) -> int:
    """Number of non-backtracking walks of k+1 edges starting with edge e."""
    return int(s_walks_vector(index, k)[e])


def s_walks_vector(index: DirectedEdgeIndex, k: int) -> np.ndarray:
    """Walk counts for every start edge at once: k operator sweeps of all-ones."""
    if k < 0:
        raise ValueError("k must be >= 0")
    x = np.ones(index.m)
    for _ in range(k):
        x = apply_nb(index, x)
    return np.rint(x).astype(np.int64)


def weak_ramanujan_bound(index: DirectedEdgeIndex, k: int) -> tuple[float, float]:
    """Both sides of the trace lower bound on the second singular value.

    Returns (lhs, rhs) with lhs = s_{2,k}^2 and
    rhs = mean_e S_k(e) - s_{1,k}^2 / m; lhs >= rhs is a theorem.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = nb_power_singular_values(index, k, count=2)
    s1 = float(s[0])
    s2 = float(s[1]) if len(s) > 1 else 0.0
    walks = s_walks_vector(index, k)
    rhs = walks.mean() - s1**2 / index.m
    return s2**2, float(rhs)


def _ball_distances(graph: LabeledGraph, v: int, radius: int) -> dict[int, int]:
    dist = {v: 0}
    frontier = [v]
    for d in range(1, radius + 1):
        nxt = []
        for u in frontier:
            for w in graph.adjacency[u]:
                w = int(w)
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist


def p_functional(
    graph: LabeledGraph, data: SpectralData, e: Edge, k: int, ell: int
) -> float:
    """Sum over frontier edges f at distance t < ell of the once-turning
    walk weights through ordered pairs of distinct continuations of f.

    For each continuation pair (g, h) of f the contribution is
    <phi_k, Y_t(g)> * S_{ell-t-1}(h), with both factors explored in the
    graph whose radius-t ball around head(e) has had its internal edges
    removed.  Continuations that re-enter the explored ball are skipped.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    phi = data.phi[k - 1]
    head_dist = _ball_distances(graph, e[1], ell)
    layers = oriented_frontier_layers(graph, e, ell - 1)

    total = 0.0
    explored: set[int] = set()
    for t in range(ell):
        explored.update(head for _, head in layers[t])
        removed = {
            frozenset((u, int(w)))
            for u, du in head_dist.items()
            if du <= t
            for w in graph.adjacency[u]
            if head_dist.get(int(w), ell + 1) <= t
        }
        for a, b in layers[t]:
            conts = [
                (b, int(c))
                for c in graph.adjacency[b]
                if int(c) != a and int(c) not in explored
            ]
            if len(conts) < 2:
                continue
            y_vals = np.array(
                [phi @ oriented_type_counts(graph, g, t, removed) for g in conts]
            )
            s_vals = np.array(
                [
                    oriented_type_counts(graph, h, ell - t - 1, removed).sum()
                    for h in conts
                ],
                dtype=np.float64,
            )
            total += y_vals.sum() * s_vals.sum() - float(y_vals @ s_vals)
    return total


def s_kl(graph: LabeledGraph, data: SpectralData, e: Edge, k: int, ell: int) -> float:
    """Frontier size at distance ell from e times phi_k at the type of tail(e)."""
    size = int(oriented_type_counts(graph, e, ell).sum())
    return size * float(data.phi[k - 1][graph.types[e[0]] - 1])


def tree_ball_edges(graph: LabeledGraph, radius: int) -> list[Edge]:
    """Oriented edges (u, v) whose radius-`radius` ball around v induces a tree."""
    out = []
    in_ball = np.zeros(graph.n, dtype=bool)
    for v in range(graph.n):
        ball = _ball_vertices(graph, v, radius)
        in_ball[ball] = True
        edges = sum(int(np.count_nonzero(in_ball[graph.adjacency[u]])) for u in ball)
        in_ball[ball] = False
        if edges // 2 == len(ball) - 1:
            out.extend((int(u), v) for u in graph.adjacency[v])
    return out


def cheeger_bruteforce(index: DirectedEdgeIndex, k: int) -> tuple[float, float]:
    """Expansion ratio over edge-symmetric subsets versus the spectral gap.

    Enumerates every proper subset of undirected edges (one bit each, so
    2^|E| cases), measures volume and outer surface in the Perron weights
    of the symmetrized k-th power, and returns (h_k, gap) with
    gap = sigma_1 - sigma_2 in the real-sorted eigenvalue order.  The
    theorem gap <= 2 h_k is enforced here; a violation raises.
    """
    n_undirected = index.m // 2
    if n_undirected > 12:
        raise ValueError("brute force is capped at 12 undirected edges")
    if not 1 <= k <= 3:
        raise ValueError("k must be in [1, 3]")
    B = dense_nb_matrix(index)
    Bk = np.linalg.matrix_power(B, k)
    BkP = Bk[:, index.inv_perm]
    vals, vecs = np.linalg.eigh(BkP)
    sigma1, sigma2 = vals[-1], vals[-2]
    gap = float(sigma1 - sigma2)
    x1 = _perron_vector(vals, vecs)

    # Surface weights pair x1 on the start edge with the reversed x1 on the
    # end edge; only then does the singular-value equation make the surface
    # telescope against sigma_1 and the inequality hold on asymmetric graphs.
    weighted = (x1[:, None] * Bk) * x1[index.inv_perm][None, :]
    vol = x1**2
    undirected_vol = vol[0::2] + vol[1::2]
    h = np.inf
    for mask in range(1, 2**n_undirected - 1):
        bits = np.array([(mask >> i) & 1 for i in range(n_undirected)], dtype=bool)
        sel = np.repeat(bits, 2)
        v_in = float(undirected_vol[bits].sum())
        v_out = float(undirected_vol[~bits].sum())
        if v_in <= 0 or v_out <= 0:
            continue
        surface = float(weighted[np.ix_(sel, ~sel)].sum())
        h = min(h, surface / min(v_in, v_out))
    if gap > 2 * h + 1e-8:
        raise RuntimeError(f"expansion inequality violated: gap={gap}, h={h}")
    return float(h), gap


def _perron_vector(vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Nonnegative unit eigenvector for the top eigenvalue of a symmetric
    nonnegative matrix: the projection of the all-ones vector onto the top
    eigenspace (robust when the top eigenvalue is degenerate, where a single
    eigh column may mix signs)."""
    top = vals >= vals[-1] - 1e-9 * max(1.0, abs(vals[-1]))
    basis = vecs[:, top]
    x = basis @ (basis.T @ np.ones(vecs.shape[0]))
    norm = np.linalg.norm(x)
    if norm < 1e-12:
        x = vecs[:, -1] if vecs[-1].sum() >= 0 else -vecs[:, -1]
        return x
    x = x / norm
    return np.where(np.abs(x) < 1e-12, 0.0, x)


def diameter_bound_check(index: DirectedEdgeIndex, k: int) -> list[tuple[int, int]]:
    """Pairs of edges violating the spectral diameter bound (must be empty).

    For every edge pair with x1(e) x1(f) > s2/s1 in the symmetrized k-th
    power, the tails of e and f must sit within graph distance k+1.
    """
    B = dense_nb_matrix(index)
    Bk = np.linalg.matrix_power(B, k)
    BkP = Bk[:, index.inv_perm]
    vals, vecs = np.linalg.eigh(BkP)
    moduli = np.sort(np.abs(vals))[::-1]
    s1 = float(moduli[0])
    s2 = float(moduli[1]) if len(moduli) > 1 else 0.0
    if s1 <= 1e-12:
        return []
    x1 = _perron_vector(vals, vecs)

    dist = _all_pairs_distances(index)
    violations = []
    threshold = s2 / s1
    for e in range(index.m):
        if x1[e] <= 0:
            continue
        for f in range(index.m):
            if x1[e] * x1[f] > threshold:
                u, v = int(index.tails[e]), int(index.tails[f])
                if dist[u, v] > k + 1:
                    violations.append((e, f))
    return violations


def _all_pairs_distances(index: DirectedEdgeIndex) -> np.ndarray:
    n = index.n
    dist = np.full((n, n), np.iinfo(np.int64).max // 2, dtype=np.int64)
    for s in range(n):
        dist[s, s] = 0
        frontier = [s]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for f in index.out_edges(u):
                    w = int(index.heads[f])
                    if dist[s, w] > d:
                        dist[s, w] = d
                        nxt.append(w)
            frontier = nxt
    return dist


def tiny_graph_corpus() -> dict[str, LabeledGraph]:
    """Named small graphs (all with at most 12 undirected edges) used by the
    inequality suites and the diagnostics command."""
    corpus = {
        "triangle": graph_from_edges(3, [(0, 1), (0, 2), (1, 2)]),
        "path3": graph_from_edges(3, [(0, 1), (1, 2)]),
        "path5": graph_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)]),
        "cycle4": graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]),
        "cycle5": graph_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]),
        "k4": graph_from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
        "bowtie": graph_from_edges(5, [(0, 1), (0, 2), (1, 2), (2, 3), (2, 4), (3, 4)]),
        "two_triangles_bridge": graph_from_edges(
            6, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)]
        ),
        "star5": graph_from_edges(6, [(0, i) for i in range(1, 6)]),
        "k23": graph_from_edges(5, [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)]),
        "cube": graph_from_edges(
            8,
            [(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (6, 7), (4, 7),
             (0, 4), (1, 5), (2, 6), (3, 7)],
        ),
    }
    return corpus
