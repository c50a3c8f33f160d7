"""Random graph generation and the oriented-edge index structure.

Graphs are undirected and simple, with a per-vertex type label in [1, r].
The oriented-edge index enumerates the 2|E| directed copies of the edges;
it is the index space on which the non-backtracking operator acts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "LabeledGraph",
    "DirectedEdgeIndex",
    "graph_from_edges",
    "generate_er",
    "generate_sbm",
    "build_edge_index",
    "write_edge_list",
    "read_edge_list",
]


@dataclass(frozen=True)
class LabeledGraph:
    """Undirected simple graph with vertex types.

    Attributes
    ----------
    n : number of vertices (ids 0..n-1).
    adjacency : per-vertex sorted integer arrays of neighbor ids.
    types : int array of length n with values in [1, r].
    r : number of types.
    """

    n: int
    adjacency: list[np.ndarray]
    types: np.ndarray
    r: int

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @property
    def edge_count(self) -> int:
        return int(self.degrees.sum()) // 2

    def undirected_edges(self) -> np.ndarray:
        """(|E|, 2) array of edges (u, v) with u < v, sorted lexicographically."""
        us, vs = [], []
        for u in range(self.n):
            nbrs = self.adjacency[u]
            upper = nbrs[nbrs > u]
            us.append(np.full(len(upper), u, dtype=np.int64))
            vs.append(upper.astype(np.int64))
        if not us:
            return np.empty((0, 2), dtype=np.int64)
        return np.stack([np.concatenate(us), np.concatenate(vs)], axis=1)

    def validate(self) -> None:
        """Raise ValueError if a structural invariant is violated."""
        if len(self.adjacency) != self.n or len(self.types) != self.n:
            raise ValueError("adjacency/types length does not match n")
        if self.n and (self.types.min() < 1 or self.types.max() > self.r):
            raise ValueError("type labels must lie in [1, r]")
        for u in range(self.n):
            nbrs = self.adjacency[u]
            if len(nbrs) != len(np.unique(nbrs)):
                raise ValueError(f"duplicate neighbors at vertex {u}")
            if np.any(nbrs == u):
                raise ValueError(f"self-loop at vertex {u}")
            for v in nbrs:
                if u not in self.adjacency[int(v)]:
                    raise ValueError(f"asymmetric edge ({u},{v})")


@dataclass(frozen=True)
class DirectedEdgeIndex:
    """Enumeration of oriented edges with involution and incidence maps.

    Canonical ordering: undirected edges {u, v} with u < v are sorted
    lexicographically; edge i yields oriented edges 2i = (u, v) and
    2i+1 = (v, u), so the involution is index XOR 1.
    """

    n: int
    m: int
    tails: np.ndarray
    heads: np.ndarray
    _in_offsets: np.ndarray = field(repr=False)
    _in_edges: np.ndarray = field(repr=False)
    _out_offsets: np.ndarray = field(repr=False)
    _out_edges: np.ndarray = field(repr=False)

    def inv(self, e: int | np.ndarray) -> int | np.ndarray:
        return e ^ 1

    @property
    def inv_perm(self) -> np.ndarray:
        return np.arange(self.m, dtype=np.int64) ^ 1

    def in_edges(self, v: int) -> np.ndarray:
        """Oriented edges e with head(e) = v."""
        return self._in_edges[self._in_offsets[v] : self._in_offsets[v + 1]]

    def out_edges(self, v: int) -> np.ndarray:
        """Oriented edges f with tail(f) = v."""
        return self._out_edges[self._out_offsets[v] : self._out_offsets[v + 1]]

    def out_continuations(self, e: int) -> np.ndarray:
        """Oriented edges f with tail(f) = head(e) and head(f) != tail(e)."""
        out = self.out_edges(int(self.heads[e]))
        return out[out != (e ^ 1)]

    def edge_id(self, u: int, v: int) -> int:
        """Index of the oriented edge (u, v); raises KeyError if absent."""
        out = self.out_edges(u)
        hit = out[self.heads[out] == v]
        if len(hit) == 0:
            raise KeyError(f"({u},{v}) is not an oriented edge")
        return int(hit[0])


def _csr(keys: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, order.astype(np.int64)


def build_edge_index(graph: LabeledGraph) -> DirectedEdgeIndex:
    """Build the oriented-edge index of a graph in canonical order."""
    edges = graph.undirected_edges()
    m = 2 * len(edges)
    tails = np.empty(m, dtype=np.int64)
    heads = np.empty(m, dtype=np.int64)
    tails[0::2] = edges[:, 0]
    heads[0::2] = edges[:, 1]
    tails[1::2] = edges[:, 1]
    heads[1::2] = edges[:, 0]
    in_off, in_e = _csr(heads, graph.n) if m else (np.zeros(graph.n + 1, np.int64), np.empty(0, np.int64))
    out_off, out_e = _csr(tails, graph.n) if m else (np.zeros(graph.n + 1, np.int64), np.empty(0, np.int64))
    return DirectedEdgeIndex(
        n=graph.n, m=m, tails=tails, heads=heads,
        _in_offsets=in_off, _in_edges=in_e,
        _out_offsets=out_off, _out_edges=out_e,
    )


def _graph_from_edge_arrays(n: int, us: np.ndarray, vs: np.ndarray,
                            types: np.ndarray, r: int) -> LabeledGraph:
    ends = np.concatenate([us, vs])
    nbrs = np.concatenate([vs, us])
    order = np.lexsort((nbrs, ends))
    ends, nbrs = ends[order], nbrs[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(ends, minlength=n), out=offsets[1:])
    adjacency = [nbrs[offsets[u] : offsets[u + 1]] for u in range(n)]
    return LabeledGraph(n=n, adjacency=adjacency, types=types, r=r)


def graph_from_edges(
    n: int,
    edges: list[tuple[int, int]],
    types: np.ndarray | list[int] | None = None,
    r: int = 1,
) -> LabeledGraph:
    """Build a validated graph from an undirected edge list."""
    us = np.asarray([e[0] for e in edges], dtype=np.int64)
    vs = np.asarray([e[1] for e in edges], dtype=np.int64)
    if types is None:
        types = np.full(n, 1, dtype=np.int64)
    graph = _graph_from_edge_arrays(n, us, vs, np.asarray(types, dtype=np.int64), r)
    graph.validate()
    return graph


def _draw_pair_edges(n: int, prob_row, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # One uniform per unordered pair, consumed in canonical (u, v) order so a
    # fixed seed reproduces the same edge set on every platform.
    us, vs = [], []
    for u in range(n - 1):
        p = prob_row(u)
        hits = np.nonzero(rng.random(n - 1 - u) < p)[0]
        if len(hits):
            us.append(np.full(len(hits), u, dtype=np.int64))
            vs.append((hits + u + 1).astype(np.int64))
    if not us:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(us), np.concatenate(vs)


def generate_er(n: int, alpha: float, seed: int) -> LabeledGraph:
    """Erdos-Renyi graph with edge probability alpha/n; one type.

    Each unordered pair is an edge independently with probability alpha/n.
    A mean degree exceeding n is rejected except at n = 1, where no pair
    exists for the probability to apply to.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n > 1 and alpha / n > 1:
        raise ValueError(f"alpha/n = {alpha / n} exceeds 1")
    rng = np.random.default_rng(seed)
    p = alpha / n
    us, vs = _draw_pair_edges(n, lambda u: p, rng)
    return _graph_from_edge_arrays(n, us, vs, np.ones(n, dtype=np.int64), 1)


def generate_sbm(
    pi: np.ndarray,
    W: np.ndarray,
    n: int,
    assignment: str = "deterministic-proportional",
    seed: int = 0,
) -> LabeledGraph:
    """Stochastic block model: edge probability W(type u, type v)/n, capped at 1.

    Parameters
    ----------
    pi : probability vector of length r.
    W : symmetric nonnegative r x r matrix.
    assignment : "deterministic-proportional" gives floor(n*pi(i)) vertices of
        type i with the remainder going to the largest fractional parts;
        "iid-from-pi" samples each type independently from pi.
    """
    pi = np.asarray(pi, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    r = len(pi)
    if r == 0:
        raise ValueError("at least one type is required")
    if n < 1:
        raise ValueError("n must be >= 1")
    if abs(pi.sum() - 1.0) > 1e-9 or np.any(pi <= 0):
        raise ValueError("pi must be a positive probability vector")
    if W.shape != (r, r) or np.any(W < 0):
        raise ValueError("W must be a nonnegative r x r matrix")
    if not np.allclose(W, W.T, atol=1e-12):
        raise ValueError("W must be symmetric")

    rng = np.random.default_rng(seed)
    if assignment == "deterministic-proportional":
        base = np.floor(n * pi).astype(np.int64)
        frac = n * pi - base
        short = n - base.sum()
        for i in np.argsort(-frac, kind="stable")[:short]:
            base[i] += 1
        types = np.repeat(np.arange(1, r + 1), base)
    elif assignment == "iid-from-pi":
        types = rng.choice(np.arange(1, r + 1), size=n, p=pi)
    else:
        raise ValueError(f"unknown assignment mode {assignment!r}")

    prow = np.minimum(W / n, 1.0)  # edge probability caps at 1
    t0 = types - 1

    def prob_row(u: int) -> np.ndarray:
        return prow[t0[u], t0[u + 1 :]]

    us, vs = _draw_pair_edges(n, prob_row, rng)
    return _graph_from_edge_arrays(n, us, vs, types.astype(np.int64), r)


def write_edge_list(graph: LabeledGraph, path: str | Path) -> None:
    """Write the text format: header ``n r``, ``u v`` per edge, ``type v t`` per vertex."""
    lines = [f"{graph.n} {graph.r}"]
    for u, v in graph.undirected_edges():
        lines.append(f"{u} {v}")
    for v in range(graph.n):
        lines.append(f"type {v} {graph.types[v]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> LabeledGraph:
    """Read the edge-list text format written by :func:`write_edge_list`."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError("empty edge-list file")
    n, r = (int(x) for x in lines[0].split())
    us, vs = [], []
    types = np.ones(n, dtype=np.int64)
    for line in lines[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "type":
            types[int(parts[1])] = int(parts[2])
        else:
            u, v = int(parts[0]), int(parts[1])
            us.append(u)
            vs.append(v)
    graph = _graph_from_edge_arrays(
        n, np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64), types, r
    )
    graph.validate()
    return graph
