"""Matrix-free non-backtracking operator and its small-graph oracles.

An edge vector is a float array aligned to a DirectedEdgeIndex.  The
operator maps x to y with y_e = sum of x_f over continuations f of e
(tail(f) = head(e), head(f) != tail(e)).  Both the operator and its
transpose run in O(m) by sharing per-vertex partial sums:

    y_e = T(head(e)) - x_inv(e)   with   T(v) = sum of x_f over tail(f) = v,

valid because the unique excluded continuation of e is inv(e).  Partial
sums are accumulated with numpy bincount, whose sequential reduction
makes results bitwise deterministic for a fixed edge ordering.
"""

from __future__ import annotations

import numpy as np

from nbspectra.graphs import DirectedEdgeIndex, LabeledGraph
from nbspectra.model import SpectralData

__all__ = [
    "apply_nb",
    "apply_nb_transpose",
    "reverse_edges",
    "block_signal_vector",
    "dense_nb_matrix",
    "count_nb_walks",
    "apply_nb_naive",
]

DENSE_CAP = 5000


def _check_aligned(index: DirectedEdgeIndex, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (index.m,):
        raise ValueError(f"edge vector has shape {x.shape}, expected ({index.m},)")
    return x


def apply_nb(index: DirectedEdgeIndex, x: np.ndarray) -> np.ndarray:
    """y_e = sum of x_f over non-backtracking continuations f of e."""
    x = _check_aligned(index, x)
    tail_sums = np.bincount(index.tails, weights=x, minlength=index.n)
    return tail_sums[index.heads] - x[index.inv_perm]


def apply_nb_transpose(index: DirectedEdgeIndex, x: np.ndarray) -> np.ndarray:
    """Adjoint action: y_f = sum of x_e over edges e that f continues."""
    x = _check_aligned(index, x)
    head_sums = np.bincount(index.heads, weights=x, minlength=index.n)
    return head_sums[index.tails] - x[index.inv_perm]


def apply_nb_naive(index: DirectedEdgeIndex, x: np.ndarray) -> np.ndarray:
    """Reference loop over out_continuations; used to pin the O(m) identity."""
    x = _check_aligned(index, x)
    y = np.zeros(index.m)
    for e in range(index.m):
        y[e] = x[index.out_continuations(e)].sum()
    return y


def reverse_edges(x: np.ndarray) -> np.ndarray:
    """Involution swapping each oriented edge with its reversal."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    out[0::2] = x[1::2]
    out[1::2] = x[0::2]
    return out


def block_signal_vector(
    index: DirectedEdgeIndex, graph: LabeledGraph, data: SpectralData, k: int
) -> np.ndarray:
    """Edge vector whose entry at e is phi_k evaluated at the type of head(e).

    k = 1 gives the all-ones vector.
    """
    if not 1 <= k <= data.r:
        raise ValueError(f"k must be in [1, {data.r}]")
    return data.phi[k - 1][graph.types[index.heads] - 1].astype(np.float64)


def dense_nb_matrix(index: DirectedEdgeIndex, cap: int = DENSE_CAP) -> np.ndarray:
    """Explicit 0/1 matrix of the operator; small-graph oracle."""
    if index.m > cap:
        raise ValueError(f"m = {index.m} exceeds dense cap {cap}")
    B = np.zeros((index.m, index.m))
    for e in range(index.m):
        B[e, index.out_continuations(e)] = 1.0
    return B


def count_nb_walks(index: DirectedEdgeIndex, e: int, f: int, k: int) -> int:
    """Exhaustive DFS count of non-backtracking walks of k+1 edges from e to f.

    Equals entry (e, f) of the k-th operator power; intended as an oracle
    for small graphs and k <= 8.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return int(e == f)
    total = 0
    stack = [(e, 0)]
    while stack:
        g, depth = stack.pop()
        conts = index.out_continuations(g)
        if depth + 1 == k:
            total += int(np.count_nonzero(conts == f))
        else:
            stack.extend((int(h), depth + 1) for h in conts)
    return total
