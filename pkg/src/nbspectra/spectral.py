"""Eigenvalue and eigenvector computation for the non-backtracking operator.

Three routes to the spectrum are provided and cross-checked against each
other in the test suite:

* ``full_spectrum_dense``: LAPACK eigenvalues of the explicit m x m
  matrix (balanced Hessenberg reduction plus shifted QR).  Reference
  oracle, capped at m <= 5000.
* ``full_spectrum_companion``: eigenvalues of the 2n x 2n block
  companion [[A, -(D - I)], [I, 0]] built from the adjacency and degree
  matrices, with the +-1 multiplicities adjusted by |E| - n.  By the
  determinant identity behind the Ihara zeta function this multiset
  equals the full operator spectrum at a fraction of the dense cost.
* ``leading_eigenpairs``: explicitly restarted Arnoldi on the
  matrix-free operator, for the leading eigenvalues by modulus.

``nb_power_singular_values`` runs symmetric Lanczos on x -> B^k(Px),
which is symmetric by the oriented-path symmetry of the operator, and
returns the leading singular values of the k-th operator power.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nbspectra.graphs import DirectedEdgeIndex, LabeledGraph
from nbspectra.nbops import apply_nb, apply_nb_transpose, dense_nb_matrix, reverse_edges

__all__ = [
    "SpectrumReport",
    "SolverConvergenceError",
    "full_spectrum_dense",
    "full_spectrum_companion",
    "leading_eigenpairs",
    "candidate_vector",
    "nb_power_singular_values",
    "alignment",
]

REORTH_LOSS_TOL = 1e-8
BREAKDOWN_TOL = 1e-12


class SolverConvergenceError(RuntimeError):
    """Iterative solver failed to converge; carries the best residuals seen."""

    def __init__(self, message: str, residuals: dict[int, float] | None = None):
        super().__init__(message)
        self.residuals = residuals or {}


@dataclass
class SpectrumReport:
    """Computed spectrum with optional eigenvectors.

    eigenvalues are sorted by decreasing modulus.  leading_vectors maps an
    eigenvalue position to a real unit eigenvector (only real, converged
    eigenvalues get one); residuals maps a position to ||Bv - lambda v||
    for the returned pair.
    """

    eigenvalues: np.ndarray
    method: str
    iterations: int = 0
    leading_vectors: dict[int, np.ndarray] = field(default_factory=dict)
    residuals: dict[int, float] = field(default_factory=dict)

    def vector(self, j: int) -> np.ndarray:
        if j not in self.leading_vectors:
            raise KeyError(f"no eigenvector stored for eigenvalue position {j}")
        return self.leading_vectors[j]


def _sorted_by_modulus(vals: np.ndarray) -> np.ndarray:
    order = np.lexsort((-vals.imag, -vals.real, -np.abs(vals)))
    return vals[order]


def full_spectrum_dense(index: DirectedEdgeIndex, cap: int = 5000) -> SpectrumReport:
    """All m eigenvalues of the dense operator matrix."""
    B = dense_nb_matrix(index, cap=cap)
    vals = np.linalg.eigvals(B) if index.m else np.empty(0, dtype=np.complex128)
    return SpectrumReport(eigenvalues=_sorted_by_modulus(vals), method="dense")


def _two_core(graph: LabeledGraph) -> LabeledGraph:
    """Iteratively strip degree <= 1 vertices; the result has min degree 2
    (possibly empty)."""
    deg = graph.degrees.copy()
    alive = np.ones(graph.n, dtype=bool)
    stack = [v for v in range(graph.n) if deg[v] <= 1]
    while stack:
        v = stack.pop()
        if not alive[v]:
            continue
        alive[v] = False
        for w in graph.adjacency[v]:
            w = int(w)
            if alive[w]:
                deg[w] -= 1
                if deg[w] <= 1:
                    stack.append(w)
    keep = np.nonzero(alive)[0]
    relabel = -np.ones(graph.n, dtype=np.int64)
    relabel[keep] = np.arange(len(keep))
    adjacency = [relabel[graph.adjacency[v][alive[graph.adjacency[v]]]] for v in keep]
    return LabeledGraph(
        n=len(keep),
        adjacency=[np.sort(a) for a in adjacency],
        types=graph.types[keep],
        r=graph.r,
    )


def full_spectrum_companion(graph: LabeledGraph, deflate_trees: bool = True) -> SpectrumReport:
    """Operator spectrum from the 2n x 2n block companion of the adjacency.

    The quadratic pencil ``lambda^2 - lambda A + (D - I)`` carries the
    non-trivial spectrum; the +-1 eigenvalues are corrected by |E| - n
    copies each (added when |E| >= n, cancelled against the numerically
    closest companion values when |E| < n, which happens exactly when the
    graph has tree components).

    Dangling trees make zero a highly defective companion eigenvalue and
    a naive eigensolve then scatters it by roughly eps^(1/4).  Since
    non-backtracking walks die on trees, the nonzero spectrum lives on
    the 2-core, so by default the companion is built on the core and the
    structurally exact zeros are appended; the core has |E| >= n, which
    also makes the cancellation branch unnecessary.  Pass
    deflate_trees=False for the literal whole-graph reduction.
    """
    if graph.n == 0:
        raise ValueError("graph must be nonempty")
    m_total = 2 * graph.edge_count
    target = graph
    zeros = 0
    if deflate_trees:
        target = _two_core(graph)
        zeros = m_total - 2 * target.edge_count
    n = target.n
    if n == 0:
        vals = np.zeros(zeros, dtype=np.complex128)
        return SpectrumReport(eigenvalues=vals, method="companion")
    A = np.zeros((n, n))
    for u in range(n):
        A[u, target.adjacency[u]] = 1.0
    deg = target.degrees.astype(np.float64)
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = A
    C[:n, n:] = -(np.diag(deg) - np.eye(n))
    C[n:, :n] = np.eye(n)
    vals = np.linalg.eigvals(C)

    diff = target.edge_count - n
    if diff >= 0:
        vals = np.concatenate([vals, np.full(diff, 1.0), np.full(diff, -1.0)])
    else:
        for sign in (1.0, -1.0):
            drop = np.argsort(np.abs(vals - sign), kind="stable")[: -diff]
            vals = np.delete(vals, drop)
    if zeros:
        vals = np.concatenate([vals, np.zeros(zeros)])
    return SpectrumReport(eigenvalues=_sorted_by_modulus(vals), method="companion")


def _orthogonalize(w: np.ndarray, basis: np.ndarray, coeffs: np.ndarray) -> None:
    """Modified Gram-Schmidt in place, with one conditional second pass."""
    scale = np.linalg.norm(w) or 1.0
    for i in range(len(basis)):
        h = basis[i] @ w
        coeffs[i] += h
        w -= h * basis[i]
    # Second pass only when the first one left a measurable component.
    corr = basis @ w
    if len(corr) and np.max(np.abs(corr)) > REORTH_LOSS_TOL * scale:
        coeffs[: len(corr)] += corr
        w -= corr @ basis


def _arnoldi_factorization(matvec, m: int, v0: np.ndarray, dim: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Return (V, H) with V (dim, m) orthonormal and H (dim, dim) Hessenberg.

    On breakdown (invariant subspace) the factorization continues from a
    fresh vector orthogonal to the current basis; the corresponding
    subdiagonal entry of H is zero, so eigenvalues of H remain a union of
    exact invariant-block spectra.
    """
    V = np.zeros((dim, m))
    H = np.zeros((dim, dim))
    V[0] = v0 / np.linalg.norm(v0)
    for j in range(dim):
        w = matvec(V[j])
        coeffs = np.zeros(j + 1)
        _orthogonalize(w, V[: j + 1], coeffs)
        H[: j + 1, j] = coeffs
        if j + 1 == dim:
            break
        beta = np.linalg.norm(w)
        if beta > BREAKDOWN_TOL * max(1.0, np.max(np.abs(H))):
            H[j + 1, j] = beta
            V[j + 1] = w / beta
        else:
            w = rng.standard_normal(m)
            _orthogonalize(w, V[: j + 1], np.zeros(j + 1))
            beta = np.linalg.norm(w)
            if beta <= BREAKDOWN_TOL:
                return V[: j + 1], H[: j + 1, : j + 1]
            V[j + 1] = w / beta
    return V, H


def _sign_fix(v: np.ndarray) -> np.ndarray:
    peak = np.argmax(np.abs(v))
    return -v if v[peak] < 0 else v


def leading_eigenpairs(
    index: DirectedEdgeIndex,
    count: int,
    tol: float = 1e-8,
    max_iter: int = 10,
    seed: int = 0,
    krylov_dim: int | None = None,
) -> SpectrumReport:
    """Leading eigenvalues by modulus via explicitly restarted Arnoldi.

    The Krylov dimension defaults to max(30, 4*count), capped at m.  After
    each sweep the start vector is replaced by the sum of the current
    leading Ritz vectors.  The largest-modulus value must reach the
    relative residual tolerance or SolverConvergenceError is raised;
    trailing values (typically inside the bulk) are reported together
    with their residuals even when unconverged, and eigenvectors are
    extracted only for real converged values.
    """
    m = index.m
    if m == 0:
        raise ValueError("operator on an empty edge set")
    count = min(count, m)
    dim = min(m, krylov_dim if krylov_dim is not None else max(30, 4 * count))
    rng = np.random.default_rng(seed)
    matvec = lambda x: apply_nb(index, x)
    v0 = rng.standard_normal(m)

    best: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    prev_vals: np.ndarray | None = None
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        V, H = _arnoldi_factorization(matvec, m, v0, dim, rng)
        theta, Y = np.linalg.eig(H)
        order = np.lexsort((-theta.imag, -theta.real, -np.abs(theta)))
        theta, Y = theta[order], Y[:, order]
        count = min(count, len(theta))
        top = theta[:count]
        scale = max(np.abs(top[0]), 1e-300)

        vecs = []
        residuals = np.empty(count)
        for j in range(count):
            y = Y[:, j]
            v = (V.T @ y.real) if np.abs(theta[j].imag) <= tol * scale else (V.T @ y)
            nv = np.linalg.norm(v)
            if nv < BREAKDOWN_TOL:
                v = V.T @ y
                nv = np.linalg.norm(v)
            v = v / nv
            if np.iscomplexobj(v):
                residuals[j] = np.linalg.norm(matvec(v.real) + 1j * matvec(v.imag) - theta[j] * v)
            else:
                residuals[j] = np.linalg.norm(matvec(v) - theta[j].real * v)
            vecs.append(v)
        best = (top, residuals, vecs)

        if np.all(residuals <= tol * scale):
            break
        if prev_vals is not None and np.max(np.abs(top - prev_vals)) <= 1e-10 * scale:
            break
        prev_vals = top
        restart = np.zeros(m)
        for j in range(count):
            restart += np.asarray(vecs[j]).real
        if np.linalg.norm(restart) < BREAKDOWN_TOL:
            restart = rng.standard_normal(m)
        v0 = restart

    top, residuals, vecs = best
    scale = max(np.abs(top[0]), 1e-300)
    if residuals[0] > tol * scale:
        raise SolverConvergenceError(
            f"leading eigenvalue did not reach tol={tol} after {sweeps} sweeps",
            residuals={j: float(residuals[j]) for j in range(count)},
        )
    vectors = {}
    for j in range(count):
        if np.abs(top[j].imag) <= tol * scale and residuals[j] <= tol * scale:
            vectors[j] = _sign_fix(np.asarray(vecs[j]).real)
    return SpectrumReport(
        eigenvalues=top,
        method="arnoldi",
        iterations=sweeps,
        leading_vectors=vectors,
        residuals={j: float(residuals[j]) for j in range(count)},
    )


def candidate_vector(
    index: DirectedEdgeIndex, chi_k: np.ndarray, ell: int
) -> tuple[np.ndarray, bool]:
    """Normalized result of ell adjoint then ell forward operator sweeps
    applied to the edge-reversed signal vector.

    Returns (vector, degenerate); degenerate is True when the unnormalized
    result underflows to zero, in which case the zero vector is returned.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    v = reverse_edges(chi_k)
    for _ in range(ell):
        v = apply_nb_transpose(index, v)
    for _ in range(ell):
        v = apply_nb(index, v)
    norm = np.linalg.norm(v)
    if norm < 1e-300:
        return np.zeros(index.m), True
    return v / norm, False


def nb_power_singular_values(
    index: DirectedEdgeIndex,
    k: int,
    count: int,
    tol: float = 1e-10,
    seed: int = 0,
) -> np.ndarray:
    """Leading singular values of the k-th power of the operator.

    Runs symmetric Lanczos with full reorthogonalization on the map
    x -> B^k(Px), whose eigenvalues are the signed singular values; the
    absolute values are returned sorted decreasingly.  Iterations extend
    adaptively up to m, so on small graphs the values are exact.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m = index.m
    if m == 0:
        return np.empty(0)
    count = min(count, m)

    def sym_op(x: np.ndarray) -> np.ndarray:
        y = reverse_edges(x)
        for _ in range(k):
            y = apply_nb(index, y)
        return y

    rng = np.random.default_rng(seed)
    steps = min(m, max(60, 6 * count))
    while True:
        vals, resid = _lanczos_ritz(sym_op, m, steps, rng)
        order = np.argsort(-np.abs(vals), kind="stable")
        sing = np.abs(vals[order])
        top_residuals = resid[order[:count]]
        if steps >= m or np.all(top_residuals <= tol * max(sing[0], 1.0)):
            return sing[:count]
        steps = min(m, 2 * steps)


def _lanczos_ritz(sym_op, m: int, steps: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Full-reorthogonalization Lanczos; returns Ritz values and per-value residuals."""
    V = np.zeros((steps, m))
    alphas = np.zeros(steps)
    betas = np.zeros(max(steps - 1, 0))
    v = rng.standard_normal(m)
    V[0] = v / np.linalg.norm(v)
    j_used = steps
    beta_final = 0.0
    for j in range(steps):
        w = sym_op(V[j])
        coeffs = np.zeros(j + 1)
        _orthogonalize(w, V[: j + 1], coeffs)
        alphas[j] = coeffs[j]
        beta = np.linalg.norm(w)
        if j + 1 == steps:
            beta_final = beta
            break
        if beta <= BREAKDOWN_TOL * max(1.0, np.max(np.abs(alphas))):
            # Invariant subspace found; continue on a fresh direction so the
            # remaining spectrum is still explored.
            w = rng.standard_normal(m)
            _orthogonalize(w, V[: j + 1], np.zeros(j + 1))
            nb = np.linalg.norm(w)
            if nb <= BREAKDOWN_TOL:
                j_used = j + 1
                break
            betas[j] = 0.0
            V[j + 1] = w / nb
        else:
            betas[j] = beta
            V[j + 1] = w / beta
    T = (
        np.diag(alphas[:j_used])
        + np.diag(betas[: j_used - 1], 1)
        + np.diag(betas[: j_used - 1], -1)
    )
    vals, Y = np.linalg.eigh(T)
    residuals = np.abs(beta_final * Y[-1, :])
    return vals, residuals


def alignment(u: np.ndarray, v: np.ndarray) -> float:
    """|<u, v>| / (||u|| ||v||), a sign-invariant overlap in [0, 1]."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("alignment of a zero vector is undefined")
    return float(min(1.0, abs(np.dot(u, v)) / (nu * nv)))
