"""Multitype Poisson branching trees and their limit-law functionals.

A type-j particle spawns an independent Poisson(M_ij) number of type-i
children for every i.  Explicit trees (GwTree) support the per-tree
functionals: projected-population martingales, and the once-turning
path functional computed two ways (exhaustive enumeration as the
oracle, and the generation recursion used at scale).

The Monte-Carlo suites use a collapsed engine instead of storing deep
trees.  It relies on two exact facts: conditional on generation t, the
next generation counts are independent Poissons with means M Z_t, so
the count process alone is a Markov chain; and the functionals below
depth ell only enter through per-node subtree populations, which can be
sampled by running that chain from each node's type.  The engine builds
the explicit forest only down to depth ell and samples the deep factors
with count chains, which is distributionally identical to simulating
the full tree to depth 2*ell - 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nbspectra.model import SpectralData

__all__ = [
    "GwTree",
    "GwSizeCapError",
    "simulate_gw",
    "population_vectors",
    "martingale_X",
    "normalized_X_subcritical",
    "q_enumeration",
    "q_recursive",
    "root_term",
    "limit_statistic_from_tree",
    "sample_limit_statistic",
    "q_samples",
    "limit_statistic_samples",
    "limit_statistic_mixture_samples",
    "q_second_moment",
    "population_chain",
    "q_decorrelation",
    "spin_product_expectation",
]

DEFAULT_NODE_CAP = 10**7
ENUM_NODE_CAP = 200


class GwSizeCapError(RuntimeError):
    """A simulated tree exceeded the node cap."""


@dataclass(frozen=True)
class GwTree:
    """Rooted typed tree stored as flat node arrays (root is node 0).

    types holds labels in [1, r]; parents holds the parent node id with
    -1 at the root; depths[0] = 0 and depths are consistent with parents.
    sim_depth records how deep the simulation ran: generations beyond the
    deepest populated one are known to be empty only up to sim_depth.
    """

    types: np.ndarray
    parents: np.ndarray
    depths: np.ndarray
    r: int
    sim_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.types)

    @property
    def depth(self) -> int:
        return int(self.depths.max()) if self.n_nodes else 0

    def children(self, v: int) -> np.ndarray:
        return np.nonzero(self.parents == v)[0]

    def nodes_at_depth(self, t: int) -> np.ndarray:
        return np.nonzero(self.depths == t)[0]


def simulate_gw(
    data: SpectralData,
    root: int | str,
    depth: int,
    seed: int,
    node_cap: int = DEFAULT_NODE_CAP,
) -> GwTree:
    """Simulate the tree breadth-first down to the given depth.

    root is a fixed type in [1, r] or "stationary-pi" to draw it from pi.
    Raises GwSizeCapError when the node count passes node_cap.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    rng = np.random.default_rng(seed)
    r = data.r
    if root == "stationary-pi":
        root_type = int(rng.choice(np.arange(1, r + 1), p=data.pi))
    else:
        root_type = int(root)
        if not 1 <= root_type <= r:
            raise ValueError(f"root type must lie in [1, {r}]")

    types = [np.array([root_type], dtype=np.int64)]
    parents = [np.array([-1], dtype=np.int64)]
    total = 1
    gen_ids = np.array([0], dtype=np.int64)
    for _ in range(depth):
        if len(gen_ids) == 0:
            break
        gen_types = types[-1]
        child_types = []
        child_parents = []
        for i in range(1, r + 1):
            counts = rng.poisson(data.M[i - 1, gen_types - 1])
            child_types.append(np.full(int(counts.sum()), i, dtype=np.int64))
            child_parents.append(np.repeat(gen_ids, counts))
        ct = np.concatenate(child_types)
        cp = np.concatenate(child_parents)
        order = np.argsort(cp, kind="stable")  # children contiguous per parent
        ct, cp = ct[order], cp[order]
        total += len(ct)
        if total > node_cap:
            raise GwSizeCapError(f"tree exceeded {node_cap} nodes")
        gen_ids = np.arange(total - len(ct), total, dtype=np.int64)
        types.append(ct)
        parents.append(cp)

    all_types = np.concatenate(types)
    all_parents = np.concatenate(parents)
    depths = np.concatenate(
        [np.full(len(g), d, dtype=np.int64) for d, g in enumerate(types)]
    )
    return GwTree(
        types=all_types, parents=all_parents, depths=depths, r=r, sim_depth=depth
    )


def population_vectors(tree: GwTree) -> list[np.ndarray]:
    """Per-generation type counts Z_t, t = 0..depth."""
    out = []
    for t in range(tree.depth + 1):
        nodes = tree.nodes_at_depth(t)
        out.append(np.bincount(tree.types[nodes] - 1, minlength=tree.r))
    return out


def martingale_X(tree: GwTree, data: SpectralData, k: int, t: int) -> float:
    """<phi_k, Z_t> / mu_k^t - <phi_k, Z_0>; defined for k above the threshold."""
    if not 1 <= k <= data.r0:
        raise ValueError(
            f"k = {k} is not above the detectability threshold (r0 = {data.r0}); "
            "use normalized_X_subcritical"
        )
    if t > tree.sim_depth:
        raise ValueError(f"tree was only simulated to depth {tree.sim_depth}")
    Z = population_vectors(tree)
    phi = data.phi[k - 1]
    zt = Z[t] if t <= tree.depth else np.zeros(data.r)
    return float(phi @ zt / data.mu[k - 1] ** t - phi @ Z[0])


def normalized_X_subcritical(tree: GwTree, data: SpectralData, k: int, t: int) -> float:
    """<phi_k, Z_t> scaled by mu_1^(t/2), with an extra 1/sqrt(t) exactly at
    the threshold mu_k^2 = mu_1; defined for k below the threshold."""
    if k <= data.r0:
        raise ValueError(f"k = {k} is above the threshold; use martingale_X")
    if not k <= data.r:
        raise ValueError(f"k must be in [1, {data.r}]")
    if t > tree.sim_depth:
        raise ValueError(f"tree was only simulated to depth {tree.sim_depth}")
    Z = population_vectors(tree)
    phi = data.phi[k - 1]
    zt = Z[t] if t <= tree.depth else np.zeros(data.r)
    val = float(phi @ zt)
    if t == 0:
        return val
    scale = data.mu[0] ** (t / 2)
    if abs(data.mu[k - 1] ** 2 - data.mu[0]) <= 1e-12:
        scale *= np.sqrt(t)
    return val / scale


def q_enumeration(tree: GwTree, data: SpectralData, k: int, ell: int) -> float:
    """Oracle: exhaustive walk enumeration of the once-turning functional.

    Sums phi_k at the type of the endpoint over all walks of length
    2*ell + 1 from the root whose two halves are non-backtracking and
    which step back across the same edge exactly at step ell + 1.
    Capped at small trees.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if tree.n_nodes > ENUM_NODE_CAP:
        raise ValueError(f"enumeration oracle capped at {ENUM_NODE_CAP} nodes")
    phi = data.phi[k - 1]
    nbrs: list[list[int]] = [[] for _ in range(tree.n_nodes)]
    for v in range(1, tree.n_nodes):
        p = int(tree.parents[v])
        nbrs[p].append(v)
        nbrs[v].append(p)

    total = 0.0

    def second_half(prev: int, cur: int, steps_left: int) -> None:
        nonlocal total
        if steps_left == 0:
            total += phi[tree.types[cur] - 1]
            return
        for w in nbrs[cur]:
            if w != prev:
                second_half(cur, w, steps_left - 1)

    def first_half(prev: int, cur: int, steps_left: int) -> None:
        if steps_left == 0:
            # turn: step back to prev, then ell more non-backtracking steps
            second_half(cur, prev, ell)
            return
        for w in nbrs[cur]:
            if w != prev:
                first_half(cur, w, steps_left - 1)

    for w in nbrs[0]:
        first_half(0, w, ell - 1)
    return total


def _subtree_tables(tree: GwTree, ell: int) -> np.ndarray:
    """tables[v, s] = type counts of the subtree of v at relative depth s,
    for s = 0..ell-1 (all the generation recursion needs)."""
    smax = max(ell - 1, 0)
    tables = np.zeros((tree.n_nodes, smax + 1, tree.r), dtype=np.int64)
    tables[np.arange(tree.n_nodes), 0, tree.types - 1] = 1
    for d in range(tree.depth, 0, -1):
        nodes = tree.nodes_at_depth(d)
        if len(nodes) == 0:
            continue
        for s in range(smax, 0, -1):
            np.add.at(tables, (tree.parents[nodes], s), tables[nodes, s - 1])
    return tables


def q_recursive(tree: GwTree, data: SpectralData, k: int, ell: int) -> float:
    """Generation recursion for the once-turning functional.

    For each node u at depth t < ell, sums over ordered pairs (w, v) of
    distinct children the product of the subtree population of w at
    relative depth ell-t-1 and the phi_k-projected population of v at
    relative depth t.  Using per-node subtree tables this is
    O(nodes * ell * r).  The tree must have been simulated to depth at
    least 2*ell - 1 for the result to be unbiased.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    return float(_q_and_root_term(tree, data, k, ell)[0])


def root_term(tree: GwTree, data: SpectralData, k: int, ell: int) -> float:
    """The depth-0 layer of the recursion (the root's own child pairs)."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    return float(_q_and_root_term(tree, data, k, ell)[1])


def _q_and_root_term(
    tree: GwTree, data: SpectralData, k: int, ell: int
) -> tuple[float, float]:
    phi = data.phi[k - 1]
    tables = _subtree_tables(tree, ell)
    total = 0.0
    root_layer = 0.0
    for t in range(ell):
        children = tree.nodes_at_depth(t + 1)
        if len(children) == 0:
            break
        s_child = tables[children, ell - t - 1].sum(axis=1).astype(np.float64)
        g_child = tables[children, t] @ phi
        parents = tree.parents[children]
        n_parents = int(tree.nodes_at_depth(t).max()) + 1
        A = np.bincount(parents, weights=s_child, minlength=n_parents)
        G = np.bincount(parents, weights=g_child, minlength=n_parents)
        C = np.bincount(parents, weights=s_child * g_child, minlength=n_parents)
        layer = float((A * G - C).sum())
        total += layer
        if t == 0:
            root_layer = layer
    return total, root_layer


def limit_statistic_from_tree(
    tree: GwTree, data: SpectralData, k: int, ell: int
) -> float:
    """One value of the vertex-statistic limit model from an explicit tree.

    With D the root's child count, equals (D - 1) * Q - L_root, i.e. the
    sum over root children x of the functional recomputed on the tree
    with the subtree of x removed, all divided by mu_k^(2*ell).
    """
    if not 1 <= k <= data.r0:
        raise ValueError(f"k = {k} must be above the detectability threshold")
    q, l_root = _q_and_root_term(tree, data, k, ell)
    d = len(tree.nodes_at_depth(1))
    return ((d - 1) * q - l_root) / data.mu[k - 1] ** (2 * ell)


def sample_limit_statistic(
    data: SpectralData, k: int, ell: int, root_type: int, seed: int
) -> float:
    """One Monte-Carlo sample of the limit statistic for a fixed root type."""
    return float(limit_statistic_samples(data, k, ell, root_type, 1, seed)[0])


# ---------------------------------------------------------------------------
# Collapsed batch engine
# ---------------------------------------------------------------------------


def population_chain(
    data: SpectralData,
    root_types: np.ndarray,
    depth: int,
    seed: int | np.random.Generator,
) -> np.ndarray:
    """Generation count processes for a batch of trees, shape (n, depth+1, r).

    Uses the Markov-chain form of the counts: given Z_t the next counts
    are independent Poisson with means M Z_t, which is exactly the law of
    the per-generation populations of the explicit tree.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    root_types = np.asarray(root_types, dtype=np.int64)
    n = len(root_types)
    out = np.zeros((n, depth + 1, data.r), dtype=np.int64)
    out[np.arange(n), 0, root_types - 1] = 1
    Z = out[:, 0, :].astype(np.float64)
    for t in range(1, depth + 1):
        Z = rng.poisson(Z @ data.M.T).astype(np.float64)
        out[:, t, :] = Z
    return out


def _chain_snapshots(
    data: SpectralData,
    root_types: np.ndarray,
    wanted: tuple[int, ...],
    rng: np.random.Generator,
) -> dict[int, np.ndarray]:
    """Count-chain snapshots at the requested generations only (memory bound)."""
    snaps: dict[int, np.ndarray] = {}
    Z = np.zeros((len(root_types), data.r))
    Z[np.arange(len(root_types)), root_types - 1] = 1.0
    if 0 in wanted:
        snaps[0] = Z.copy()
    for t in range(1, max(wanted) + 1 if wanted else 1):
        Z = rng.poisson(Z @ data.M.T).astype(np.float64)
        if t in wanted:
            snaps[t] = Z if t == max(wanted) else Z.copy()
    return snaps


def _forest_to_depth(
    data: SpectralData,
    root_types: np.ndarray,
    depth: int,
    rng: np.random.Generator,
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Explicit forest down to `depth`: per-generation (types, parents, tree_ids).

    Offspring are drawn as a total count Poisson(alpha) per node followed
    by i.i.d. child types with law M[:, j]/alpha given parent type j; by
    Poisson thinning this is identical to independent Poisson(M_ij)
    counts per type, and it needs one Poisson and one uniform per node.
    """
    r = data.r
    type_probs = data.M / data.alpha  # column j: child-type law for parent type j
    cum = np.cumsum(type_probs, axis=0)
    gen_types = [np.asarray(root_types, dtype=np.int64)]
    gen_parents = [np.full(len(root_types), -1, dtype=np.int64)]
    gen_tree = [np.arange(len(root_types), dtype=np.int64)]
    for _ in range(depth):
        ptypes = gen_types[-1]
        if len(ptypes) == 0:
            gen_types.append(np.empty(0, dtype=np.int64))
            gen_parents.append(np.empty(0, dtype=np.int64))
            gen_tree.append(np.empty(0, dtype=np.int64))
            continue
        counts = rng.poisson(data.alpha, size=len(ptypes))
        parent_ids = np.repeat(np.arange(len(ptypes), dtype=np.int64), counts)
        u = rng.random(int(counts.sum()))
        rows = cum[:, ptypes[parent_ids] - 1]  # (r, n_children)
        ctypes = 1 + (u[None, :] >= rows).sum(axis=0).astype(np.int64)
        ctypes = np.minimum(ctypes, r)
        gen_types.append(ctypes)
        gen_parents.append(parent_ids)
        gen_tree.append(gen_tree[-1][parent_ids] if len(parent_ids) else np.empty(0, np.int64))
    return gen_types, gen_parents, gen_tree


def _batched_q(
    data: SpectralData,
    ks: list[int],
    ell: int,
    root_types: np.ndarray,
    seed: int | np.random.Generator,
    node_cap: int = DEFAULT_NODE_CAP,
) -> dict:
    """Q, root layer and root degree for a batch of trees, per requested k.

    Returns a dict with "Q" and "L0" mapping k to arrays over samples,
    "D" the root child counts, and "capped" a boolean mask of discarded
    oversized samples (their entries are NaN).
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    root_types = np.asarray(root_types, dtype=np.int64)
    n = len(root_types)
    gen_types, gen_parents, gen_tree = _forest_to_depth(data, root_types, ell, rng)

    node_totals = np.zeros(n, dtype=np.int64)
    for tid in gen_tree:
        if len(tid):
            node_totals += np.bincount(tid, minlength=n)
    capped = node_totals > node_cap

    phis = {k: data.phi[k - 1] for k in ks}
    Q = {k: np.zeros(n) for k in ks}
    L0 = {k: np.zeros(n) for k in ks}
    for t in range(ell):
        ctypes = gen_types[t + 1]
        if len(ctypes) == 0:
            break
        d = t + 1
        snaps = _chain_snapshots(data, ctypes, (ell - d, d - 1), rng)
        s_child = snaps[ell - d].sum(axis=1)
        parents = gen_parents[t + 1]
        n_parents = len(gen_types[t])
        A = np.bincount(parents, weights=s_child, minlength=n_parents)
        tree_of_parent = gen_tree[t]
        for k in ks:
            g_child = snaps[d - 1] @ phis[k]
            G = np.bincount(parents, weights=g_child, minlength=n_parents)
            C = np.bincount(parents, weights=s_child * g_child, minlength=n_parents)
            layer = A * G - C
            per_tree = np.bincount(tree_of_parent, weights=layer, minlength=n)
            Q[k] += per_tree
            if t == 0:
                L0[k] += per_tree
    D = np.bincount(gen_tree[1], minlength=n) if len(gen_tree[1]) else np.zeros(n, np.int64)
    for k in ks:
        Q[k][capped] = np.nan
        L0[k][capped] = np.nan
    return {"Q": Q, "L0": L0, "D": D, "capped": capped}


def _batched_q_chunked(
    data: SpectralData,
    ks: list[int],
    ell: int,
    root_types: np.ndarray,
    seed: int,
    chunk: int = 2000,
) -> dict:
    """Run _batched_q in chunks with spawned RNG streams; bounds peak memory."""
    root_types = np.asarray(root_types, dtype=np.int64)
    n = len(root_types)
    streams = np.random.SeedSequence(seed).spawn(max(1, (n + chunk - 1) // chunk))
    parts = []
    for i, start in enumerate(range(0, n, chunk)):
        rng = np.random.default_rng(streams[i])
        parts.append(_batched_q(data, ks, ell, root_types[start : start + chunk], rng))
    return {
        "Q": {k: np.concatenate([p["Q"][k] for p in parts]) for k in ks},
        "L0": {k: np.concatenate([p["L0"][k] for p in parts]) for k in ks},
        "D": np.concatenate([p["D"] for p in parts]),
        "capped": np.concatenate([p["capped"] for p in parts]),
    }


def q_samples(
    data: SpectralData, k: int, ell: int, root_type: int, n: int, seed: int
) -> np.ndarray:
    """n Monte-Carlo samples of Q_{k,ell} from a fixed root type.

    Oversized trees (beyond the node cap) are discarded, so the returned
    array may be shorter than n.
    """
    batch = _batched_q_chunked(data, [k], ell, np.full(n, root_type), seed)
    return batch["Q"][k][~batch["capped"]]


def limit_statistic_samples(
    data: SpectralData, k: int, ell: int, root_type: int, n: int, seed: int
) -> np.ndarray:
    """n samples of the limit statistic (D-1)Q - L0, scaled by mu_k^(2 ell)."""
    if not 1 <= k <= data.r0:
        raise ValueError(f"k = {k} must be above the detectability threshold")
    batch = _batched_q_chunked(data, [k], ell, np.full(n, root_type), seed)
    keep = ~batch["capped"]
    j = (batch["D"][keep] - 1) * batch["Q"][k][keep] - batch["L0"][k][keep]
    return j / data.mu[k - 1] ** (2 * ell)


def limit_statistic_mixture_samples(
    data: SpectralData,
    k: int,
    ell: int,
    n: int,
    seed: int,
    type_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Limit-statistic samples with the root type drawn from type_weights
    (default: the stationary distribution pi)."""
    if not 1 <= k <= data.r0:
        raise ValueError(f"k = {k} must be above the detectability threshold")
    w = data.pi if type_weights is None else np.asarray(type_weights, dtype=np.float64)
    w = w / w.sum()
    rng = np.random.default_rng(seed)
    roots = 1 + rng.choice(data.r, size=n, p=w)
    batch = _batched_q_chunked(data, [k], ell, roots, seed + 1)
    keep = ~batch["capped"]
    j = (batch["D"][keep] - 1) * batch["Q"][k][keep] - batch["L0"][k][keep]
    return j / data.mu[k - 1] ** (2 * ell)


def q_second_moment(
    data: SpectralData, k: int, ell: int, samples: int, seed: int
) -> tuple[float, float]:
    """MC estimate (value, standard error) of the second moment of
    Q / mu_k^(2 ell) with a stationary root; the square root of
    alpha times this estimate is the statistic rescaling used by the
    detection pipeline."""
    rng = np.random.default_rng(seed)
    roots = 1 + rng.choice(data.r, size=samples, p=data.pi)
    batch = _batched_q_chunked(data, [k], ell, roots, seed + 1)
    x = batch["Q"][k][~batch["capped"]] / data.mu[k - 1] ** (2 * ell)
    sq = x**2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(len(sq)))


def q_decorrelation(
    data: SpectralData, k: int, j: int, ell: int, samples: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of Q_k * Q_j with a stationary root.

    The product is scaled by alpha^(4 ell) to keep magnitudes O(1); the
    zero-mean claim is scale invariant.
    """
    if k == j:
        raise ValueError("k and j must differ")
    rng = np.random.default_rng(seed)
    roots = 1 + rng.choice(data.r, size=samples, p=data.pi)
    batch = _batched_q_chunked(data, [k, j], ell, roots, seed + 1)
    keep = ~batch["capped"]
    prod = batch["Q"][k][keep] * batch["Q"][j][keep] / data.alpha ** (4 * ell)
    return float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(len(prod)))


def spin_product_expectation(
    data: SpectralData,
    parent_of: list[int | None],
    u: int,
    v: int,
    k: int,
    j: int,
) -> float:
    """Exact expectation of phi_k(type u) * phi_j(type v) over all type
    assignments of a fixed tree shape, weighted by the conditional spin law
    (root from pi, child given parent with law M[:, parent]/alpha)."""
    r = data.r
    n = len(parent_of)
    trans = data.M / data.alpha
    total = 0.0
    for assign in np.ndindex(*([r] * n)):
        w = data.pi[assign[0]]
        for child in range(1, n):
            w *= trans[assign[child], assign[parent_of[child]]]
        total += w * data.phi[k - 1][assign[u]] * data.phi[j - 1][assign[v]]
    return float(total)
