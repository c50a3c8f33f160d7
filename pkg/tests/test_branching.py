import numpy as np
import pytest
from scipy import stats as sps

from nbspectra.model import derive_spectral_data, preset
from nbspectra import branching as br


def tiny_tree(types, parents, depths, r=2, sim_depth=None):
    types = np.asarray(types)
    parents = np.asarray(parents)
    depths = np.asarray(depths)
    return br.GwTree(
        types=types, parents=parents, depths=depths, r=r,
        sim_depth=int(depths.max()) if sim_depth is None else sim_depth,
    )


class TestSimulate:
    def test_depth_zero_single_root(self, data_71):
        t = br.simulate_gw(data_71, root=2, depth=0, seed=0)
        assert t.n_nodes == 1 and t.types[0] == 2 and t.depths[0] == 0

    def test_deterministic_per_seed(self, data_71):
        a = br.simulate_gw(data_71, root=1, depth=4, seed=9)
        b = br.simulate_gw(data_71, root=1, depth=4, seed=9)
        assert np.array_equal(a.types, b.types)
        assert np.array_equal(a.parents, b.parents)

    def test_stationary_root_draws_from_pi(self, data_71):
        roots = [
            br.simulate_gw(data_71, root="stationary-pi", depth=0, seed=s).types[0]
            for s in range(400)
        ]
        frac = np.mean(np.array(roots) == 1)
        assert abs(frac - 0.5) <= 4 * np.sqrt(0.25 / 400)

    def test_node_cap(self, data_71):
        with pytest.raises(br.GwSizeCapError):
            br.simulate_gw(data_71, root=1, depth=12, seed=0, node_cap=50)

    def test_single_type_population_growth(self, data_er4):
        # mean third-generation size over many trees near alpha^3 = 64
        chains = br.population_chain(data_er4, np.ones(5000, dtype=np.int64), 3, 17)
        s3 = chains[:, 3, 0]
        se = s3.std(ddof=1) / np.sqrt(len(s3))
        assert abs(s3.mean() - 64.0) <= 4 * se

    def test_child_type_conditional_law(self, data_71):
        # empirical P(child type i | parent type j) near M_ij / alpha
        for j in (1, 2):
            counts = np.zeros(2)
            for s in range(300):
                t = br.simulate_gw(data_71, root=j, depth=1, seed=1000 + 2 * s + j)
                for c in t.nodes_at_depth(1):
                    counts[t.types[c] - 1] += 1
            total = counts.sum()
            p_hat = counts[0] / total
            p = data_71.M[0, j - 1] / data_71.alpha
            assert abs(p_hat - p) <= 4 * np.sqrt(p * (1 - p) / total)


class TestPopulations:
    def test_single_root_vector(self, data_71):
        t = br.simulate_gw(data_71, root=2, depth=0, seed=0)
        Z = br.population_vectors(t)
        assert Z[0].tolist() == [0, 1]

    def test_hand_built_tree(self):
        t = tiny_tree([1, 2, 1], [-1, 0, 0], [0, 1, 1])
        Z = br.population_vectors(t)
        assert Z[0].tolist() == [1, 0]
        assert Z[1].tolist() == [1, 1]

    def test_counts_sum_to_generation_sizes(self, data_71):
        t = br.simulate_gw(data_71, root=1, depth=4, seed=3)
        for d, z in enumerate(br.population_vectors(t)):
            assert z.sum() == len(t.nodes_at_depth(d))

    def test_generation_counts_match_mean_progeny(self, data_71):
        # aggregate E[Z_{t+1} | Z_t] = M Z_t for the explicit simulator
        sum_next = np.zeros(2)
        sum_pred = np.zeros(2)
        for s in range(800):
            t = br.simulate_gw(data_71, root=1 + s % 2, depth=3, seed=5000 + s)
            Z = br.population_vectors(t)
            for d in range(min(3, len(Z) - 1)):
                sum_next += Z[d + 1]
                sum_pred += data_71.M @ Z[d]
        assert np.allclose(sum_next, sum_pred, rtol=0.05)


class TestMartingale:
    def test_zero_at_time_zero(self, data_71):
        t = br.simulate_gw(data_71, root=1, depth=2, seed=0)
        assert br.martingale_X(t, data_71, 1, 0) == 0.0
        assert br.martingale_X(t, data_71, 2, 0) == 0.0

    def test_k1_centered_total_population(self, data_er4):
        chains = br.population_chain(data_er4, np.ones(5000, dtype=np.int64), 6, 23)
        for t in range(1, 7):
            x = chains[:, t, 0] / 4.0**t - 1.0
            se = x.std(ddof=1) / np.sqrt(len(x))
            assert abs(x.mean()) <= 4 * se

    def test_k2_variance_bounded_uniformly(self, data_71):
        # pilot-fitted frozen cap: plateau is 0.8 = sum (alpha/mu2^2)^s
        rng = np.random.default_rng(31)
        roots = 1 + rng.choice(2, size=5000, p=data_71.pi)
        chains = br.population_chain(data_71, roots, 6, rng)
        phi = data_71.phi[1]
        x0 = chains[:, 0, :] @ phi
        for t in range(1, 7):
            x = chains[:, t, :] @ phi / data_71.mu[1] ** t - x0
            se = x.std(ddof=1) / np.sqrt(len(x))
            assert abs(x.mean()) <= 4 * se
            assert x.var(ddof=1) <= 1.5

    def test_requires_detectable_index(self, data_53, data_71):
        t = br.simulate_gw(data_53, root=1, depth=2, seed=0)
        with pytest.raises(ValueError):
            br.martingale_X(t, data_53, 2, 1)
        t71 = br.simulate_gw(data_71, root=1, depth=2, seed=0)
        with pytest.raises(ValueError):
            br.normalized_X_subcritical(t71, data_71, 2, 1)

    def test_truncated_tree_rejected(self, data_71):
        t = br.simulate_gw(data_71, root=1, depth=2, seed=1)
        with pytest.raises(ValueError):
            br.martingale_X(t, data_71, 1, 5)


class TestSubcritical:
    def test_time_zero_is_projection(self, data_53):
        t = br.simulate_gw(data_53, root=1, depth=1, seed=0)
        assert br.normalized_X_subcritical(t, data_53, 2, 0) == pytest.approx(
            float(data_53.phi[1][0])
        )

    def test_variance_in_pilot_band(self, data_53):
        rng = np.random.default_rng(12)
        roots = 1 + rng.choice(2, size=5000, p=data_53.pi)
        chains = br.population_chain(data_53, roots, 8, 13)
        x = chains[:, 8, :] @ data_53.phi[1] / data_53.mu[0] ** 4
        assert 0.05 <= x.var(ddof=1) <= 50.0

    def test_mean_decays(self, data_53):
        # E <phi_2, Z_t> = mu_2^t phi_2(root); normalized it shrinks like
        # (mu_2 / sqrt(mu_1))^t
        rng = np.random.default_rng(14)
        chains = br.population_chain(data_53, np.ones(5000, dtype=np.int64), 8, rng)
        x = chains[:, 8, :] @ data_53.phi[1] / data_53.mu[0] ** 4
        target = data_53.mu[1] ** 8 / data_53.mu[0] ** 4 * data_53.phi[1][0]
        se = x.std(ddof=1) / np.sqrt(len(x))
        assert abs(x.mean() - target) <= 4 * se


class TestTurningFunctional:
    def test_childless_root(self, data_71):
        t = tiny_tree([1], [-1], [0], sim_depth=3)
        assert br.q_enumeration(t, data_71, 2, 1) == 0.0
        assert br.q_recursive(t, data_71, 2, 1) == 0.0

    def test_two_children_opposite_types_cancel(self, data_71):
        t = tiny_tree([1, 1, 2], [-1, 0, 0], [0, 1, 1])
        assert br.q_enumeration(t, data_71, 2, 1) == pytest.approx(0.0)

    def test_two_children_same_type(self, data_71):
        t = tiny_tree([1, 1, 1], [-1, 0, 0], [0, 1, 1])
        assert br.q_enumeration(t, data_71, 2, 1) == pytest.approx(2.0)
        assert br.q_recursive(t, data_71, 2, 1) == pytest.approx(2.0)

    def test_recursion_matches_enumeration(self, data_71):
        checked = 0
        for seed in range(150):
            for ell in (1, 2, 3):
                t = br.simulate_gw(data_71, root=1 + seed % 2, depth=2 * ell - 1, seed=seed)
                if t.n_nodes > 200:
                    continue
                qe = br.q_enumeration(t, data_71, 2, ell)
                qr = br.q_recursive(t, data_71, 2, ell)
                assert qr == pytest.approx(qe, rel=1e-10, abs=1e-10)
                checked += 1
        assert checked > 100

    def test_enumeration_cap(self, data_71):
        big = br.simulate_gw(data_71, root=1, depth=6, seed=0)
        assert big.n_nodes > 200
        with pytest.raises(ValueError):
            br.q_enumeration(big, data_71, 2, 1)

    def test_collapsed_sampler_agrees_with_explicit_trees(self, data_71):
        # cross-validation of the two Monte-Carlo engines at ell = 2
        n = 4000
        explicit = []
        for s in range(n):
            t = br.simulate_gw(data_71, root=1, depth=3, seed=40000 + s)
            explicit.append(br.q_recursive(t, data_71, 2, 2))
        explicit = np.array(explicit)
        collapsed = br.q_samples(data_71, 2, 2, 1, n, 77)
        se = np.sqrt(explicit.var(ddof=1) / n + collapsed.var(ddof=1) / n)
        assert abs(explicit.mean() - collapsed.mean()) <= 4 * se
        # matching second moments too
        se2 = np.sqrt(
            (explicit**2).var(ddof=1) / n + (collapsed**2).var(ddof=1) / n
        )
        assert abs((explicit**2).mean() - (collapsed**2).mean()) <= 4 * se2


class TestDecorrelation:
    def test_zero_mean_cross_product(self):
        data = derive_spectral_data(preset("sbm-sym(3,6,1)"))
        mean, se = br.q_decorrelation(data, 2, 3, 3, 4000, 5)
        assert abs(mean) <= 4 * se

    def test_equal_indices_rejected(self, data_71):
        with pytest.raises(ValueError):
            br.q_decorrelation(data_71, 2, 2, 2, 100, 0)

    def test_spin_product_zero_on_fixed_shapes(self):
        # exact symbolic sum over type assignments, shapes up to 6 nodes
        for params in (preset("sbm-2x-7-1"), preset("sbm-sym(3,6,1)")):
            data = derive_spectral_data(params)
            shapes = [
                [None, 0, 0],              # cherry
                [None, 0, 0, 1, 1],        # two levels
                [None, 0, 1, 2, 3],        # path
                [None, 0, 0, 0, 1, 2],     # mixed
            ]
            ks = [(1, 2)] if data.r == 2 else [(1, 2), (2, 3), (1, 3)]
            for shape in shapes:
                n = len(shape)
                for (k, j) in ks:
                    for u in range(n):
                        for v in range(n):
                            val = br.spin_product_expectation(data, shape, u, v, k, j)
                            assert abs(val) < 1e-12


class TestLimitStatistic:
    def test_childless_root_gives_zero(self, data_71):
        t = tiny_tree([1], [-1], [0], sim_depth=9)
        assert br.limit_statistic_from_tree(t, data_71, 2, 5) == 0.0

    def test_requires_detectable_index(self, data_53):
        with pytest.raises(ValueError):
            br.limit_statistic_samples(data_53, 2, 2, 1, 10, 0)

    def test_single_sample_deterministic(self, data_71):
        a = br.sample_limit_statistic(data_71, 2, 2, 1, seed=4)
        b = br.sample_limit_statistic(data_71, 2, 2, 1, seed=4)
        assert a == b

    def test_identity_against_pruned_subtree_sum(self, data_71):
        # (D-1) Q - L_root equals the sum over root children of the
        # functional on the tree with that child's subtree removed
        def prune(tree, child):
            drop = set()
            stack = [int(child)]
            while stack:
                v = stack.pop()
                drop.add(v)
                stack.extend(int(c) for c in tree.children(v))
            keep = [v for v in range(tree.n_nodes) if v not in drop]
            relabel = {v: i for i, v in enumerate(keep)}
            return br.GwTree(
                types=tree.types[keep],
                parents=np.array(
                    [-1 if tree.parents[v] < 0 else relabel[int(tree.parents[v])] for v in keep]
                ),
                depths=tree.depths[keep],
                r=tree.r,
                sim_depth=tree.sim_depth,
            )

        ell = 2
        for seed in range(30):
            t = br.simulate_gw(data_71, root=1, depth=2 * ell - 1, seed=600 + seed)
            if t.n_nodes > 150 or len(t.nodes_at_depth(1)) == 0:
                continue
            total = sum(
                br.q_recursive(prune(t, c), data_71, 2, ell)
                for c in t.nodes_at_depth(1)
            )
            direct = br.limit_statistic_from_tree(t, data_71, 2, ell)
            assert direct == pytest.approx(total / data_71.mu[1] ** (2 * ell), rel=1e-10, abs=1e-12)

    def test_mean_law_at_moderate_depth(self, data_71):
        # smaller sibling of the acceptance check, at ell = 3
        mu2, alpha = data_71.mu[1], data_71.alpha
        rho = mu2**2 / alpha
        for x in (1, 2):
            vals = br.limit_statistic_samples(data_71, 2, 3, x, 2000, 90 + x)
            target = alpha * mu2 * data_71.phi[1][x - 1] / (rho - 1)
            se = vals.std(ddof=1) / np.sqrt(len(vals))
            assert abs(vals.mean() - target) <= 4 * se


class TestPopulationLaw:
    def test_first_generation_is_poisson_alpha(self, data_71):
        # chi-square goodness of fit of S_1 against Poisson(4)
        rng = np.random.default_rng(3)
        roots = 1 + rng.choice(2, size=20000, p=data_71.pi)
        chains = br.population_chain(data_71, roots, 1, rng)
        s1 = chains[:, 1, :].sum(axis=1)
        kmax = 14
        observed = np.bincount(np.minimum(s1, kmax), minlength=kmax + 1)
        probs = np.array([sps.poisson.pmf(k, 4.0) for k in range(kmax)])
        probs = np.append(probs, 1 - probs.sum())
        chi2, p = sps.chisquare(observed, probs * len(s1))
        assert p > 0.001

    def test_explicit_simulator_matches_poisson_too(self, data_71):
        sizes = [
            len(br.simulate_gw(data_71, root=1 + s % 2, depth=1, seed=s).nodes_at_depth(1))
            for s in range(2000)
        ]
        sizes = np.array(sizes)
        assert abs(sizes.mean() - 4.0) <= 4 * np.sqrt(4.0 / len(sizes))
        assert abs(sizes.var(ddof=1) - 4.0) <= 1.0
