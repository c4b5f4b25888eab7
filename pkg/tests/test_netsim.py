import numpy as np
import pytest

from sisgame.dbmf import DegreeDistribution
from sisgame.netsim import (
    RNG_ALGORITHM,
    GraphGenerationError,
    RateMismatch,
    SimConfig,
    _check_rates,
    compare_to_dbmf,
    config_model,
    derive_seed,
    gillespie_sis,
    sample_degree_sequence,
    simulate_quasi_stationary,
    simulate_replicas,
)

TWO_CLASS = DegreeDistribution([1, 3], [0.5, 0.5])


class TestDegreeSequence:
    def test_regular(self):
        s = sample_degree_sequence(DegreeDistribution.regular(4), 100, 0)
        assert np.all(s.degrees == 4)
        assert s.adjusted_node is None

    def test_frequencies_golden(self):
        s = sample_degree_sequence(TWO_CLASS, 10000, 42)
        values, counts = np.unique(s.degrees, return_counts=True)
        np.testing.assert_array_equal(values, [1, 3])
        np.testing.assert_array_equal(counts, [5015, 4985])
        assert np.all(np.abs(counts / 10000 - 0.5) < 0.02)

    def test_parity_fix_moves_one_node_to_next_degree(self):
        dd = DegreeDistribution([1, 2, 4], [0.3, 0.4, 0.3])
        s = sample_degree_sequence(dd, 11, 0)
        assert s.degrees.sum() % 2 == 0
        assert (s.adjusted_node, s.adjusted_from) == (3, 1)
        assert s.degrees[3] == 2
        raw = np.random.Generator(np.random.PCG64(0)).choice(dd.degrees, size=11, p=dd.probs)
        assert np.count_nonzero(raw != s.degrees) == 1

    def test_parity_fix_all_odd_support(self):
        for seed in range(20):
            s = sample_degree_sequence(TWO_CLASS, 11, seed)
            assert s.degrees.sum() % 2 == 0
            if s.adjusted_node is not None:
                assert s.degrees[s.adjusted_node] == s.adjusted_from + 1

    def test_small_n(self):
        with pytest.raises(ValueError):
            sample_degree_sequence(TWO_CLASS, 9, 0)

    def test_derive_seed_is_stable(self):
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert derive_seed(1, 2) != derive_seed(2, 1)


class TestConfigModel:
    def test_single_edge(self):
        g = config_model([1, 1], 0)
        assert g.adjacency == [[1], [0]]

    def test_triangle(self):
        g = config_model([2, 2, 2], 0)
        assert [sorted(a) for a in g.adjacency] == [[1, 2], [0, 2], [0, 1]]
        assert g.is_simple()

    def test_four_regular(self):
        g = config_model(np.full(1000, 4), 7)
        assert g.is_simple()
        np.testing.assert_array_equal(np.bincount(g.degree_of), [0, 0, 0, 0, 1000])
        assert g.n_edges == 2000
        assert g.erased == 0

    def test_odd_sum_rejected(self):
        with pytest.raises(ValueError):
            config_model([1, 2], 0)

    def test_swap_repair_after_retries(self):
        g = config_model(np.full(40, 6), 3, max_retries=0)
        assert g.is_simple()
        assert g.erased == 0
        np.testing.assert_array_equal(g.degree_of, np.full(40, 6))

    def test_erasure_budget(self):
        # a star-like sequence cannot be realised simply; too much must be erased
        with pytest.raises(GraphGenerationError):
            config_model([8, 8, 1, 1, 1, 1, 1, 1, 1, 1], 0, max_retries=2)


class TestSimConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(t_max=10.0, burn_in=10.0),
            dict(t_max=10.0, burn_in=1.0, nu=0.0),
            dict(t_max=10.0, burn_in=1.0, initial_infected_fraction=0.0),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig({4: 1.0}, **kwargs)


@pytest.fixture(scope="module")
def small_graph():
    return config_model(np.full(300, 3), 1)


class TestGillespie:
    def test_rate_bookkeeping(self, small_graph):
        cfg = SimConfig({3: 1.0}, 50.0, 10.0, seed=3)
        res = gillespie_sis(small_graph, cfg, check_every=1000)
        assert res.rate_checks == res.event_count // 1000 > 5
        assert 0.0 < res.mean_infection < 1.0

    def test_rate_check_detects_drift(self, small_graph):
        infected = bytearray(small_graph.n)
        infected[0] = 1
        with pytest.raises(RateMismatch):
            _check_rates(small_graph, infected, [0] * small_graph.n, [1.0], 1.0, cached=0.0)

    def test_deterministic(self, small_graph):
        cfg = SimConfig({3: 0.8}, 30.0, 5.0, seed=11)
        assert gillespie_sis(small_graph, cfg) == gillespie_sis(small_graph, cfg)

    def test_different_seeds_differ(self, small_graph):
        a = gillespie_sis(small_graph, SimConfig({3: 0.8}, 30.0, 5.0, seed=1))
        b = gillespie_sis(small_graph, SimConfig({3: 0.8}, 30.0, 5.0, seed=2))
        assert a.event_count != b.event_count

    def test_no_initial_infection(self, small_graph):
        res = gillespie_sis(small_graph, SimConfig({3: 1.0}, 10.0, 1.0, initial_infected_fraction=1e-4))
        assert res.initial_infected == 0
        assert res.extinction_time == 0.0
        assert res.per_degree_mean_infection == {3: 0.0}
        assert res.event_count == 0

    def test_fast_curing_dies_out(self, small_graph):
        res = gillespie_sis(small_graph, SimConfig({3: 1e6}, 10.0, 1.0, seed=5))
        assert res.extinction_time is not None and res.extinction_time < 1e-3
        assert res.mean_infection == 0.0

    def test_missing_rate(self, small_graph):
        with pytest.raises(ValueError):
            gillespie_sis(small_graph, SimConfig({4: 1.0}, 10.0, 1.0))

    def test_labels_override_degree(self, small_graph):
        labels = np.full(small_graph.n, 7)
        res = gillespie_sis(small_graph, SimConfig({7: 1.0}, 10.0, 1.0, seed=2), labels=labels)
        assert set(res.per_degree_mean_infection) == {7}

    def test_quasi_stationary_retries(self):
        g = config_model([2] * 10, 0)
        cfg = SimConfig({2: 3.0}, 10.0, 5.0, initial_infected_fraction=0.1, seed=0)
        res = simulate_quasi_stationary(g, cfg)
        assert res.attempts == 3
        assert res.extinction_time is not None


class TestCompare:
    def test_below_threshold(self, small_graph):
        dd = DegreeDistribution.regular(3)
        res = gillespie_sis(small_graph, SimConfig({3: 5.0}, 30.0, 10.0, seed=4))
        cmp = compare_to_dbmf(res, dd, 5.0)
        assert cmp.rows[0].dbmf == 0.0
        assert cmp.worst_error < 1e-3

    def test_regular_above_threshold(self):
        reps = simulate_replicas(DegreeDistribution.regular(4), 1.0, 500, 60.0, 20.0, 2, seed=9)
        for rep in reps:
            cmp = compare_to_dbmf(rep.result, DegreeDistribution.regular(4), 1.0)
            assert cmp.worst_error < 0.1

    def test_two_class_ordering(self):
        reps = simulate_replicas(TWO_CLASS, 0.5, 1000, 40.0, 10.0, 1, seed=3)
        cmp = compare_to_dbmf(reps[0].result, TWO_CLASS, 0.5)
        sim = {r.degree: r.simulated for r in cmp.rows}
        model = {r.degree: r.dbmf for r in cmp.rows}
        assert sim[3] > sim[1] and model[3] > model[1]

    def test_unknown_degrees(self, small_graph):
        res = gillespie_sis(small_graph, SimConfig({3: 1.0}, 5.0, 1.0))
        with pytest.raises(ValueError):
            compare_to_dbmf(res, DegreeDistribution.regular(4), 1.0)


class TestReplicas:
    def test_replicas_are_order_independent(self):
        one = simulate_replicas(TWO_CLASS, 0.5, 200, 10.0, 2.0, 3, seed=5)
        pooled = simulate_replicas(TWO_CLASS, 0.5, 200, 10.0, 2.0, 3, seed=5, workers=2)
        assert [r.result for r in one] == [r.result for r in pooled]
        assert len({r.sim_seed for r in one}) == 3

    def test_rng_name(self):
        assert "PCG64" in RNG_ALGORITHM
