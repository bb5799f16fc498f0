"""Belief propagation against the enumeration oracles."""

import numpy as np
import pytest

from emoinf.factorgraph import (
    Factor,
    FactorGraph,
    FactorKind,
    ImageVar,
    InfluenceVar,
    ParameterSet,
    UserVar,
)
from emoinf.inference import (
    BpConfig,
    bethe_log_partition,
    brute_force_map,
    brute_force_marginals,
    exact_log_partition,
    max_product,
    predict_probability,
    sum_product,
)
from emoinf.factorgraph import objective

from helpers import random_assignment, random_loopy_graph, random_tree_graph

EXACT = BpConfig(damping=0.0, tolerance=1e-12, max_iterations=300)


def single_image_graph(score):
    x = np.zeros(21)
    x[0] = 1.0
    alpha = np.zeros(21)
    alpha[0] = score
    g = FactorGraph([ImageVar("i")],
                    [Factor(FactorKind.VISUAL, (0,), "u", image_row=0)],
                    features=x[None, :])
    ps = ParameterSet.constant(["u"], visual=alpha)
    return g, ps


class TestUnaryCases:
    def test_positive_evidence_decodes_positive(self):
        g, ps = single_image_graph(0.8)
        assignment, converged, _ = max_product(g, ps)
        assert converged
        assert assignment[ImageVar("i")] == 1

    def test_logistic_marginal(self):
        for s in (0.3, 0.8, 2.0):
            g, ps = single_image_graph(s)
            table, _, _ = sum_product(g, ps)
            expected = np.exp(s) / (np.exp(s) + np.exp(-s))
            assert predict_probability(table, ImageVar("i")) == pytest.approx(
                expected, abs=1e-9)

    def test_isolated_variable_uniform(self):
        g = FactorGraph([UserVar("u", 0)], [])
        ps = ParameterSet.constant(["u"])
        table, converged, _ = sum_product(g, ps)
        np.testing.assert_allclose(table.var_probs[UserVar("u", 0)], [0.5, 0.5])
        assert converged

    def test_flat_potentials_tie_break_low(self):
        g = FactorGraph(
            [ImageVar("i"), UserVar("u", 0), InfluenceVar("u", "v", 0)],
            [Factor(FactorKind.IMAGE_OWNER, (0, 1), "u")])
        ps = ParameterSet.constant(["u"], owner_coupling=0.0)
        assignment, _, _ = max_product(g, ps)
        assert assignment[ImageVar("i")] == -1
        assert assignment[UserVar("u", 0)] == -1
        assert assignment[InfluenceVar("u", "v", 0)] == 0

    def test_clamped_variable_reported_clamped(self):
        g = FactorGraph([ImageVar("i")],
                        [],
                        clamps={ImageVar("i"): 1})
        ps = ParameterSet.constant(["u"])
        table, _, _ = sum_product(g, ps)
        assert predict_probability(table, ImageVar("i")) == 1.0
        assignment, _, _ = max_product(g, ps)
        assert assignment[ImageVar("i")] == 1

    def test_unknown_variable_rejected(self):
        g, ps = single_image_graph(0.5)
        table, _, _ = sum_product(g, ps)
        with pytest.raises(KeyError):
            predict_probability(table, ImageVar("nope"))


class TestBruteForce:
    def test_empty_graph(self):
        g = FactorGraph([], [])
        ps = ParameterSet.constant([])
        assert brute_force_map(g, ps) == {}

    def test_single_positive_unary(self):
        g, ps = single_image_graph(1.0)
        assert brute_force_map(g, ps)[ImageVar("i")] == 1

    def test_map_maximizes_over_all(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            graph, params = random_tree_graph(rng)
            best = brute_force_map(graph, params)
            best_obj = objective(graph, best, params)
            for _ in range(50):
                other = random_assignment(graph, rng)
                assert best_obj >= objective(graph, other, params) - 1e-12

    def test_too_large_rejected(self):
        variables = [UserVar("u", t) for t in range(25)]
        g = FactorGraph(variables, [])
        with pytest.raises(ValueError, match="too large"):
            brute_force_map(g, ParameterSet.constant(["u"]))


class TestTreeExactness:
    def test_map_and_marginals_match_oracle(self):
        rng = np.random.default_rng(100)
        for schedule in ("sequential", "synchronous"):
            config = BpConfig(damping=0.0, tolerance=1e-12, max_iterations=400,
                              schedule=schedule)
            for _ in range(25):
                graph, params = random_tree_graph(rng)
                assignment, converged, _ = max_product(graph, params, config)
                assert converged
                assert assignment == brute_force_map(graph, params)
                table, converged, _ = sum_product(graph, params, config)
                assert converged
                oracle = brute_force_marginals(graph, params)
                for var in graph.variables:
                    np.testing.assert_allclose(table.var_probs[var],
                                               oracle.var_probs[var], atol=1e-9)
                for fi in range(len(graph.factors)):
                    np.testing.assert_allclose(table.factor_probs[fi],
                                               oracle.factor_probs[fi], atol=1e-9)

    def test_bethe_exact_on_trees(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            graph, params = random_tree_graph(rng)
            table, _, _ = sum_product(graph, params, EXACT)
            assert bethe_log_partition(graph, params, table) == pytest.approx(
                exact_log_partition(graph, params), abs=1e-7)


class TestLoopyBehavior:
    def test_map_objective_beats_random(self):
        # statistical sanity, not a theorem: loopy decoding may miss the
        # optimum on isolated graphs, but it should dominate random guessing
        rng = np.random.default_rng(7)
        config = BpConfig(damping=0.3, tolerance=1e-8, max_iterations=300)
        wins = total = 0
        for _ in range(10):
            graph, params = random_loopy_graph(rng)
            assignment, _, _ = max_product(graph, params, config)
            obj = objective(graph, assignment, params)
            for _ in range(100):
                rand_obj = objective(graph, random_assignment(graph, rng), params)
                wins += int(obj >= rand_obj - 1e-9)
                total += 1
        assert wins / total >= 0.98

    def test_converged_fixed_point_stays_converged(self):
        rng = np.random.default_rng(21)
        config = BpConfig(damping=0.3, tolerance=1e-8, max_iterations=500)
        from emoinf.inference import _Engine
        for _ in range(5):
            graph, params = random_loopy_graph(rng)
            engine = _Engine(graph, params, use_max=False)
            converged, residual = engine.run(config)
            if not converged:
                continue
            extra = engine._sweep_sequential(config.damping)
            assert extra < 10 * config.tolerance

    def test_marginal_consistency(self):
        rng = np.random.default_rng(31)
        config = BpConfig(damping=0.3, tolerance=1e-9, max_iterations=500)
        for _ in range(8):
            graph, params = random_loopy_graph(rng)
            table, converged, residual = sum_product(graph, params, config)
            if not converged:
                continue
            tol = max(10 * residual, 1e-7)
            for fi, factor in enumerate(graph.factors):
                joint = table.factor_probs[fi]
                for slot, vi in enumerate(factor.vars):
                    axes = tuple(a for a in range(joint.ndim) if a != slot)
                    np.testing.assert_allclose(
                        joint.sum(axis=axes),
                        table.var_probs[graph.variables[vi]], atol=tol)


class TestClampingSemantics:
    def test_clamped_graph_matches_conditioned_enumeration(self):
        rng = np.random.default_rng(55)
        for _ in range(10):
            graph, params = random_tree_graph(rng, clamp_prob=0.5)
            if not graph.clamps:
                continue
            table, _, _ = sum_product(graph, params, EXACT)
            oracle = brute_force_marginals(graph, params)
            for var in graph.variables:
                np.testing.assert_allclose(table.var_probs[var],
                                           oracle.var_probs[var], atol=1e-9)

    def test_all_clamped_graph(self):
        g = FactorGraph([ImageVar("i"), UserVar("u", 0)],
                        [Factor(FactorKind.IMAGE_OWNER, (0, 1), "u")],
                        clamps={ImageVar("i"): 1, UserVar("u", 0): -1})
        ps = ParameterSet.constant(["u"])
        assignment, converged, _ = max_product(g, ps)
        assert converged
        assert assignment == {ImageVar("i"): 1, UserVar("u", 0): -1}
        table = brute_force_marginals(g, ps)
        np.testing.assert_allclose(table.var_probs[ImageVar("i")], [0, 1])


class TestPartitionEstimates:
    def test_exact_log_partition_matches_direct_sum(self):
        rng = np.random.default_rng(13)
        graph, params = random_tree_graph(rng, n_vars=(3, 6))
        free = graph.unclamped_indices()
        import itertools
        total = 0.0
        for combo in itertools.product((0, 1), repeat=len(free)):
            assignment = {}
            for i, d in graph.clamps.items():
                assignment[graph.variables[i]] = graph.domain_values(i)[d]
            for j, vi in enumerate(free):
                assignment[graph.variables[vi]] = graph.domain_values(vi)[combo[j]]
            total += np.exp(objective(graph, assignment, params))
        assert exact_log_partition(graph, params) == pytest.approx(
            np.log(total), abs=1e-9)


class TestDiagnosticsExports:
    def test_residual_trajectory_monotonic_tail(self, tmp_path):
        from emoinf.inference import bp_residual_trajectory, write_residuals_csv
        rng = np.random.default_rng(9)
        graph, params = random_tree_graph(rng)
        residuals = bp_residual_trajectory(graph, params, EXACT)
        assert residuals and residuals[-1] < EXACT.tolerance
        path = tmp_path / "res.csv"
        write_residuals_csv(residuals, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,residual"
        assert len(lines) == len(residuals) + 1

    def test_json_exports_keyed_by_variable(self):
        from emoinf.inference import assignment_to_json, marginals_to_json
        rng = np.random.default_rng(10)
        graph, params = random_tree_graph(rng)
        table, _, _ = sum_product(graph, params, EXACT)
        marg = marginals_to_json(graph, table)
        assert len(marg) == len(graph.variables)
        assert all(0.0 <= v <= 1.0 for v in marg.values())
        assignment, _, _ = max_product(graph, params, EXACT)
        encoded = assignment_to_json(assignment)
        assert set(encoded) == set(marg)
