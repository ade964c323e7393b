"""Deviation bounds, cross-layer accumulation, per-layer budgets, and the
mapping search."""

import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_mapping_brute
from siftmoe.error_budget import (
    SKIP,
    BudgetSpec,
    ExpertMapping,
    LayerTrace,
    ModelConstants,
    accumulated_bound,
    feasible_mappings,
    layer_budget,
    pair_deviation,
    token_deviation_bound,
)
from siftmoe.traces import TraceGenSpec, generate_traces, trace_from_outputs


def simple_trace(norms_row, cos=0.5, top=(0, 1), gating=(0.7, 0.3)):
    n = len(norms_row)
    cosines = np.full((n, n), cos)
    np.fill_diagonal(cosines, 1.0)
    return LayerTrace(
        layer_id=0,
        top_sets=np.array([top]),
        gating=np.array([gating]),
        norms=np.array([norms_row]),
        cosines=cosines[None, :, :],
    )


class TestPairDeviation:
    def test_identity_is_zero(self):
        trace = simple_trace([2.0, 1.0, 3.0])
        assert pair_deviation(trace, 0, 0, 0) == 0.0

    def test_skip_equals_norm(self):
        trace = simple_trace([2.0, 1.0, 3.0])
        assert pair_deviation(trace, 0, 0, SKIP) == 2.0

    def test_identical_outputs_no_deviation(self):
        # Equal norms with cosine 1: the substitute output coincides.
        trace = simple_trace([3.0, 3.0, 3.0], cos=1.0)
        assert pair_deviation(trace, 0, 0, 1) == 0.0

    def test_skip_matches_zero_ratio_formula(self):
        trace = simple_trace([2.5, 1.0, 0.7])
        ni = 2.5
        rho = 0.0
        assert pair_deviation(trace, 0, 0, SKIP) == pytest.approx(
            ni * math.sqrt(1 + rho**2 - 2 * rho * 0.5)
        )

    def test_law_of_cosines_value(self):
        trace = simple_trace([2.0, 1.0, 3.0], cos=0.25)
        rho = 0.5
        expected = 2.0 * math.sqrt(1 + rho**2 - 2 * rho * 0.25)
        assert pair_deviation(trace, 0, 0, 1) == pytest.approx(expected, rel=1e-12)

    def test_unknown_expert_rejected(self):
        trace = simple_trace([2.0, 1.0, 3.0])
        with pytest.raises(ValueError):
            pair_deviation(trace, 0, 0, 7)
        with pytest.raises(ValueError):
            pair_deviation(trace, 0, 2, 0)  # 2 not in the top set


class TestTokenBound:
    def test_identity_mapping_zero(self):
        trace = simple_trace([2.0, 1.0, 3.0])
        assert token_deviation_bound(trace, 0, ExpertMapping((0, 1))) == 0.0

    def test_single_expert_skip(self):
        trace = simple_trace([2.0, 1.0], top=(0,), gating=(1.0,))
        assert token_deviation_bound(trace, 0, ExpertMapping((SKIP,))) == 2.0

    def test_weighted_sum(self):
        # Pair deviations (0, 2) under gating (0.7, 0.3) give 0.6.
        trace = simple_trace([5.0, 2.0, 1.0])
        mapping = ExpertMapping((0, SKIP))
        assert token_deviation_bound(trace, 0, mapping) == pytest.approx(0.6)


class TestAccumulatedBound:
    def test_single_layer(self):
        constants = ModelConstants(b_max=[1.0], lipschitz_max=[1.0])
        assert accumulated_bound(constants, [0.5], 1) == pytest.approx(2.5)

    def test_two_layers_amplified(self):
        constants = ModelConstants(b_max=[1.0, 1.0], lipschitz_max=[1.0, 2.0])
        assert accumulated_bound(constants, [0.0, 0.0], 2) == pytest.approx(6.0)

    def test_matches_recursion_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            L = 4
            b = rng.uniform(0.2, 3.0, L)
            beta = rng.uniform(0.5, 1.8, L)
            delta = rng.uniform(0.0, 1.0, L)
            constants = ModelConstants(b_max=b, lipschitz_max=beta)
            # e_l <= beta_l e_{l-1} + 2 b_l + delta_l, unrolled directly.
            e = 0.0
            for l in range(L):
                e = beta[l] * e + 2 * b[l] + delta[l]
            # The first layer's input deviation is zero, so its own
            # amplification never applies.
            assert accumulated_bound(constants, delta, L) == pytest.approx(e, rel=1e-12)

    def test_monotone_in_each_delta(self):
        constants = ModelConstants(b_max=[1.0, 2.0, 0.5], lipschitz_max=[1.1, 0.9, 1.3])
        base = accumulated_bound(constants, [0.3, 0.4, 0.5], 3)
        for i in range(3):
            bumped = [0.3, 0.4, 0.5]
            bumped[i] += 0.2
            assert accumulated_bound(constants, bumped, 3) > base


class TestLayerBudget:
    def test_single_layer_theta(self):
        constants = ModelConstants(b_max=[1.0], lipschitz_max=[1.0])
        budget = BudgetSpec.uniform(theta=5.0, num_layers=1)
        assert layer_budget(constants, budget, [], 0) == pytest.approx(3.0)

    def test_unit_lipschitz_reduces_to_allocation(self):
        L = 3
        constants = ModelConstants(b_max=[1.0, 2.0, 0.5], lipschitz_max=[1.0, 1.0, 1.0])
        budget = BudgetSpec.uniform(theta=9.0, num_layers=L)
        for layer in range(L):
            expected = 3.0 - 2.0 * constants.b_max[layer]
            assert layer_budget(constants, budget, [0.1] * layer, layer) == pytest.approx(expected)

    def test_matches_hand_unrolled_formula(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            L = 3
            b = rng.uniform(0.2, 2.0, L)
            beta = rng.uniform(0.5, 1.5, L)
            kappa = rng.uniform(3.0, 9.0, L)
            alloc = rng.uniform(0.5, 3.0, L)
            spec = BudgetSpec(theta=float(alloc.sum()), theta_alloc=alloc, kappa=kappa)
            constants = ModelConstants(b_max=b, lipschitz_max=beta)
            deltas = rng.uniform(0.0, 0.8, L)
            for layer in range(L):
                carried = 0.0
                for r in range(layer):
                    prod = 1.0
                    for t in range(r + 1, layer + 1):
                        prod *= beta[t]
                    carried += (2 * b[r] + deltas[r]) * prod
                tail = 1.0
                for t in range(layer + 1, L):
                    tail *= beta[t]
                expected = min(
                    kappa[layer] - 2 * b[layer] - carried,
                    alloc[layer] / tail - 2 * b[layer],
                )
                got = layer_budget(constants, spec, deltas[:layer], layer)
                assert got == pytest.approx(expected, rel=1e-12)

    def test_negative_budget_is_allowed(self):
        constants = ModelConstants(b_max=[10.0], lipschitz_max=[1.0])
        budget = BudgetSpec.uniform(theta=1.0, num_layers=1)
        assert layer_budget(constants, budget, [], 0) < 0


class TestFeasibleMappings:
    def test_top_set_itself_gives_identity(self):
        trace = simple_trace([2.0, 1.0, 3.0])
        mapping, bound = feasible_mappings(trace, 0, (0, 1), eta=0.0)
        assert mapping.targets == (0, 1)
        assert bound == 0.0

    def test_expensive_single_substitute_infeasible(self):
        trace = simple_trace([2.0, 1.0, 3.0], top=(0,), gating=(1.0,), cos=0.1)
        dev = pair_deviation(trace, 0, 0, 2)
        assert feasible_mappings(trace, 0, (2,), eta=dev * 0.5) is None
        hit = feasible_mappings(trace, 0, (2,), eta=dev * 1.5)
        assert hit is not None and hit[1] == pytest.approx(dev)

    def test_matches_enumeration_oracle(self):
        spec = TraceGenSpec(tokens=5, norm_lo=0.5, norm_hi=3.0, seed=4)
        for k in (1, 2, 3):
            traces = generate_traces(spec, num_layers=1, num_experts=8, top_k=k)
            trace = traces[0]
            for token in range(trace.num_tokens):
                for size in range(1, k + 1):
                    for subset in combinations(range(8), size):
                        expected_bound, expected_targets = best_mapping_brute(trace, token, subset)
                        hit = feasible_mappings(trace, token, subset, eta=math.inf)
                        assert hit is not None
                        mapping, bound = hit
                        assert bound == pytest.approx(expected_bound, rel=1e-12)
                        assert mapping.targets == expected_targets

    def test_negative_eta_admits_only_exact_top_k(self):
        trace = simple_trace([2.0, 1.0, 3.0])
        assert feasible_mappings(trace, 0, (0, 1), eta=-5.0) is not None
        assert feasible_mappings(trace, 0, (2,), eta=-5.0) is None

    def test_rejects_bad_subset_size(self):
        trace = simple_trace([2.0, 1.0, 3.0])
        with pytest.raises(ValueError):
            feasible_mappings(trace, 0, (0, 1, 2), eta=1.0)


class TestMappingInvariants:
    def test_duplicate_targets_rejected(self):
        with pytest.raises(ValueError):
            ExpertMapping((1, 1))

    def test_describe_round_trip_format(self):
        mapping = ExpertMapping((2, SKIP))
        assert mapping.describe((0, 5)) == "0:2;5:skip"


class TestBoundSoundness:
    def test_single_layer_bound_dominates_realized(self):
        # Explicit output vectors: the weighted aggregate of substitutions
        # never exceeds the bound. The acceptance suite runs 10^3 layers.
        rng = np.random.default_rng(17)
        dim, n, k, m = 16, 6, 2, 4
        for _ in range(100):
            outputs = rng.normal(0.0, 1.5, size=(m, n, dim))
            top_sets = np.array([rng.choice(n, k, replace=False) for _ in range(m)])
            raw = rng.dirichlet(np.ones(k), size=m)
            trace = trace_from_outputs(0, top_sets, raw, outputs)
            for token in range(m):
                nodes = tuple(sorted(rng.choice(n, rng.integers(1, k + 1), replace=False)))
                hit = feasible_mappings(trace, token, nodes, eta=math.inf)
                assert hit is not None
                mapping, bound = hit
                realized = np.zeros(dim)
                for g, src, dst in zip(trace.gating[token], trace.top_sets[token], mapping.targets):
                    actual = np.zeros(dim) if dst == SKIP else outputs[token, dst]
                    realized += g * (actual - outputs[token, src])
                assert np.linalg.norm(realized) <= bound + 1e-9


@settings(max_examples=40, deadline=None)
@given(
    ni=st.floats(min_value=0.0, max_value=10.0),
    nt=st.floats(min_value=0.0, max_value=10.0),
    cos=st.floats(min_value=-1.0, max_value=1.0),
)
def test_pair_deviation_is_a_metric_value(ni, nt, cos):
    """The replacement factor is the distance between two vectors with the
    given norms and angle; it must be nonnegative and obey the triangle
    bound ||u - v|| <= ||u|| + ||v||."""
    n = 3
    norms = np.array([[ni, nt, 1.0]])
    cosines = np.full((1, n, n), cos)
    for t in range(1):
        np.fill_diagonal(cosines[t], 1.0)
    trace = LayerTrace(
        layer_id=0,
        top_sets=np.array([[0]]),
        gating=np.array([[1.0]]),
        norms=norms,
        cosines=cosines,
    )
    dev = pair_deviation(trace, 0, 0, 1)
    assert dev >= 0.0
    assert dev <= ni + nt + 1e-12
