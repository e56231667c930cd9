import numpy as np
import pytest

from polarfact.convex import ConvexPotential
from polarfact.errors import (
    MarginalMismatchError,
    OracleScopeExceededError,
    UnequalMassError,
)
from polarfact.measures import DiscreteMeasure, SampledMap
from polarfact.transport import (
    CostMatrix,
    TransportPlan,
    brute_force_mk,
    build_cost,
    duality_certificate,
    objective,
    random_plan,
    shifted_objective,
    solve_mk,
    worst_cycle_violation,
)


def uniform(n, total=1.0, coords=None, prefix="x"):
    return DiscreteMeasure.uniform(n, total, coords=coords, prefix=prefix)


def line_sites(values, prefix="y"):
    arr = np.asarray(values, float).reshape(-1, 1)
    return uniform(arr.shape[0], coords=arr, prefix=prefix)


def random_instance(rng, m, n, dim=2, uniform_weights=True):
    """Random quadratic-cost instance with balanced masses."""
    coords = rng.normal(size=(n, dim))
    if uniform_weights:
        Y = DiscreteMeasure(tuple(f"y{j}" for j in range(n)), np.full(n, 1.0 / n), coords)
        X = DiscreteMeasure(tuple(f"x{i}" for i in range(m)), np.full(m, 1.0 / m))
    else:
        wb = rng.integers(1, 9, n).astype(float)
        wa = rng.integers(1, 9, m).astype(float)
        wa *= wb.sum() / wa.sum()
        Y = DiscreteMeasure(tuple(f"y{j}" for j in range(n)), wb, coords)
        X = DiscreteMeasure(tuple(f"x{i}" for i in range(m)), wa)
    u = SampledMap(X, rng.normal(size=(m, dim)))
    return u, Y


class TestBuildCost:
    def test_hand_instance(self):
        X = uniform(2)
        u = SampledMap(X, [[1.0], [0.0]])
        Y = line_sites([0.0, 1.0])
        cost = build_cost(u, Y)
        np.testing.assert_allclose(cost.entries, [[0.5, 0.0], [0.0, 0.5]])

    def test_zero_diagonal_when_paired(self):
        rng = np.random.default_rng(0)
        coords = rng.normal(size=(5, 3))
        Y = uniform(5, coords=coords, prefix="y")
        u = SampledMap(uniform(5), coords)
        cost = build_cost(u, Y)
        assert np.all(np.diag(cost.entries) == 0.0)
        assert np.all(cost.entries >= 0.0)

    def test_two_dimensional_value(self):
        u = SampledMap(uniform(1), [[1.0, 0.0]])
        Y = uniform(1, coords=[[0.0, 0.0]], prefix="y")
        assert build_cost(u, Y).entries[0, 0] == pytest.approx(0.5)

    def test_unequal_mass_rejected(self):
        u = SampledMap(uniform(2, total=2.0), [[1.0], [0.0]])
        with pytest.raises(UnequalMassError):
            build_cost(u, line_sites([0.0, 1.0]))


class TestCostRelabelling:
    def test_symmetric_under_simultaneous_relabelling(self):
        rng = np.random.default_rng(2)
        u, Y = random_instance(rng, 5, 6)
        base = build_cost(u, Y).entries
        rp, cp = rng.permutation(5), rng.permutation(6)
        u2 = SampledMap(
            DiscreteMeasure(
                tuple(u.domain.labels[i] for i in rp), u.domain.weights[rp]
            ),
            u.values[rp],
        )
        Y2 = DiscreteMeasure(
            tuple(Y.labels[j] for j in cp), Y.weights[cp], Y.coords[cp]
        )
        np.testing.assert_array_equal(build_cost(u2, Y2).entries, base[np.ix_(rp, cp)])


class TestObjective:
    def test_zero_cost_diagonal_plan(self):
        X, Y = uniform(2), line_sites([0.0, 1.0])
        cost = CostMatrix([[0.0, 1.0], [1.0, 0.0]], X, Y)
        plan = TransportPlan([0, 1], [0, 1], [0.5, 0.5], X, Y)
        assert objective(plan, cost) == 0.0

    def test_independent_product_plan(self):
        X, Y = uniform(2), line_sites([0.0, 1.0])
        cost = CostMatrix([[0.5, 0.0], [0.0, 0.5]], X, Y)
        plan = TransportPlan([0, 0, 1, 1], [0, 1, 0, 1], [0.25] * 4, X, Y)
        # direct sum: .25*.5 + .25*0 + .25*0 + .25*.5
        assert objective(plan, cost) == pytest.approx(0.25)

    def test_rectangle_swap_rule(self):
        rng = np.random.default_rng(1)
        X, Y = uniform(2), line_sites([0.3, 0.9])
        c = rng.uniform(size=(2, 2))
        cost = CostMatrix(c, X, Y)
        eps = 0.1
        base = TransportPlan([0, 0, 1, 1], [0, 1, 0, 1], [0.25] * 4, X, Y)
        swapped = TransportPlan(
            [0, 0, 1, 1], [0, 1, 0, 1], [0.25 - eps, 0.25 + eps, 0.25 + eps, 0.25 - eps], X, Y
        )
        delta = objective(swapped, cost) - objective(base, cost)
        assert delta == pytest.approx(eps * (c[0, 1] + c[1, 0] - c[0, 0] - c[1, 1]))

    def test_marginal_mismatch(self):
        X, Y = uniform(2), line_sites([0.0, 1.0])
        other = uniform(3, prefix="z")
        cost = CostMatrix(np.zeros((2, 2)), X, Y)
        plan = TransportPlan([0], [0], [1.0], other, Y)
        with pytest.raises(MarginalMismatchError):
            objective(plan, cost)


class TestBruteForce:
    def test_single_cell(self):
        X, Y = uniform(1), line_sites([0.0])
        cost = CostMatrix([[0.7]], X, Y)
        assert brute_force_mk(cost, X, Y) == pytest.approx(0.7)

    def test_two_by_two_swap(self):
        X, Y = uniform(2), line_sites([0.0, 1.0])
        cost = CostMatrix([[0.5, 0.0], [0.0, 0.5]], X, Y)
        assert brute_force_mk(cost, X, Y) == 0.0

    def test_constant_costs(self):
        X, Y = uniform(3), line_sites([0.0, 1.0, 2.0])
        cost = CostMatrix(np.full((3, 3), 2.0), X, Y)
        assert brute_force_mk(cost, X, Y) == pytest.approx(2.0 * X.total_mass)

    def test_scope_rejects_non_uniform(self):
        X = DiscreteMeasure(("x0", "x1"), [0.25, 0.75])
        Y = line_sites([0.0, 1.0])
        cost = CostMatrix(np.zeros((2, 2)), X, Y)
        with pytest.raises(OracleScopeExceededError):
            brute_force_mk(cost, X, Y)

    def test_scope_rejects_large(self):
        X, Y = uniform(9), uniform(9, coords=np.zeros((9, 1)), prefix="y")
        cost = CostMatrix(np.zeros((9, 9)), X, Y)
        with pytest.raises(OracleScopeExceededError):
            brute_force_mk(cost, X, Y)


class TestSolveMK:
    def test_zero_cost_antidiagonal(self):
        X, Y = uniform(2), line_sites([0.0, 1.0])
        cost = CostMatrix([[0.5, 0.0], [0.0, 0.5]], X, Y)
        plan, duals = solve_mk(cost, X, Y)
        assert objective(plan, cost) == 0.0
        assert sorted(plan.triplets) == [(0, 1, 0.5), (1, 0, 0.5)]

    def test_zero_cost_diagonal(self):
        X, Y = uniform(2), line_sites([0.0, 1.0])
        cost = CostMatrix([[0.0, 1.0], [1.0, 0.0]], X, Y)
        plan, _ = solve_mk(cost, X, Y)
        assert objective(plan, cost) == 0.0
        assert sorted(plan.triplets) == [(0, 0, 0.5), (1, 1, 0.5)]

    def test_matches_oracle_random_6x6(self):
        rng = np.random.default_rng(123)
        u, Y = random_instance(rng, 6, 6)
        cost = build_cost(u, Y)
        plan, _ = solve_mk(cost, u.domain, Y)
        assert objective(plan, cost) == pytest.approx(
            brute_force_mk(cost, u.domain, Y), rel=1e-9, abs=1e-12
        )

    def test_dual_certificate_properties(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            m, n = int(rng.integers(2, 12)), int(rng.integers(2, 12))
            u, Y = random_instance(rng, m, n, uniform_weights=False)
            cost = build_cost(u, Y)
            plan, duals = solve_mk(cost, u.domain, Y)
            plan.validate()
            assert plan.n_triplets <= m + n - 1
            cert = duality_certificate(plan, duals, cost)
            assert abs(cert["gap"]) <= 1e-9 * (1 + abs(cert["I"]))
            # feasibility everywhere, tightness on support
            assert duals.max_feasibility_violation() <= 1e-9
            slack = cost.entries[plan.rows, plan.cols] - duals.phi_c[plan.rows] - duals.phi[plan.cols]
            assert np.max(np.abs(slack)) <= 1e-9
            # gauge: target potential vanishes at the first site
            assert duals.phi[0] == 0.0
            # the LP duals form a c-concave conjugate pair
            assert duals.c_concavity_gap() <= 1e-9

    def test_deterministic_output(self):
        rng = np.random.default_rng(99)
        u, Y = random_instance(rng, 7, 9, uniform_weights=False)
        cost = build_cost(u, Y)
        p1, d1 = solve_mk(cost, u.domain, Y)
        p2, d2 = solve_mk(cost, u.domain, Y)
        assert p1.triplets == p2.triplets
        assert np.array_equal(d1.phi, d2.phi) and np.array_equal(d1.phi_c, d2.phi_c)

    def test_unequal_mass_rejected(self):
        X = uniform(2, total=2.0)
        Y = line_sites([0.0, 1.0])
        cost = CostMatrix(np.zeros((2, 2)), X, Y)
        with pytest.raises(UnequalMassError):
            solve_mk(cost, X, Y)

    def test_optimum_below_random_plans(self):
        rng = np.random.default_rng(11)
        u, Y = random_instance(rng, 5, 8)
        cost = build_cost(u, Y)
        plan, _ = solve_mk(cost, u.domain, Y)
        best = objective(plan, cost)
        for seed in range(100):
            assert best <= objective(random_plan(u.domain, Y, seed), cost) + 1e-12

    def test_cyclical_monotonicity_of_support(self):
        rng = np.random.default_rng(13)
        for trial in range(5):
            u, Y = random_instance(rng, 10, 10, uniform_weights=False)
            cost = build_cost(u, Y)
            plan, _ = solve_mk(cost, u.domain, Y)
            assert worst_cycle_violation(plan, cost, 1000, 5, seed=trial) <= 1e-9


class TestShiftedObjective:
    def test_zero_on_gap_free_support(self):
        coords = np.array([[0.0], [1.0]])
        Y = uniform(2, coords=coords, prefix="y")
        psi = ConvexPotential(Y, 0.5 * coords[:, 0] ** 2)
        u = SampledMap(uniform(2), coords)  # u values are the sites themselves
        plan = TransportPlan([0, 1], [0, 1], [0.5, 0.5], u.domain, Y)
        assert shifted_objective(plan, psi, u) == pytest.approx(0.0, abs=1e-15)

    def test_difference_to_objective_is_plan_independent(self):
        rng = np.random.default_rng(21)
        u, Y = random_instance(rng, 6, 7)
        cost = build_cost(u, Y)
        psi = ConvexPotential(Y, rng.normal(size=7))
        shifts = []
        for seed in range(100):
            plan = random_plan(u.domain, Y, seed)
            shifts.append(shifted_objective(plan, psi, u) - objective(plan, cost))
        i_scale = 1.0 + abs(objective(random_plan(u.domain, Y, 0), cost))
        assert max(shifts) - min(shifts) <= 1e-9 * i_scale

    def test_equals_objective_for_half_square_norm_on_matched_values(self):
        # u values sit on the support, so both marginal shift terms vanish
        rng = np.random.default_rng(22)
        coords = rng.normal(size=(6, 2))
        Y = uniform(6, coords=coords, prefix="y")
        psi = ConvexPotential(Y, 0.5 * np.sum(coords**2, axis=1))
        u = SampledMap(uniform(6), coords[rng.permutation(6)])
        cost = build_cost(u, Y)
        for seed in range(20):
            plan = random_plan(u.domain, Y, seed)
            assert shifted_objective(plan, psi, u) == pytest.approx(
                objective(plan, cost), rel=1e-9, abs=1e-12
            )

    def test_nonnegative(self):
        rng = np.random.default_rng(23)
        u, Y = random_instance(rng, 4, 4)
        psi = ConvexPotential(Y, rng.normal(size=4))
        for seed in range(50):
            assert shifted_objective(random_plan(u.domain, Y, seed), psi, u) >= -1e-9


class TestRandomPlan:
    def test_deterministic_per_seed(self):
        X, Y = uniform(4), line_sites([0.0, 1.0, 2.0])
        Y = DiscreteMeasure(Y.labels, np.array([0.5, 0.25, 0.25]), Y.coords)
        p1 = random_plan(X, Y, 42)
        p2 = random_plan(X, Y, 42)
        assert p1.triplets == p2.triplets

    def test_marginals_exact_for_1000_seeds(self):
        X = uniform(4)
        Y = DiscreteMeasure(("y0", "y1"), [0.5, 0.5], [[0.0], [1.0]])
        for seed in range(1000):
            plan = random_plan(X, Y, seed)
            np.testing.assert_array_equal(plan.row_sums(), X.weights)
            np.testing.assert_array_equal(plan.col_sums(), Y.weights)

    def test_single_cell_space(self):
        X = uniform(1)
        Y = uniform(1, coords=[[0.0]], prefix="y")
        plan = random_plan(X, Y, 0)
        assert plan.triplets == [(0, 0, 1.0)]

    def test_unequal_mass_rejected(self):
        with pytest.raises(UnequalMassError):
            random_plan(uniform(2, total=2.0), uniform(2, coords=[[0.0], [1.0]]), 0)
