import itertools
import math

import numpy as np
import pytest

from conftest import (
    oracle_objective,
    oracle_violations,
    random_instance,
    random_routes,
)
from nds.core import (
    ContractError,
    Instance,
    PartialSolution,
    Solution,
    Variant,
    ViolationKind,
    check_feasibility,
    evaluate,
    instance_from_dict,
    instance_to_dict,
    objective,
    remove_customers,
    solution_from_dict,
    solution_to_dict,
    validate_solution,
)


def tiny(variant=Variant.CVRP, coords=None, demand=None, capacity=10.0, **kw):
    coords = coords if coords is not None else [[0.0, 0.0], [3.0, 4.0]]
    demand = demand if demand is not None else [1.0] * (len(coords) - 1)
    return Instance(variant=variant, coords=coords, demand=demand,
                    capacity=capacity, **kw)


class TestInstanceValidation:
    def test_three_four_five_distance(self):
        inst = tiny()
        assert inst.distance(0, 1) == 5.0
        assert inst.distance(1, 0) == 5.0

    def test_self_distance_zero(self):
        assert tiny().distance(1, 1) == 0.0

    def test_distance_index_out_of_range(self):
        with pytest.raises(ContractError):
            tiny().distance(0, 2)

    def test_distance_matches_naive_recompute(self, rng):
        inst = random_instance(Variant.CVRP, 5, rng)
        for i in range(6):
            for j in range(6):
                naive = math.sqrt(((inst.coords[i] - inst.coords[j]) ** 2).sum())
                assert abs(inst.distance(i, j) - naive) < 1e-12

    def test_matrix_and_direct_paths_agree(self, rng):
        inst = random_instance(Variant.CVRP, 8, rng)
        direct = Instance(variant=Variant.CVRP, coords=inst.coords,
                          demand=inst.demand, capacity=inst.capacity,
                          precompute_matrix=False)
        for i in range(9):
            for j in range(9):
                assert inst.distance(i, j) == pytest.approx(direct.distance(i, j), abs=1e-15)

    def test_zero_demand_rejected(self):
        with pytest.raises(ValueError):
            tiny(demand=[0.0])

    def test_demand_above_capacity_rejected(self):
        with pytest.raises(ValueError):
            tiny(demand=[11.0])

    def test_vrptw_requires_window_fields(self):
        with pytest.raises(ValueError, match="requires"):
            tiny(variant=Variant.VRPTW)

    def test_vrptw_inverted_window_rejected(self):
        with pytest.raises(ValueError, match="a_i <= b_i"):
            tiny(variant=Variant.VRPTW, tw_open=[0.0, 5.0], tw_close=[10.0, 4.0],
                 service=[0.1])

    def test_vrptw_depot_must_open_at_zero(self):
        with pytest.raises(ValueError, match="depot"):
            tiny(variant=Variant.VRPTW, tw_open=[1.0, 2.0], tw_close=[10.0, 8.0],
                 service=[0.1])

    def test_window_fields_rejected_off_variant(self):
        with pytest.raises(ValueError, match="only valid for VRPTW"):
            tiny(tw_open=[0.0, 1.0], tw_close=[10.0, 2.0], service=[0.0])

    def test_prize_rejected_off_variant(self):
        with pytest.raises(ValueError, match="only valid for PCVRP"):
            tiny(prize=[1.0])

    def test_pcvrp_requires_positive_prizes(self):
        with pytest.raises(ValueError):
            tiny(variant=Variant.PCVRP, prize=[-0.5])

    def test_coords_are_immutable(self):
        inst = tiny()
        with pytest.raises(ValueError):
            inst.coords[0, 0] = 9.0


class TestObjective:
    def test_out_and_back(self):
        assert objective(tiny(), Solution([[1]])) == 10.0

    def test_pcvrp_all_unvisited_is_zero(self):
        inst = tiny(variant=Variant.PCVRP, prize=[2.0])
        assert objective(inst, Solution([], unvisited={1})) == 0.0

    def test_pcvrp_subtracts_prizes(self):
        inst = tiny(variant=Variant.PCVRP, prize=[2.0])
        assert objective(inst, Solution([[1]])) == pytest.approx(10.0 - 2.0)

    def test_matches_oracle_on_random_routes(self, rng):
        for variant in Variant:
            for _ in range(20):
                inst = random_instance(variant, 12, rng)
                routes, unvisited = random_routes(
                    12, rng, leave_out=variant is Variant.PCVRP)
                got = objective(inst, Solution(routes, set(unvisited)))
                want = oracle_objective(inst, routes)
                assert abs(got - want) < 1e-9

    def test_equals_brute_force_optimum(self, rng):
        # enumerate every ordered partition of 6 customers into routes
        inst = random_instance(Variant.CVRP, 6, rng)
        best = math.inf
        best_routes = None
        for perm in itertools.permutations(range(1, 7)):
            for cuts in itertools.product([0, 1], repeat=5):
                routes, cur = [], [perm[0]]
                for c, cut in zip(perm[1:], cuts):
                    if cut:
                        routes.append(cur)
                        cur = [c]
                    else:
                        cur.append(c)
                routes.append(cur)
                if any(sum(inst.demand[c - 1] for c in r) > inst.capacity
                       for r in routes):
                    continue
                cost = oracle_objective(inst, routes)
                if cost < best:
                    best, best_routes = cost, [list(r) for r in routes]
        assert objective(inst, Solution(best_routes)) == pytest.approx(best, abs=1e-9)

    def test_rigid_transform_invariance(self, rng):
        inst = random_instance(Variant.CVRP, 15, rng)
        routes, _ = random_routes(15, rng)
        base = objective(inst, Solution(routes))
        theta = 1.1
        c, s = math.cos(theta), math.sin(theta)
        xy = inst.coords - 0.5
        rotated = np.column_stack([c * xy[:, 0] - s * xy[:, 1] + 0.5,
                                   s * xy[:, 0] + c * xy[:, 1] + 0.5])
        mirrored = np.column_stack([1.0 - inst.coords[:, 0], inst.coords[:, 1]])
        for coords in (rotated, mirrored):
            moved = inst.with_coords(coords)
            assert abs(objective(moved, Solution(routes)) - base) < 1e-9

    def test_evaluate_caches(self):
        inst = tiny()
        sol = Solution([[1]])
        assert sol.cached_cost is None
        assert evaluate(inst, sol) == 10.0
        assert sol.cached_cost == 10.0


class TestFeasibility:
    def test_capacity_violation_names_route(self):
        inst = Instance(variant=Variant.CVRP, coords=[[0, 0], [1, 0], [0, 1]],
                        demand=[6.0, 5.0], capacity=10.0)
        violations = check_feasibility(inst, Solution([[1, 2]]))
        assert len(violations) == 1
        v = violations[0]
        assert v.kind is ViolationKind.CAPACITY
        assert v.route == 0
        assert v.amount == pytest.approx(1.0)

    def test_vrptw_wait_then_serve(self):
        # arrival 5, wait to 10, depart 11, return at 16
        def build(depot_close):
            return Instance(variant=Variant.VRPTW, coords=[[0, 0], [3, 4]],
                            demand=[1.0], capacity=10.0,
                            tw_open=[0.0, 10.0], tw_close=[depot_close, 12.0],
                            service=[1.0])
        assert check_feasibility(build(16.0), Solution([[1]])) == []
        late = check_feasibility(build(15.9), Solution([[1]]))
        assert [v.kind for v in late] == [ViolationKind.DEPOT_RETURN]

    def test_vrptw_late_start_detected(self):
        inst = Instance(variant=Variant.VRPTW, coords=[[0, 0], [3, 4]],
                        demand=[1.0], capacity=10.0,
                        tw_open=[0.0, 0.0], tw_close=[20.0, 4.0], service=[1.0])
        violations = check_feasibility(inst, Solution([[1]]))
        assert violations and violations[0].kind is ViolationKind.TIME_WINDOW

    def test_verdicts_match_oracle(self, rng):
        for _ in range(20):
            inst = random_instance(Variant.VRPTW, 12, rng)
            routes, _ = random_routes(12, rng)
            got = set()
            for v in check_feasibility(inst, Solution(routes)):
                kind = ("capacity" if v.kind is ViolationKind.CAPACITY
                        else "time_window")
                got.add((kind, v.route))
            assert got == oracle_violations(inst, routes)

    def test_singleton_start_is_feasible(self, rng):
        inst = random_instance(Variant.CVRP, 10, rng)
        sol = Solution([[c] for c in range(1, 11)])
        assert check_feasibility(inst, sol) == []


class TestRemoveCustomers:
    def test_mid_route_splice(self):
        inst = random_instance(Variant.CVRP, 3, np.random.default_rng(0))
        part = remove_customers(Solution([[1, 2, 3]]), [2])
        assert part.routes == [[1, 3]]
        assert part.removed == [2]

    def test_empty_route_dropped(self):
        inst = random_instance(Variant.CVRP, 7, np.random.default_rng(0))
        sol = Solution([[7], [1, 2, 3, 4, 5, 6]])
        part = remove_customers(sol, [7])
        assert part.routes == [[1, 2, 3, 4, 5, 6]]
        assert part.removed == [7]

    def test_duplicate_removal_rejected(self):
        with pytest.raises(ContractError):
            remove_customers(Solution([[1, 2, 3]]), [2, 2])

    def test_unknown_customer_rejected(self):
        with pytest.raises(ContractError):
            remove_customers(Solution([[1, 2]]), [9])

    def test_pcvrp_unvisited_can_be_selected(self):
        part = remove_customers(Solution([[1, 2]], unvisited={3}), [3, 1])
        assert part.routes == [[2]]
        assert part.removed == [3, 1]
        assert part.unvisited == set()

    def test_conservation_on_large_removal(self, rng):
        n = 100
        routes, _ = random_routes(n, rng)
        sol = Solution(routes)
        removal = [int(c) for c in rng.choice(np.arange(1, n + 1), size=15,
                                              replace=False)]
        part = remove_customers(sol, removal)
        left = [c for r in part.routes for c in r]
        assert sorted(left + part.removed) == list(range(1, n + 1))
        assert part.removed == removal


class TestSerialization:
    def test_instance_round_trip(self, rng):
        for variant in Variant:
            inst = random_instance(variant, 9, rng)
            doc = instance_to_dict(inst)
            assert doc["format_version"] == 1
            back = instance_from_dict(doc)
            assert back.variant is inst.variant
            np.testing.assert_array_equal(back.coords, inst.coords)
            np.testing.assert_array_equal(back.demand, inst.demand)
            if variant is Variant.PCVRP:
                np.testing.assert_array_equal(back.prize, inst.prize)

    def test_absent_fields_omitted(self, rng):
        doc = instance_to_dict(random_instance(Variant.CVRP, 4, rng))
        assert "prize" not in doc
        assert "tw_open" not in doc

    def test_unknown_fields_rejected(self, rng):
        doc = instance_to_dict(random_instance(Variant.CVRP, 4, rng))
        doc["speed"] = 3
        with pytest.raises(ValueError, match="speed"):
            instance_from_dict(doc)

    def test_solution_round_trip(self, rng):
        inst = random_instance(Variant.PCVRP, 8, rng)
        routes, unvisited = random_routes(8, rng, leave_out=True)
        sol = Solution(routes, set(unvisited))
        evaluate(inst, sol)
        doc = solution_to_dict(sol, inst.id)
        back = solution_from_dict(doc, inst)
        assert back.routes == sol.routes
        assert back.unvisited == sol.unvisited
        assert back.cached_cost == sol.cached_cost

    def test_solution_instance_mismatch(self, rng):
        inst = random_instance(Variant.CVRP, 3, rng)
        doc = solution_to_dict(Solution([[1, 2, 3]]), "other-instance")
        with pytest.raises(ValueError, match="other-instance"):
            solution_from_dict(doc, inst)


class TestValidateSolution:
    def test_duplicate_customer(self, rng):
        inst = random_instance(Variant.CVRP, 4, rng)
        with pytest.raises(ContractError, match="more than once"):
            validate_solution(inst, Solution([[1, 2], [2, 3, 4]]))

    def test_empty_route(self, rng):
        inst = random_instance(Variant.CVRP, 2, rng)
        with pytest.raises(ContractError, match="empty"):
            validate_solution(inst, Solution([[1, 2], []]))

    def test_missing_customer(self, rng):
        inst = random_instance(Variant.CVRP, 3, rng)
        with pytest.raises(ContractError, match="missing"):
            validate_solution(inst, Solution([[1, 3]]))

    def test_unvisited_only_for_pcvrp(self, rng):
        inst = random_instance(Variant.CVRP, 3, rng)
        with pytest.raises(ContractError, match="PCVRP"):
            validate_solution(inst, Solution([[1, 2]], unvisited={3}))
