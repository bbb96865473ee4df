import json

import numpy as np
import pytest

from nds.core import ContractError, Solution, Variant, check_feasibility
from nds.instances import (
    CapacityProfile,
    FormatError,
    GeneratorSpec,
    LocationMode,
    capacity_for,
    derived_seed,
    generate,
    generate_set,
    load_instance,
    load_solution,
    save_instance,
    save_solution,
)


class TestCapacityTable:
    @pytest.mark.parametrize("n,want", [
        (1, 30.0), (20, 30.0), (21, 40.0), (50, 40.0), (100, 50.0),
        (500, 125.0), (1000, 200.0), (2000, 300.0), (5000, 300.0),
    ])
    def test_medium_steps(self, n, want):
        assert capacity_for(n, CapacityProfile.MEDIUM) == want

    def test_profile_scaling(self):
        assert capacity_for(100, CapacityProfile.LOW) == round(50 * 0.7)
        assert capacity_for(100, CapacityProfile.HIGH) == 75.0


class TestGenerate:
    def test_deterministic_per_seed(self):
        spec = GeneratorSpec(variant=Variant.VRPTW, n=25, seed=5)
        a, b = generate(spec), generate(spec)
        assert np.array_equal(a.coords, b.coords)
        assert np.array_equal(a.tw_open, b.tw_open)
        c = generate(GeneratorSpec(variant=Variant.VRPTW, n=25, seed=6))
        assert not np.array_equal(a.coords, c.coords)

    def test_id_encodes_spec(self):
        spec = GeneratorSpec(variant=Variant.PCVRP, n=40,
                             location=LocationMode.CLUSTERED,
                             capacity=CapacityProfile.HIGH, seed=9)
        assert generate(spec).id == "pcvrp-n40-clustered-high-s9"

    def test_coords_in_unit_square(self):
        for mode in LocationMode:
            inst = generate(GeneratorSpec(variant=Variant.CVRP, n=120,
                                          location=mode, seed=3))
            assert inst.coords.min() >= 0.0 and inst.coords.max() <= 1.0
            assert inst.coords.shape == (121, 2)

    def test_demands_integral_and_positive(self):
        inst = generate(GeneratorSpec(variant=Variant.CVRP, n=200, seed=1))
        assert np.all(inst.demand >= 1.0)
        assert np.all(inst.demand <= 9.0)
        assert np.all(inst.demand == np.round(inst.demand))

    def test_variant_mismatch_rejected(self):
        from nds.instances import gen_cvrp
        with pytest.raises(ContractError):
            gen_cvrp(GeneratorSpec(variant=Variant.VRPTW, n=5))

    def test_vrptw_windows_feasible_by_construction(self):
        # every customer alone on a route must be servable
        inst = generate(GeneratorSpec(variant=Variant.VRPTW, n=150, seed=8))
        assert np.all(inst.tw_open[1:] <= inst.tw_close[1:] + 1e-12)
        for c in range(1, 151):
            assert check_feasibility(inst, Solution([[c]], unvisited=set())) == []

    def test_vrptw_depot_window(self):
        inst = generate(GeneratorSpec(variant=Variant.VRPTW, n=10, seed=2))
        assert inst.tw_open[0] == 0.0
        assert inst.tw_close[0] == 10.0

    def test_pcvrp_prize_formula(self):
        spec = GeneratorSpec(variant=Variant.PCVRP, n=60, seed=13)
        inst = generate(spec)
        # prize_i / (q_i / mean q) recovers the uniform draw, bounded by the
        # profile and identically distributed across customers
        ratio = inst.prize / (inst.demand / inst.demand.mean())
        assert np.all(ratio >= spec.prize.lo - 1e-12)
        assert np.all(ratio <= spec.prize.hi + 1e-12)
        assert ratio.std() > 0

    def test_clustered_is_tighter_than_uniform(self):
        # same seed, same depot draw; clusters compress pairwise spread
        u = generate(GeneratorSpec(variant=Variant.CVRP, n=100, seed=21))
        c = generate(GeneratorSpec(variant=Variant.CVRP, n=100, seed=21,
                                   location=LocationMode.CLUSTERED))
        assert np.array_equal(u.coords[0], c.coords[0])
        assert c.coords[1:, 0].std() < u.coords[1:, 0].std()


class TestDerivedSeed:
    def test_pure_function(self):
        assert derived_seed(42, 7) == derived_seed(42, 7)

    def test_index_sensitivity(self):
        seen = {derived_seed(42, i) for i in range(100)}
        assert len(seen) == 100

    def test_base_sensitivity(self):
        assert derived_seed(1, 0) != derived_seed(2, 0)


class TestGenerateSet:
    def test_writes_instances_and_manifest(self, tmp_path):
        spec = GeneratorSpec(variant=Variant.CVRP, n=8, seed=77)
        paths = generate_set(spec, 4, str(tmp_path))
        assert len(paths) == 4
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["count"] == 4
        assert doc["base_seed"] == 77
        for entry, path in zip(doc["instances"], paths):
            assert (tmp_path / entry["path"]).exists()
            inst = load_instance(path)
            assert inst.n_customers == 8

    def test_byte_identical_reruns(self, tmp_path):
        spec = GeneratorSpec(variant=Variant.VRPTW, n=6, seed=3)
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        pa = generate_set(spec, 3, str(a_dir))
        pb = generate_set(spec, 3, str(b_dir))
        for x, y in zip(pa, pb):
            assert open(x, "rb").read() == open(y, "rb").read()
        assert ((a_dir / "manifest.json").read_bytes()
                == (b_dir / "manifest.json").read_bytes())


class TestInstanceIo:
    @pytest.mark.parametrize("variant", list(Variant))
    def test_round_trip(self, tmp_path, variant):
        inst = generate(GeneratorSpec(variant=variant, n=12, seed=4))
        path = str(tmp_path / "x.json")
        save_instance(path, inst)
        back = load_instance(path)
        assert back.variant == inst.variant
        assert back.id == inst.id
        assert np.array_equal(back.coords, inst.coords)
        assert np.array_equal(back.demand, inst.demand)
        if variant is Variant.VRPTW:
            assert np.array_equal(back.tw_open, inst.tw_open)
            assert np.array_equal(back.service, inst.service)
        if variant is Variant.PCVRP:
            assert np.array_equal(back.prize, inst.prize)

    def test_parse_error_reports_byte_offset(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"variant": "cvrp", ')
        with pytest.raises(FormatError, match="byte"):
            load_instance(str(path))

    def test_semantic_error_wrapped(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"variant": "cvrp"}))
        with pytest.raises(FormatError):
            load_instance(str(path))

    def test_solution_round_trip(self, tmp_path):
        inst = generate(GeneratorSpec(variant=Variant.PCVRP, n=9, seed=6))
        sol = Solution([[1, 4], [2]], unvisited={3, 5, 6, 7, 8, 9},
                       cached_cost=1.5)
        path = str(tmp_path / "s.json")
        save_solution(path, sol, inst.id)
        back, iid = load_solution(path, inst)
        assert iid == inst.id
        assert back.routes == sol.routes
        assert back.unvisited == sol.unvisited

    def test_solution_for_wrong_instance(self, tmp_path):
        inst = generate(GeneratorSpec(variant=Variant.CVRP, n=5, seed=1))
        other = generate(GeneratorSpec(variant=Variant.CVRP, n=5, seed=2))
        path = str(tmp_path / "s.json")
        save_solution(path, Solution([[1, 2, 3, 4, 5]]), inst.id)
        with pytest.raises(FormatError):
            load_solution(path, other)
