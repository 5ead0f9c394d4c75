"""Topology, config and unit-conversion checks."""

import math

import numpy as np
import pytest

from breathenet.model import (
    AlgorithmConfig,
    Antenna,
    ConfigError,
    NetworkTopology,
    SimulationClock,
    dbm_to_watts,
    symmetrize,
    topology_from_dict,
    topology_from_json,
    topology_to_dict,
    validate_topology,
    watts_to_dbm,
)


def make_topo(n, neighbours=None, p=40.0, p_max=49.0, r=100):
    ants = tuple(Antenna(id=i, p=p, p_max=p_max, r=r) for i in range(1, n + 1))
    if neighbours is None:
        neighbours = [set() for _ in range(n)]
    return NetworkTopology(ants, tuple(frozenset(s) for s in neighbours))


class TestPowerUnits:
    def test_one_watt_is_30_dbm(self):
        assert watts_to_dbm(1.0) == pytest.approx(30.0, abs=1e-12)

    def test_one_milliwatt_is_0_dbm(self):
        assert watts_to_dbm(0.001) == pytest.approx(0.0, abs=1e-12)

    def test_80_watts(self):
        # independent evaluation of the defining formula
        assert watts_to_dbm(80.0) == pytest.approx(10.0 * math.log10(80000.0),
                                                   abs=1e-12)
        assert watts_to_dbm(80.0) == pytest.approx(49.0309, abs=1e-4)

    def test_round_trip(self):
        for w in (0.001, 0.02, 1.0, 20.0, 80.0, 500.0):
            assert dbm_to_watts(watts_to_dbm(w)) == pytest.approx(w, rel=1e-9)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            watts_to_dbm(0.0)
        with pytest.raises(ValueError):
            watts_to_dbm(-3.0)


class TestAntennaValidation:
    def test_id_must_start_at_one(self):
        with pytest.raises(ConfigError):
            Antenna(id=0, p=40.0, p_max=49.0, r=100)

    def test_pilot_above_rated_rejected(self):
        with pytest.raises(ConfigError):
            Antenna(id=1, p=50.0, p_max=49.0, r=100)

    def test_prb_must_be_positive_integer(self):
        with pytest.raises(ConfigError):
            Antenna(id=1, p=40.0, p_max=49.0, r=0)
        with pytest.raises(ConfigError):
            Antenna(id=1, p=40.0, p_max=49.0, r=12.5)

    def test_vectors(self):
        topo = make_topo(3, p=41.0, p_max=55.0, r=64)
        np.testing.assert_array_equal(topo.initial_powers(), [41.0] * 3)
        np.testing.assert_array_equal(topo.p_max_vector(), [55.0] * 3)
        np.testing.assert_array_equal(topo.prb_vector(), [64.0] * 3)

    def test_positions_require_all_set(self):
        ants = (Antenna(1, 40.0, 49.0, 10, position=(0.0, 0.0)),
                Antenna(2, 40.0, 49.0, 10))
        topo = NetworkTopology(ants, (frozenset({2}), frozenset({1})))
        with pytest.raises(ConfigError):
            topo.positions()


class TestTopologyValidation:
    def test_ids_must_be_dense(self):
        ants = (Antenna(1, 40.0, 49.0, 10), Antenna(3, 40.0, 49.0, 10))
        with pytest.raises(ConfigError):
            NetworkTopology(ants, (frozenset(), frozenset()))

    def test_self_loop_rejected(self):
        with pytest.raises(ConfigError):
            make_topo(2, neighbours=[{1}, {1}])

    def test_neighbour_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            make_topo(2, neighbours=[{5}, {1}])

    def test_two_mutual_neighbours_connected(self):
        rep = validate_topology(make_topo(2, neighbours=[{2}, {1}]))
        assert rep.strongly_connected
        assert rep.symmetry_violations == ()
        assert rep.isolated == ()
        assert rep.ok

    def test_asymmetric_pair_reported(self):
        rep = validate_topology(make_topo(3, neighbours=[{2}, set(), set()]))
        assert (1, 2) in rep.symmetry_violations
        assert not rep.ok

    def test_ring_of_20_matches_bfs_oracle(self):
        n = 20
        neigh = [{(i % n) + 1, ((i - 2) % n) + 1} for i in range(1, n + 1)]
        topo = make_topo(n, neighbours=neigh)

        # breadth-first sweep over the declared relation
        seen = {1}
        frontier = [1]
        while frontier:
            nxt = []
            for v in frontier:
                for w in neigh[v - 1]:
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
            frontier = nxt
        assert len(seen) == n

        rep = validate_topology(topo)
        assert rep.strongly_connected
        assert rep.ok

    def test_isolated_antenna_reported(self):
        rep = validate_topology(make_topo(3, neighbours=[{2}, {1}, set()]))
        assert rep.isolated == (3,)
        assert not rep.strongly_connected

    def test_single_antenna_is_fine(self):
        rep = validate_topology(make_topo(1))
        assert rep.ok

    def test_symmetrize_closes_relation(self):
        topo = symmetrize(make_topo(3, neighbours=[{2}, {3}, set()]))
        assert validate_topology(topo).symmetry_violations == ()
        assert topo.neighbours[1] == frozenset({1, 3})


class TestSimulationClock:
    def test_defaults(self):
        clock = SimulationClock()
        assert clock.k == 1 and clock.T == 3600.0 and clock.H == 1.0

    def test_period_index_starts_at_one(self):
        with pytest.raises(ConfigError):
            SimulationClock(k=0)

    def test_t_must_be_multiple_of_h(self):
        SimulationClock(T=10.0, H=2.5)  # fine: ratio 4
        with pytest.raises(ConfigError):
            SimulationClock(T=10.0, H=3.0)

    def test_positive_durations(self):
        with pytest.raises(ConfigError):
            SimulationClock(T=-1.0)
        with pytest.raises(ConfigError):
            SimulationClock(H=0.0)


class TestAlgorithmConfig:
    def test_defaults(self):
        cfg = AlgorithmConfig()
        assert cfg.epsilon == 0.1
        assert cfg.gamma == 1.0
        assert cfg.tau == 0.01
        assert cfg.delta_p == 1.0
        assert cfg.f_con == 0.999
        assert cfg.over_busy_threshold == 0.7
        assert cfg.top_m == 6

    @pytest.mark.parametrize("field,value", [
        ("epsilon", 0.0), ("gamma", 0.0), ("gamma", 1.5), ("tau", -0.1),
        ("delta_p", 0.0), ("n_s", 0), ("f_con", 0.0), ("f_con", 1.1),
        ("target_mode", "median"), ("top_m", 0), ("coverage_mode", "magic"),
        ("coverage_sample", -1), ("svd_cutoff", 1.0), ("svd_cutoff", -0.1),
    ])
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(ConfigError):
            AlgorithmConfig(**{field: value})

    def test_overrides_keep_validation(self):
        cfg = AlgorithmConfig().with_overrides(gamma=0.5, tau=0.0)
        assert cfg.gamma == 0.5 and cfg.tau == 0.0
        with pytest.raises(ConfigError):
            AlgorithmConfig().with_overrides(gamma=2.0)


class TestTopologySerialization:
    def test_round_trip(self):
        topo = make_topo(3, neighbours=[{2}, {1, 3}, {2}], p=41.0, p_max=55.0)
        again = topology_from_dict(topology_to_dict(topo))
        assert again == topo

    def test_unit_tags_required(self):
        d = topology_to_dict(make_topo(1))
        d["antennas"][0]["power"] = 40.0  # bare number, no unit
        with pytest.raises(ConfigError):
            topology_from_dict(d)

    def test_watt_entries_converted(self):
        d = {"antennas": [{"id": 1, "power": {"value": 1.0, "unit": "watts"},
                           "p_max": {"value": 80.0, "unit": "watts"},
                           "prb": 100}],
             "neighbours": {}}
        topo = topology_from_dict(d)
        assert topo.antennas[0].p == pytest.approx(30.0)
        assert topo.antennas[0].p_max == pytest.approx(watts_to_dbm(80.0))

    def test_from_json_file(self, tmp_path):
        import json

        topo = make_topo(2, neighbours=[{2}, {1}])
        path = tmp_path / "topo.json"
        path.write_text(json.dumps(topology_to_dict(topo)))
        assert topology_from_json(path) == topo

    def test_missing_antennas_block(self):
        with pytest.raises(ConfigError):
            topology_from_dict({"neighbours": {}})
