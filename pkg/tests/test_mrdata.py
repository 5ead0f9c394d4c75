"""Measurement-record batches: generation, domain switch, redundancy
deletion, ranked tables, sampling and persistence."""

import numpy as np
import pytest
from scipy import stats

from breathenet.mrdata import (
    MrRecord,
    build_per_antenna_tables,
    co_neighbours,
    dataset_from_records,
    generate_mr,
    load_csv,
    remove_redundant,
    sample_for_jacobian,
    save_csv,
    subsample,
    to_attenuation,
    to_signal,
)
from breathenet.traffic import UserBatch, assign_users


def batch_from_attenuation(att):
    att = np.asarray(att, dtype=float)
    return UserBatch(np.zeros((len(att), 2)), att,
                     np.ones(len(att), dtype=np.int64), period=1)


def records_as_tuples(ds):
    out = []
    for idx in range(len(ds)):
        out.append(ds.record(idx).entries)
    return out


def brute_force_survivors(records):
    """O(K^2) reference for redundancy deletion.

    Record b dies when some other record a lists a subset of b's antennas
    with entrywise >= values on the shared ones; for fully identical records
    only the earliest survives.
    """
    parsed = [dict(r.entries) for r in records]
    keep = []
    for b, rb in enumerate(parsed):
        doomed = False
        for a, ra in enumerate(parsed):
            if a == b or not set(ra) <= set(rb):
                continue
            if not all(ra[i] >= rb[i] for i in ra):
                continue
            identical = set(ra) == set(rb) and all(ra[i] == rb[i] for i in ra)
            if identical:
                if a < b:
                    doomed = True
                    break
            else:
                doomed = True
                break
        if not doomed:
            keep.append(b)
    return keep


class TestGeneration:
    def test_single_user_two_antennas(self):
        users = batch_from_attenuation([[10.0, 20.0]])
        ds = generate_mr(users, np.array([30.0, 30.0]), top_m=2)
        assert records_as_tuples(ds) == [((1, 20.0), (2, 10.0))]
        assert ds.domain == "signal"
        np.testing.assert_array_equal(ds.recorded_powers, [30.0, 30.0])

    def test_top_m_one_keeps_serving_only(self):
        rng = np.random.default_rng(0)
        users = batch_from_attenuation(rng.uniform(60, 110, size=(200, 4)))
        p = np.array([40.0, 41.0, 39.0, 40.0])
        ds = generate_mr(users, p, top_m=1)
        assert ds.top_m == 1
        np.testing.assert_array_equal(ds.serving(), assign_users(users, p))

    def test_serving_agrees_with_assignment(self):
        rng = np.random.default_rng(1)
        users = batch_from_attenuation(rng.uniform(60, 110, size=(1000, 5)))
        p = rng.uniform(38, 44, size=5)
        ds = generate_mr(users, p, top_m=3)
        np.testing.assert_array_equal(ds.serving(), assign_users(users, p))

    def test_entries_sorted_descending_with_id_tie_break(self):
        users = batch_from_attenuation([[10.0, 10.0, 5.0]])
        ds = generate_mr(users, np.array([30.0, 30.0, 30.0]), top_m=3)
        assert records_as_tuples(ds) == [((3, 25.0), (1, 20.0), (2, 20.0))]

    def test_top_m_wider_than_network_is_clipped(self):
        users = batch_from_attenuation([[10.0, 12.0]])
        ds = generate_mr(users, np.array([30.0, 30.0]), top_m=6)
        assert ds.top_m == 2

    def test_record_validation(self):
        with pytest.raises(ValueError):
            MrRecord(())
        with pytest.raises(ValueError):
            MrRecord(((1, 5.0), (1, 4.0)))


class TestDomainSwitch:
    def test_single_entry(self):
        ds = dataset_from_records([MrRecord(((1, 20.0),))], "signal", 1)
        att = to_attenuation(ds, np.array([30.0]))
        assert records_as_tuples(att) == [((1, 10.0),)]
        assert att.domain == "attenuation"

    def test_empty_batch(self):
        ds = dataset_from_records([], "signal", 2)
        att = to_attenuation(ds, np.array([30.0, 30.0]))
        assert len(att) == 0

    def test_round_trip_identity(self):
        rng = np.random.default_rng(2)
        users = batch_from_attenuation(rng.uniform(60, 110, size=(300, 4)))
        p = np.array([41.0, 43.0, 40.0, 42.0])
        ds = generate_mr(users, p, top_m=3)
        back = to_signal(to_attenuation(ds, p), p)
        np.testing.assert_array_equal(back.ids, ds.ids)
        np.testing.assert_allclose(back.values, ds.values, atol=1e-12)

    def test_double_switch_rejected(self):
        ds = dataset_from_records([MrRecord(((1, 20.0),))], "signal", 1)
        att = to_attenuation(ds, np.array([30.0]))
        with pytest.raises(ValueError):
            to_attenuation(att, np.array([30.0]))
        with pytest.raises(ValueError):
            to_signal(ds, np.array([30.0]))


class TestRedundancyDeletion:
    def att_ds(self, records, n=4):
        return dataset_from_records([MrRecord(tuple(r)) for r in records],
                                    "attenuation", n)

    def test_subset_with_higher_attenuation_deletes(self):
        # covering {1: 5} forces coverage of {1: 4, 2: 9}
        ds = remove_redundant(self.att_ds([[(1, 5.0)], [(1, 4.0), (2, 9.0)]]))
        assert records_as_tuples(ds) == [((1, 5.0),)]
        assert ds.raw_count == 2

    def test_identical_records_keep_earliest(self):
        ds = remove_redundant(self.att_ds([[(1, 5.0), (2, 7.0)],
                                           [(1, 5.0), (2, 7.0)]]))
        assert len(ds) == 1

    def test_incomparable_records_both_survive(self):
        ds = remove_redundant(self.att_ds([[(1, 5.0), (2, 3.0)],
                                           [(1, 4.0), (2, 9.0)]]))
        assert len(ds) == 2

    def test_matches_brute_force_on_random_batch(self):
        rng = np.random.default_rng(33)
        records = []
        for _ in range(200):
            size = int(rng.integers(1, 4))
            ids = rng.choice(4, size=size, replace=False) + 1
            # coarse grid so subset/equality cases actually occur
            vals = rng.integers(0, 4, size=size).astype(float)
            records.append(MrRecord(tuple(zip(ids.tolist(), vals.tolist()))))
        ds = self.att_ds([r.entries for r in records])
        got = remove_redundant(ds)
        expected = brute_force_survivors(records)
        assert records_as_tuples(got) == [records[i].entries for i in expected]

    def test_idempotent(self):
        rng = np.random.default_rng(34)
        records = []
        for _ in range(120):
            size = int(rng.integers(1, 4))
            ids = rng.choice(4, size=size, replace=False) + 1
            vals = rng.integers(0, 3, size=size).astype(float)
            records.append(tuple(zip(ids.tolist(), vals.tolist())))
        once = remove_redundant(self.att_ds(records))
        twice = remove_redundant(once)
        assert records_as_tuples(once) == records_as_tuples(twice)

    def test_deletion_is_coverage_sound(self):
        # whenever every survivor is covered, every deleted record is too
        rng = np.random.default_rng(35)
        records = []
        for _ in range(150):
            size = int(rng.integers(1, 4))
            ids = rng.choice(3, size=size, replace=False) + 1
            vals = rng.integers(0, 5, size=size).astype(float)
            records.append(tuple(zip(ids.tolist(), vals.tolist())))
        ds = self.att_ds(records, n=3)
        kept = set(records_as_tuples(remove_redundant(ds)))

        def covered(rec, reach):
            return any(v <= reach[aid - 1] for aid, v in rec)

        for trial in range(50):
            reach = rng.uniform(-1.0, 5.0, size=3)
            if all(covered(r, reach) for r in kept):
                assert all(covered(r, reach) for r in records)

    def test_signal_domain_rejected(self):
        ds = dataset_from_records([MrRecord(((1, 20.0),))], "signal", 1)
        with pytest.raises(ValueError):
            remove_redundant(ds)


class TestPerAntennaTables:
    def test_two_records_sorted_by_attenuation(self):
        ds = dataset_from_records([MrRecord(((1, 7.0),)), MrRecord(((1, 3.0),))],
                                  "attenuation", 2)
        ds = build_per_antenna_tables(ds)
        idx, vals = ds.per_antenna[1]
        np.testing.assert_array_equal(idx, [1, 0])
        np.testing.assert_array_equal(vals, [3.0, 7.0])

    def test_unmentioned_antenna_has_no_table(self):
        ds = build_per_antenna_tables(
            dataset_from_records([MrRecord(((1, 7.0),))], "attenuation", 3))
        assert 2 not in ds.per_antenna and 3 not in ds.per_antenna

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(4)
        users = batch_from_attenuation(rng.uniform(60, 110, size=(500, 5)))
        p = np.array([40.0] * 5)
        ds = build_per_antenna_tables(to_attenuation(generate_mr(users, p, 3), p))
        for aid, (idx, vals) in ds.per_antenna.items():
            pairs = []
            for row in range(len(ds)):
                hit = np.flatnonzero(ds.ids[row] == aid)
                if len(hit):
                    pairs.append((float(ds.values[row, hit[0]]), row))
            pairs.sort()
            np.testing.assert_array_equal(idx, [r for _, r in pairs])
            np.testing.assert_array_equal(vals, [v for v, _ in pairs])

    def test_signal_domain_rejected(self):
        ds = dataset_from_records([MrRecord(((1, 20.0),))], "signal", 1)
        with pytest.raises(ValueError):
            build_per_antenna_tables(ds)


class TestJacobianSampling:
    def serving_ds(self, values):
        recs = [MrRecord(((1, float(v)),)) for v in values]
        return dataset_from_records(recs, "signal", 1)

    def test_small_set_returned_whole(self):
        ds = self.serving_ds([-70.0, -72.0, -68.0])
        np.testing.assert_array_equal(sample_for_jacobian(ds, 1, 10), [0, 1, 2])

    def test_exact_budget_returns_full_set(self):
        ds = self.serving_ds([-70.0, -72.0, -68.0])
        np.testing.assert_array_equal(sample_for_jacobian(ds, 1, 3), [0, 1, 2])

    def test_subsample_is_distribution_faithful(self):
        rng = np.random.default_rng(6)
        ds = self.serving_ds(rng.normal(-70.0, 5.0, size=10000))
        rows = sample_for_jacobian(ds, 1, 100, seed=9)
        assert len(rows) == 100
        full = ds.values[:, 0]
        ks = stats.ks_2samp(full, ds.values[rows, 0])
        assert ks.pvalue > 0.01

    def test_deterministic_per_antenna(self):
        rng = np.random.default_rng(7)
        ds = self.serving_ds(rng.normal(-70.0, 5.0, size=500))
        a = sample_for_jacobian(ds, 1, 50, seed=3)
        b = sample_for_jacobian(ds, 1, 50, seed=3)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, sample_for_jacobian(ds, 1, 50, seed=4))


class TestCoNeighbours:
    def test_co_occurrence(self):
        ds = dataset_from_records(
            [MrRecord(((1, -70.0), (2, -75.0))), MrRecord(((3, -80.0),))],
            "signal", 3)
        sets = co_neighbours(ds)
        assert sets == [{2}, {1}, set()]

    def test_symmetric_by_construction(self):
        rng = np.random.default_rng(8)
        users = batch_from_attenuation(rng.uniform(60, 110, size=(400, 6)))
        sets = co_neighbours(generate_mr(users, np.full(6, 40.0), 3))
        for i, peers in enumerate(sets, start=1):
            for j in peers:
                assert i in sets[j - 1]


class TestCsvRoundTrip:
    def test_save_load_identity(self, tmp_path):
        rng = np.random.default_rng(10)
        users = batch_from_attenuation(rng.uniform(60, 110, size=(50, 3)))
        p = np.array([40.0, 42.0, 39.0])
        ds = generate_mr(users, p, top_m=2)
        path = tmp_path / "mr.csv"
        save_csv(ds, path)
        loaded, report = load_csv(path, n_antennas=3)
        assert report.kept == 50 and report.rejected == 0
        np.testing.assert_array_equal(loaded.ids, ds.ids)
        np.testing.assert_allclose(loaded.values, ds.values, atol=1e-12)

    def test_rejects_malformed_records(self, tmp_path):
        path = tmp_path / "mr.csv"
        rows = [
            "record_id,rank,antenna_id,value,domain",
            "1,1,1,-70.0,signal",          # fine
            "2,1,1,-70.0,signal",          # duplicate antenna id
            "2,2,1,-75.0,signal",
            "3,1,9,-70.0,signal",          # out of range
            "4,1,1,nan,signal",            # non-finite
            "5,1,1,-80.0,signal",          # first entry not the strongest
            "5,2,2,-70.0,signal",
        ]
        path.write_text("\n".join(rows) + "\n")
        ds, report = load_csv(path, n_antennas=3)
        assert report.kept == 1 and report.rejected == 4
        assert records_as_tuples(ds) == [((1, -70.0),)]

    def test_attenuation_batch_needs_powers(self, tmp_path):
        path = tmp_path / "mr.csv"
        path.write_text("record_id,rank,antenna_id,value,domain\n"
                        "1,1,1,10.0,attenuation\n")
        with pytest.raises(ValueError):
            load_csv(path, n_antennas=1)
        ds, report = load_csv(path, n_antennas=1, powers=np.array([30.0]))
        assert report.kept == 1

    def test_warns_when_nothing_valid(self, tmp_path):
        path = tmp_path / "mr.csv"
        path.write_text("record_id,rank,antenna_id,value,domain\n"
                        "1,1,7,10.0,signal\n")
        with pytest.warns(UserWarning):
            load_csv(path, n_antennas=2)


class TestSubsample:
    def make(self, k):
        rng = np.random.default_rng(12)
        users = batch_from_attenuation(rng.uniform(60, 110, size=(k, 3)))
        return generate_mr(users, np.full(3, 40.0), 2)

    def test_zero_cap_keeps_all(self):
        ds = self.make(40)
        assert subsample(ds, 0) is ds

    def test_cap_above_size_keeps_all(self):
        ds = self.make(40)
        assert subsample(ds, 100) is ds

    def test_capped_subset(self):
        ds = self.make(200)
        small = subsample(ds, 50, seed=1)
        assert len(small) == 50
        rows = {tuple(r) for r in ds.ids.tolist()}
        assert all(tuple(r) in rows for r in small.ids.tolist())
        again = subsample(ds, 50, seed=1)
        np.testing.assert_array_equal(small.ids, again.ids)
