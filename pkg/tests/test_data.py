import numpy as np
import numpy.testing as npt
import pytest

from heteroiot import data as D


def make_dataset(sequences, labels, names=None):
    labels = np.asarray(labels)
    names = names or [f"c{i}" for i in range(labels.max() + 1)]
    return D.Dataset(np.asarray(sequences, dtype=float), labels, names)


class TestCsvRoundTrip:
    def test_load_basic(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id,label,v0,v1,v2\n0,temp,1.0,2.0,3.0\n1,hum,4.0,5.0,6.0\n2,temp,7.0,8.0,9.0\n")
        ds = D.load_csv(p)
        assert ds.n == 3 and ds.seq_len == 3
        assert ds.class_names == ["temp", "hum"]  # first-seen order
        npt.assert_array_equal(ds.labels, [0, 1, 0])
        assert not ds.has_missing()

    def test_missing_cell_marks_mask(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id,label,v0,v1,v2\n0,a,1,2,3\n1,a,4,,6\n")
        ds = D.load_csv(p)
        mask = ds.missing_mask
        assert mask.sum() == 1 and mask[1, 1]

    def test_ragged_row_rejected_with_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id,label,v0,v1,v2\n0,a,1,2,3\n1,a,1,2\n2,a,3,4,5\n")
        with pytest.raises(D.DatasetFormatError, match=r":3:"):
            D.load_csv(p)

    def test_bad_number_rejected_with_position(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id,label,v0,v1\n0,a,1,2\n1,a,x,2\n")
        with pytest.raises(D.DatasetFormatError, match=r":3: column v0"):
            D.load_csv(p)

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("foo,bar,v0\n0,a,1\n")
        with pytest.raises(D.DatasetFormatError, match="header"):
            D.load_csv(p)

    def test_write_read_value_identical(self, tmp_path):
        rng = np.random.default_rng(8)
        ds = make_dataset(rng.normal(size=(5, 7)) * np.pi, [0, 1, 0, 1, 1], ["x", "y"])
        directory = D.save_dataset(tmp_path / "ds", ds)
        back = D.load_dataset(directory)
        assert back.sequences.tobytes() == ds.sequences.tobytes()
        npt.assert_array_equal(back.labels, ds.labels)
        assert back.class_names == ds.class_names

    def test_missing_survives_round_trip(self, tmp_path):
        seq = np.array([[1.0, np.nan, 3.0], [4.0, 5.0, np.nan]])
        ds = make_dataset(seq, [0, 1], ["a", "b"])
        back = D.load_dataset(D.save_dataset(tmp_path / "ds", ds))
        npt.assert_array_equal(np.isnan(back.sequences), np.isnan(seq))

    def test_manifest_hash_detects_corruption(self, tmp_path):
        ds = make_dataset(np.ones((2, 3)), [0, 1], ["a", "b"])
        directory = D.save_dataset(tmp_path / "ds", ds)
        data = (directory / "data.csv").read_text().replace("1.0", "2.0")
        (directory / "data.csv").write_text(data)
        with pytest.raises(D.DatasetFormatError, match="hash"):
            D.load_dataset(directory)

    def test_dataset_hash_deterministic(self):
        ds1 = D.synth_benchmark(classes=3, n_per_class=5, t=16, seed=9)
        ds2 = D.synth_benchmark(classes=3, n_per_class=5, t=16, seed=9)
        assert D.dataset_hash(ds1) == D.dataset_hash(ds2)


class TestImputation:
    def test_class_time_mean(self):
        seq = np.array([[10.0, 1.0], [np.nan, 2.0], [14.0, 3.0], [100.0, 4.0]])
        ds = make_dataset(seq, [0, 0, 0, 1], ["a", "b"])
        out = D.impute_mean(ds)
        assert out.sequences[1, 0] == 12.0  # mean of 10, 14 within class a

    def test_no_missing_is_identity(self):
        rng = np.random.default_rng(1)
        ds = make_dataset(rng.normal(size=(4, 5)), [0, 0, 1, 1])
        out = D.impute_mean(ds)
        npt.assert_array_equal(out.sequences, ds.sequences)

    def test_whole_slot_missing_falls_back_to_class_mean(self):
        seq = np.array([[np.nan, 4.0, 6.0], [np.nan, 6.0, 4.0], [9.0, 9.0, 9.0]])
        ds = make_dataset(seq, [0, 0, 1], ["a", "b"])
        out = D.impute_mean(ds)
        # slot (class a, v0) is fully missing; class a overall mean is 5
        assert out.sequences[0, 0] == 5.0 and out.sequences[1, 0] == 5.0

    def test_never_alters_observed_cells(self):
        rng = np.random.default_rng(2)
        seq = rng.normal(size=(6, 8))
        holes = rng.random(seq.shape) < 0.3
        seq_missing = seq.copy()
        seq_missing[holes] = np.nan
        ds = make_dataset(seq_missing, [0, 0, 0, 1, 1, 1])
        out = D.impute_mean(ds)
        npt.assert_array_equal(out.sequences[~holes], seq[~holes])
        assert not out.has_missing()

    def test_leak_free_stats_transfer(self):
        train = make_dataset([[1.0, 2.0], [3.0, 2.0]], [0, 0], ["a"])
        test = make_dataset([[np.nan, 5.0]], [0], ["a"])
        stats = D.fit_impute_stats(train)
        out = D.apply_impute(test, stats)
        assert out.sequences[0, 0] == 2.0  # train slot mean, not test's own


class TestTruncate:
    def test_to_shortest(self):
        seqs = [np.arange(500.0), np.arange(445.0), np.arange(460.0)]
        ds = D.truncate_to_min(seqs, [0, 1, 2], ["a", "b", "c"])
        assert ds.seq_len == 445

    def test_equal_lengths_identity(self):
        seqs = [np.arange(5.0), np.arange(5.0) + 1]
        ds = D.truncate_to_min(seqs, [0, 1], ["a", "b"])
        assert ds.seq_len == 5
        npt.assert_array_equal(ds.sequences[1], np.arange(5.0) + 1)

    def test_keeps_head(self):
        ds = D.truncate_to_min([np.array([1.0, 2.0, 3.0]), np.array([9.0, 8.0])],
                               [0, 1], ["a", "b"])
        npt.assert_array_equal(ds.sequences[0], [1.0, 2.0])


class TestStratifiedSplit:
    def test_balanced_70_30(self):
        ds = D.synth_benchmark(classes=8, n_per_class=125, t=24, seed=1)
        train, test = D.stratified_split(ds, D.SplitSpec(seed=100))
        assert train.n == 700 and test.n == 300
        counts = train.class_counts()
        assert counts.min() >= 87 and counts.max() <= 88

    def test_class_of_ten(self):
        rng = np.random.default_rng(0)
        ds = make_dataset(rng.normal(size=(10, 4)), [0] * 10, ["only"])
        train, test = D.stratified_split(ds)
        assert train.n == 7 and test.n == 3

    def test_seed_determinism_and_divergence(self):
        ds = D.synth_benchmark(classes=4, n_per_class=20, t=12, seed=3)
        a1, b1 = D.stratified_split(ds, D.SplitSpec(seed=100))
        a2, b2 = D.stratified_split(ds, D.SplitSpec(seed=100))
        a3, _ = D.stratified_split(ds, D.SplitSpec(seed=101))
        assert D.dataset_hash(a1) == D.dataset_hash(a2)
        assert D.dataset_hash(b1) == D.dataset_hash(b2)
        assert D.dataset_hash(a1) != D.dataset_hash(a3)

    def test_disjoint_and_complete(self):
        ds = D.synth_benchmark(classes=3, n_per_class=11, t=8, seed=5)
        train, test = D.stratified_split(ds)
        combined = np.concatenate([train.sequences, test.sequences])
        assert combined.shape[0] == ds.n
        # every original row appears exactly once
        orig = {row.tobytes() for row in ds.sequences}
        joined = [row.tobytes() for row in combined]
        assert len(joined) == len(set(joined)) and set(joined) == orig

    def test_single_sample_class_rejected(self):
        ds_seq = np.vstack([np.zeros((3, 4)), np.ones((1, 4))])
        ds = make_dataset(ds_seq, [0, 0, 0, 1], ["a", "b"])
        with pytest.raises(ValueError, match="2 samples"):
            D.stratified_split(ds)


class TestBsmote:
    @staticmethod
    def imbalanced_fixture(n_major=78, n_minor=14, t=12, seed=42):
        rng = np.random.default_rng(seed)
        major = rng.normal(0.0, 1.0, size=(n_major, t))
        # minority overlaps the majority cloud so danger samples exist
        minor = rng.normal(0.8, 1.0, size=(n_minor, t))
        seqs = np.vstack([major, minor])
        labels = np.array([0] * n_major + [1] * n_minor)
        return D.Dataset(seqs, labels, ["major", "minor"])

    def test_counts_equalized(self):
        ds = self.imbalanced_fixture()
        out, report = D.bsmote_oversample(ds, D.SmoteConfig(seed=1))
        npt.assert_array_equal(out.class_counts(), [78, 78])
        assert len(report.parents) == 64

    def test_synthetics_on_parent_segment(self):
        ds = self.imbalanced_fixture()
        out, report = D.bsmote_oversample(ds, D.SmoteConfig(seed=2))
        for row, (p, q) in zip(out.sequences[ds.n:], report.parents):
            lo = np.minimum(ds.sequences[p], ds.sequences[q])
            hi = np.maximum(ds.sequences[p], ds.sequences[q])
            assert ((row >= lo - 1e-12) & (row <= hi + 1e-12)).all()
            assert out.labels[ds.n + report.parents.index((p, q))] == ds.labels[p]

    def test_noise_never_a_parent(self):
        ds = self.imbalanced_fixture()
        # surround one minority point with a tight majority cluster so that
        # all of its m nearest neighbors belong to the other class
        ds.sequences[-1] = -50.0
        ds.sequences[:6] = -50.0 + np.linspace(0.01, 0.06, 6)[:, None]
        out, report = D.bsmote_oversample(ds, D.SmoteConfig(seed=3))
        noise = {i for i, cat in report.categories.items() if cat == "noise"}
        assert ds.n - 1 in noise
        for p, q in report.parents:
            assert p not in noise and q not in noise

    def test_all_majority_neighbors_is_noise(self):
        ds = self.imbalanced_fixture()
        ds.sequences[-1] = -50.0
        ds.sequences[:6] = -50.0 + np.linspace(0.01, 0.06, 6)[:, None]
        _, report = D.bsmote_oversample(ds, D.SmoteConfig(seed=4))
        assert report.categories[ds.n - 1] == "noise"

    def test_tiny_class_duplicates_with_warning(self):
        rng = np.random.default_rng(6)
        seqs = np.vstack([rng.normal(size=(10, 5)), rng.normal(2.0, 1.0, size=(3, 5))])
        ds = D.Dataset(seqs, np.array([0] * 10 + [1] * 3), ["a", "b"])
        with pytest.warns(UserWarning, match="duplicating"):
            out, report = D.bsmote_oversample(ds, D.SmoteConfig(seed=5))
        npt.assert_array_equal(out.class_counts(), [10, 10])
        assert report.fallbacks == ["b"]
        for p, q in report.parents:
            assert p == q

    def test_two_point_synthesis_is_convex(self):
        rng = np.random.default_rng(7)
        seqs = np.vstack([rng.normal(size=(9, 4)),
                          np.array([[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]])])
        ds = D.Dataset(seqs, np.array([0] * 9 + [1] * 2), ["a", "b"])
        with pytest.warns(UserWarning):
            out, report = D.bsmote_oversample(ds, D.SmoteConfig(k=1, m=3, seed=8))
        npt.assert_array_equal(out.class_counts(), [9, 9])

    def test_missing_values_rejected(self):
        seq = np.array([[1.0, np.nan], [1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        ds = make_dataset(seq, [0, 0, 0, 1])
        with pytest.raises(ValueError, match="missing"):
            D.bsmote_oversample(ds)


class TestAugmentation:
    def test_off_is_identity(self):
        ds = D.synth_benchmark(classes=2, n_per_class=4, t=10, seed=1)
        assert D.augment_timeseries(ds, None) is ds

    def test_default_policy_triples(self):
        ds = D.synth_benchmark(classes=2, n_per_class=5, t=10, seed=2)
        out = D.augment_timeseries(ds, D.AugmentPolicy(seed=0))
        assert out.n == 3 * ds.n
        npt.assert_array_equal(out.labels, np.concatenate([ds.labels] * 3))
        npt.assert_array_equal(out.sequences[: ds.n], ds.sequences)

    def test_jitter_statistics_over_many_draws(self):
        # one non-constant sequence jittered 1000 times: bounded by 5 sigma,
        # mean within a few standard errors
        base = np.sin(np.linspace(0, 6 * np.pi, 50)) * 2.0 + 3.0
        ds = D.Dataset(np.tile(base, (1000, 1)), np.zeros(1000, dtype=int), ["a"])
        out = D.augment_timeseries(ds, D.AugmentPolicy(seed=3))
        jitters = out.sequences[1000:2000]
        sigma = 0.05 * base.std()
        deviation = jitters - base
        assert np.abs(deviation).max() < 5 * sigma
        assert abs(deviation.mean()) < sigma / np.sqrt(deviation.size) * 5

    def test_constant_sequence_jitter_is_exact(self):
        ds = D.Dataset(np.full((2, 8), 3.0), np.array([0, 0]), ["a"])
        out = D.augment_timeseries(ds, D.AugmentPolicy(seed=4))
        npt.assert_array_equal(out.sequences[2:4], np.full((2, 8), 3.0))

    def test_scaled_copy_is_global_multiple(self):
        rng = np.random.default_rng(5)
        ds = make_dataset(rng.normal(size=(3, 6)) + 4, [0, 0, 0], ["a"])
        out = D.augment_timeseries(ds, D.AugmentPolicy(seed=6))
        scaled = out.sequences[6:9]
        ratios = scaled / ds.sequences
        for row in ratios:
            npt.assert_allclose(row, row[0], rtol=1e-12)

    def test_seeded_determinism(self):
        ds = D.synth_benchmark(classes=2, n_per_class=5, t=10, seed=2)
        a = D.augment_timeseries(ds, D.AugmentPolicy(seed=9))
        b = D.augment_timeseries(ds, D.AugmentPolicy(seed=9))
        assert a.sequences.tobytes() == b.sequences.tobytes()


class TestSynthBenchmark:
    def test_same_seed_identical(self):
        a = D.synth_benchmark(classes=8, n_per_class=6, t=32, seed=11)
        b = D.synth_benchmark(classes=8, n_per_class=6, t=32, seed=11)
        assert a.sequences.tobytes() == b.sequences.tobytes()
        npt.assert_array_equal(a.labels, b.labels)

    def test_footprint(self):
        ds = D.synth_benchmark(classes=8, n_per_class=125, t=168, seed=7)
        assert ds.n == 1000 and ds.seq_len == 168 and ds.num_classes == 8

    def test_class_mean_separation(self):
        ds = D.synth_benchmark(classes=8, n_per_class=12, t=64, seed=13)
        x, y = ds.sequences, ds.labels
        within, between = [], []
        for i in range(ds.n):
            for j in range(i + 1, ds.n):
                dist = np.linalg.norm(x[i] - x[j])
                (within if y[i] == y[j] else between).append(dist)
        assert np.mean(between) > np.mean(within)

    def test_zscore_normalization(self):
        ds = D.synth_benchmark(classes=3, n_per_class=5, t=24, seed=1)
        out = D.zscore_per_sequence(ds)
        npt.assert_allclose(out.sequences.mean(axis=1), 0.0, atol=1e-10)
        npt.assert_allclose(out.sequences.std(axis=1), 1.0, rtol=1e-6)
