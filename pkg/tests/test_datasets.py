import numpy as np
import pytest

from arithmeta import datasets as ds
from arithmeta.datasets import (
    CsvFormatError,
    DomainDataset,
    SamplerState,
    load_csv,
    make_rotated_moons,
    make_shifted_regression,
    make_suite,
    rotated_moons_suite,
    sample_batch,
    sample_mixture_batch,
    save_csv,
)


class TestRotatedMoons:
    def test_angle_zero_matches_unrotated(self):
        a = make_rotated_moons(0.0, 100, 0.1, seed=3)
        b = make_rotated_moons(0.0, 100, 0.1, seed=3)
        assert a == b

    def test_ninety_degrees_rotates_unit_point(self):
        # with noise 0 the first class-0 point sits on the unit circle at angle t;
        # compare the rotated generator against manually rotating the base cloud
        base = make_rotated_moons(0.0, 50, 0.0, seed=5)
        rot = make_rotated_moons(90.0, 50, 0.0, seed=5)
        rotated = base.inputs @ np.array([[0.0, 1.0], [-1.0, 0.0]])  # (x,y)->(-y,x) transposed
        assert np.max(np.abs(rot.inputs - rotated)) <= 1e-12
        assert np.array_equal(rot.labels, base.labels)

    def test_explicit_unit_point(self):
        # a synthetic one-off: rotating (1, 0) by 90 degrees gives (0, 1)
        r = ds._rotation(90.0)
        assert np.allclose(r @ np.array([1.0, 0.0]), [0.0, 1.0], atol=1e-12)

    def test_label_balance(self):
        for n in (7, 8, 101):
            d = make_rotated_moons(30.0, n, 0.2, seed=1)
            counts = np.bincount(d.labels, minlength=2)
            assert abs(int(counts[0]) - int(counts[1])) <= 1

    def test_rotation_preserves_pairwise_distances_and_labels(self):
        rng = np.random.default_rng(0)
        a = make_rotated_moons(0.0, 80, 0.1, seed=11)
        b = make_rotated_moons(137.0, 80, 0.1, seed=11)
        assert np.array_equal(a.labels, b.labels)
        for _ in range(50):
            i, j = rng.integers(0, 80, size=2)
            da = np.linalg.norm(a.inputs[i] - a.inputs[j])
            db = np.linalg.norm(b.inputs[i] - b.inputs[j])
            assert abs(da - db) <= 1e-10

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            make_rotated_moons(0.0, 1, 0.1, seed=0)
        with pytest.raises(ValueError):
            make_rotated_moons(0.0, 10, -0.1, seed=0)


class TestShiftedRegression:
    def test_noiseless_labels_are_linear(self):
        d = make_shifted_regression([1.0, 0.0], 0.0, 50, 0.0, seed=2)
        assert np.max(np.abs(d.labels - d.inputs[:, 0])) == 0.0
        # the advertised mapping: w=(1,0), x=(2,5) -> y=2
        assert float(np.array([2.0, 5.0]) @ np.array([1.0, 0.0])) == 2.0

    def test_mean_shift_between_domains(self):
        n, noise = 400, 0.3
        lo = make_shifted_regression([0.5, -0.2], -1.0, n, noise, seed=9)
        hi = make_shifted_regression([0.5, -0.2], +1.0, n, noise, seed=9)
        diff = float(hi.labels.mean() - lo.labels.mean())
        assert abs(diff - 2.0) <= 3.0 * noise / np.sqrt(n)

    def test_same_seed_identical(self):
        a = make_shifted_regression([1.0], 0.5, 30, 0.1, seed=4)
        b = make_shifted_regression([1.0], 0.5, 30, 0.1, seed=4)
        assert a == b


class TestSampler:
    def test_full_batch_is_permutation(self):
        d = make_rotated_moons(0.0, 40, 0.1, seed=0)
        state = SamplerState(0)
        batch = sample_batch(state, d, 40)
        order = np.lexsort(batch.inputs.T)
        direct = np.lexsort(d.inputs.T)
        assert np.array_equal(batch.inputs[order], d.inputs[direct])
        assert batch.domain_id == d.domain_id

    def test_within_epoch_batches_disjoint(self):
        d = make_rotated_moons(0.0, 40, 0.1, seed=0)
        state = SamplerState(1)
        b1 = sample_batch(state, d, 20)
        b2 = sample_batch(state, d, 20)
        seen = {tuple(row) for row in b1.inputs}
        assert all(tuple(row) not in seen for row in b2.inputs)

    def test_replay_from_saved_state(self):
        d = make_rotated_moons(0.0, 30, 0.1, seed=0)
        state = SamplerState(5)
        sample_batch(state, d, 7)
        snapshot = state.copy()
        seq_a = [sample_batch(state, d, 7).inputs for _ in range(6)]
        seq_b = [sample_batch(snapshot, d, 7).inputs for _ in range(6)]
        for a, b in zip(seq_a, seq_b):
            assert np.array_equal(a, b)

    def test_oversized_batch_rejected(self):
        d = make_rotated_moons(0.0, 10, 0.1, seed=0)
        with pytest.raises(ValueError, match="exceeds"):
            sample_batch(SamplerState(0), d, 11)

    def test_mixture_frequency_uniform(self):
        suite = rotated_moons_suite(n_per_domain=100, seed=0)
        state = SamplerState(3)
        n_draws, n_domains = 10_000, 3
        counts = np.zeros(n_domains)
        drawn = 0
        while drawn < n_draws:
            batch = sample_mixture_batch(state, suite.train_sets, 50)
            # recover the per-domain composition by matching rows
            for dom, tr in enumerate(suite.train_sets):
                rows = {tuple(r) for r in tr.inputs}
                counts[dom] += sum(tuple(r) in rows for r in batch.inputs)
            drawn += 50
        p = 1.0 / n_domains
        sigma = np.sqrt(n_draws * p * (1 - p))
        assert np.all(np.abs(counts - n_draws * p) <= 3 * sigma)


class TestSuite:
    def test_split_disjoint_and_covering(self):
        suite = rotated_moons_suite(n_per_domain=50, val_fraction=0.2, seed=7)
        for full, tr, va in zip(suite.sources, suite.train_sets, suite.val_sets):
            assert va.n == round(0.2 * 50)
            assert tr.n + va.n == full.n
            all_rows = {tuple(r) for r in full.inputs}
            tr_rows = {tuple(r) for r in tr.inputs}
            va_rows = {tuple(r) for r in va.inputs}
            assert tr_rows | va_rows == all_rows
            assert not (tr_rows & va_rows)

    def test_split_deterministic(self):
        a = rotated_moons_suite(seed=3)
        b = rotated_moons_suite(seed=3)
        for ta, tb in zip(a.train_sets, b.train_sets):
            assert ta == tb

    def test_rejects_overlapping_ids(self):
        d0 = make_rotated_moons(0.0, 10, 0.1, seed=0, domain_id=0)
        d1 = make_rotated_moons(90.0, 10, 0.1, seed=1, domain_id=0)
        with pytest.raises(ValueError, match="disjoint"):
            make_suite([d0], [d1])

    def test_rejects_empty_sources(self):
        d1 = make_rotated_moons(90.0, 10, 0.1, seed=1, domain_id=1)
        with pytest.raises(ValueError, match="source"):
            make_suite([], [d1])


class TestCsvRoundTrip:
    def test_moons_roundtrip_bit_equal(self, tmp_path):
        d = make_rotated_moons(42.0, 100, 0.15, seed=9, domain_id=3)
        path = tmp_path / "moons.csv"
        save_csv(d, path)
        loaded = load_csv(path)
        assert loaded == d
        assert loaded.labels.dtype == d.labels.dtype

    def test_regression_roundtrip(self, tmp_path):
        d = make_shifted_regression([0.3, -1.7], 0.25, 20, 0.05, seed=1, domain_id=2)
        path = tmp_path / "reg.csv"
        save_csv(d, path)
        assert load_csv(path) == d

    def test_wrong_column_count_names_line(self, tmp_path):
        d = make_rotated_moons(0.0, 5, 0.1, seed=0)
        path = tmp_path / "bad.csv"
        save_csv(d, path)
        lines = path.read_text().splitlines()
        lines[3] = lines[3] + ",99"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CsvFormatError, match=":4:"):
            load_csv(path)

    def test_empty_data_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        meta = '# {"domain_id": 0, "descriptor": {}, "label_kind": "int", "dim": 2, "n": 0}'
        path.write_text(meta + "\n")
        with pytest.raises(CsvFormatError, match="no data rows"):
            load_csv(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "nohdr.csv"
        path.write_text("1.0,2.0,0\n")
        with pytest.raises(CsvFormatError, match=":1:"):
            load_csv(path)
