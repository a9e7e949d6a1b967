import struct

import numpy as np
import pytest

from glira.data import (
    Dataset,
    Example,
    augment,
    augment_batch,
    example_seed,
    load_idx_dataset,
    load_jsonl,
    make_synthetic,
    read_idx,
    sample_shadow_subset,
    save_jsonl,
    split_experiment,
    write_idx,
)
from glira.errors import ConfigError, ShapeError


class TestMakeSynthetic:
    def test_one_per_class(self):
        ds = make_synthetic(2, 2, 1, 0.1, seed=7)
        assert len(ds) == 2
        assert sorted(ds.labels.tolist()) == [0, 1]

    def test_deterministic(self):
        a = make_synthetic(2, 2, 1, 0.1, seed=7)
        b = make_synthetic(2, 2, 1, 0.1, seed=7)
        assert a.tobytes() == b.tobytes()

    def test_seed_matters(self):
        a = make_synthetic(3, 4, 5, 0.5, seed=1)
        b = make_synthetic(3, 4, 5, 0.5, seed=2)
        assert a.tobytes() != b.tobytes()

    @pytest.mark.parametrize("args", [(1, 2, 1, 0.1), (2, 2, 0, 0.1), (2, 2, 1, 0.0), (2, 0, 1, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            make_synthetic(*args, seed=0)

    def test_shift_moves_means(self):
        a = make_synthetic(2, 4, 2000, 0.5, seed=3)
        b = make_synthetic(2, 4, 2000, 0.5, seed=3, shift=2.0, sample_seed=9)
        delta = b.features.mean(axis=0) - a.features.mean(axis=0)
        np.testing.assert_allclose(delta, 2.0 / np.sqrt(4), atol=0.05)

    def test_rejects_non_finite(self):
        with pytest.raises(ConfigError):
            Dataset(np.array([[np.nan, 1.0]]), np.array([0]), 2)

    def test_rejects_label_out_of_range(self):
        with pytest.raises(ConfigError):
            Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)


class TestSplit:
    def setup_method(self):
        self.ds = make_synthetic(2, 2, 5, 1.0, seed=0)  # 10 examples

    def test_pool_takes_complement_when_nonmembers_in_pool(self):
        plan = split_experiment(self.ds, {"target": 4, "eval": 2}, seed=1, nonmembers_in_pool=True)
        assert len(plan.shadow_pool_ids) == 6
        assert len(plan.member_eval_ids) == len(plan.nonmember_eval_ids) == 2
        assert set(plan.nonmember_eval_ids) <= set(plan.shadow_pool_ids)

    def test_three_disjoint_parts_by_default(self):
        plan = split_experiment(self.ds, {"target": 4, "eval": 2}, seed=1)
        assert len(plan.shadow_pool_ids) == 4
        parts = [set(plan.target_train_ids), set(plan.shadow_pool_ids), set(plan.nonmember_eval_ids)]
        assert sum(len(p) for p in parts) == 10
        assert set().union(*parts) == set(range(10))

    def test_no_pool_left(self):
        with pytest.raises(ConfigError):
            split_experiment(self.ds, {"target": 10, "eval": 1}, seed=0)
        with pytest.raises(ConfigError):
            split_experiment(self.ds, {"target": 10, "eval": 1}, seed=0, nonmembers_in_pool=True)

    def test_eval_larger_than_target(self):
        with pytest.raises(ConfigError):
            split_experiment(self.ds, {"target": 2, "eval": 3}, seed=0)

    def test_deterministic(self):
        a = split_experiment(self.ds, {"target": 4, "eval": 2}, seed=5)
        b = split_experiment(self.ds, {"target": 4, "eval": 2}, seed=5)
        assert a.to_dict() == b.to_dict()


class TestShadowSubset:
    def setup_method(self):
        self.ds = make_synthetic(2, 3, 100, 1.0, seed=0)
        self.plan = split_experiment(self.ds, {"target": 60, "eval": 30}, seed=4)

    def test_exhausts_pool(self):
        sub = sample_shadow_subset(self.plan, self.ds, len(self.plan.shadow_pool_ids), 0)
        assert sorted(sub.ids.tolist()) == sorted(self.plan.shadow_pool_ids.tolist())

    def test_never_touches_target_over_100_seeds(self):
        target = set(self.plan.target_train_ids.tolist())
        for shadow_seed in range(100):
            sub = sample_shadow_subset(self.plan, self.ds, 50, shadow_seed)
            assert not target & set(sub.ids.tolist())

    def test_too_large(self):
        with pytest.raises(ConfigError):
            sample_shadow_subset(self.plan, self.ds, len(self.plan.shadow_pool_ids) + 1, 0)

    def test_deterministic(self):
        a = sample_shadow_subset(self.plan, self.ds, 40, 3)
        b = sample_shadow_subset(self.plan, self.ds, 40, 3)
        assert a.tobytes() == b.tobytes()

    def test_features_follow_ids(self):
        sub = sample_shadow_subset(self.plan, self.ds, 40, 3)
        np.testing.assert_array_equal(sub.features, self.ds.features[sub.ids])


class TestAugment:
    ex = Example(np.array([0.5, -1.0, 2.0]), 1)

    def test_single_query_is_identity(self):
        out = augment(self.ex, 1, seed=0)
        assert len(out) == 1
        np.testing.assert_array_equal(out[0].features, self.ex.features)

    def test_ten_queries_keep_label(self):
        out = augment(self.ex, 10, seed=0)
        assert len(out) == 10
        assert all(v.label == 1 for v in out)
        np.testing.assert_array_equal(out[0].features, self.ex.features)
        assert not np.array_equal(out[1].features, self.ex.features)

    def test_deterministic(self):
        a = augment(self.ex, 10, seed=3)
        b = augment(self.ex, 10, seed=3)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u.features, v.features)

    def test_sign_flip_negates_one_coordinate(self):
        out = augment(self.ex, 5, seed=1, sigma=0.0, sign_flip=True)
        for v in out[1:]:
            assert np.sum(v.features != self.ex.features) == 1
            np.testing.assert_array_equal(np.abs(v.features), np.abs(self.ex.features))

    def test_image_flips_and_shifts(self):
        img = np.arange(1, 17, dtype=float).reshape(4, 4)
        ex = Example(img.ravel(), 0)
        out = augment(ex, 20, seed=2, image_shape=(4, 4))
        for v in out[1:]:
            x = v.features.reshape(4, 4)
            candidates = [img, img[:, ::-1]]
            ok = False
            for base in candidates:
                for dy in range(-2, 3):
                    for dx in range(-2, 3):
                        shifted = np.zeros_like(base)
                        for r in range(4):
                            for c in range(4):
                                if 0 <= r - dy < 4 and 0 <= c - dx < 4:
                                    shifted[r, c] = base[r - dy, c - dx]
                        ok |= np.array_equal(shifted, x)
            assert ok

    def test_invalid(self):
        with pytest.raises(ConfigError):
            augment(self.ex, 0, seed=0)

    def test_batch_matches_single(self):
        ds = make_synthetic(2, 3, 4, 1.0, seed=0)
        batch = augment_batch(ds, 6, seed=11)
        for i in range(len(ds)):
            single = augment(ds[i], 6, example_seed(11, ds.ids[i]))
            np.testing.assert_array_equal(batch[:, i, :], np.stack([v.features for v in single]))


class TestIdx:
    def test_reads_hand_built_file(self, tmp_path):
        payload = bytes(range(24))
        raw = b"\x00\x00\x08\x03" + struct.pack(">III", 2, 3, 4) + payload
        (tmp_path / "img.idx").write_bytes(raw)
        arr = read_idx(tmp_path / "img.idx")
        assert arr.shape == (2, 3, 4) and arr.dtype == np.uint8
        assert arr.tobytes() == payload

    def test_write_read_bit_exact(self, tmp_path):
        arr = np.random.default_rng(0).integers(0, 256, size=(5, 7), dtype=np.uint8)
        write_idx(tmp_path / "a.idx", arr)
        raw = (tmp_path / "a.idx").read_bytes()
        assert raw[:4] == b"\x00\x00\x08\x02"
        assert raw[4:12] == struct.pack(">II", 5, 7)
        np.testing.assert_array_equal(read_idx(tmp_path / "a.idx"), arr)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"\x00\x00\x0d\x01" + struct.pack(">I", 1) + b"\x00" * 4)
        with pytest.raises(ShapeError):
            read_idx(tmp_path / "x")

    def test_truncated(self, tmp_path):
        (tmp_path / "x").write_bytes(b"\x00\x00\x08\x01" + struct.pack(">I", 5) + b"\x01\x02")
        with pytest.raises(ShapeError):
            read_idx(tmp_path / "x")

    def test_image_label_pair(self, tmp_path):
        rng = np.random.default_rng(1)
        imgs = rng.integers(0, 256, size=(6, 4, 4), dtype=np.uint8)
        labels = np.array([0, 1, 2, 0, 1, 2], dtype=np.uint8)
        write_idx(tmp_path / "i", imgs)
        write_idx(tmp_path / "l", labels)
        ds = load_idx_dataset(tmp_path / "i", tmp_path / "l")
        assert ds.num_classes == 3 and ds.image_shape == (4, 4)
        np.testing.assert_array_equal(ds.features, imgs.reshape(6, 16) / 255.0)
        np.testing.assert_array_equal(ds.labels, labels)


def test_jsonl_round_trip_bit_exact(tmp_path):
    ds = make_synthetic(3, 5, 4, 0.7, seed=2)
    save_jsonl(ds, tmp_path / "d.jsonl")
    back = load_jsonl(tmp_path / "d.jsonl")
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.num_classes == 3
