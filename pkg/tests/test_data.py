"""Synthetic generator, augmentation, split, and pack format."""

import json

import numpy as np
import pytest

from hirev.data import (
    Dataset,
    GeneratorConfig,
    augment,
    augment_dataset,
    damage_level,
    generate_synthetic,
    hflip,
    load_dataset,
    render_motif,
    save_dataset,
    split_dataset,
)
from hirev.errors import CorruptManifest, DatasetIOError, InvalidCounts, TooFewSamples
from hirev.rng import stream


class TestGenerate:
    def test_counts_are_balanced(self):
        ds = generate_synthetic(4, 3, 16, seed=0)
        assert len(ds) == 4 * 5 * 3
        cells = {}
        for s in ds.samples:
            cells[(s.product_class, s.score)] = cells.get((s.product_class, s.score), 0) + 1
        assert set(cells.values()) == {3}
        assert len(cells) == 20

    def test_deterministic_in_seed(self):
        a = generate_synthetic(3, 2, 16, seed=9)
        b = generate_synthetic(3, 2, 16, seed=9)
        for sa, sb in zip(a.samples, b.samples):
            assert sa.sample_id == sb.sample_id
            assert np.array_equal(sa.image.data, sb.image.data)

    def test_different_seed_changes_damaged_images(self):
        a = generate_synthetic(3, 2, 16, seed=0)
        b = generate_synthetic(3, 2, 16, seed=1)
        diffs = [not np.array_equal(sa.image.data, sb.image.data)
                 for sa, sb in zip(a.samples, b.samples) if sa.score < 5]
        assert any(diffs)

    def test_score_five_is_pristine_motif(self):
        ds = generate_synthetic(4, 2, 32, seed=3)
        for s in ds.samples:
            if s.score == 5:
                assert damage_level(s.score) == 0.0
                motif = render_motif(s.product_class, 32)
                assert np.array_equal(s.image.data, motif)

    def test_values_stay_in_unit_range(self):
        ds = generate_synthetic(4, 2, 32, seed=4)
        for s in ds.samples:
            assert s.image.data.min() >= 0.0
            assert s.image.data.max() <= 1.0

    def test_monotone_damage(self):
        ds = generate_synthetic(4, 20, 32, seed=5)
        for c in range(4):
            motif = render_motif(c, 32)
            means = []
            for score in range(1, 6):
                imgs = [s.image.data for s in ds.samples
                        if s.product_class == c and s.score == score]
                means.append(np.mean([np.abs(i - motif).mean() for i in imgs]))
            for lower_score, higher_score in zip(means, means[1:]):
                assert lower_score >= higher_score - 1e-12

    def test_nearest_centroid_separates_classes(self):
        ds = generate_synthetic(4, 8, 32, seed=6)
        X = np.stack([s.image.data.ravel() for s in ds.samples])
        y = np.array([s.product_class for s in ds.samples])
        centroids = np.stack([X[y == c].mean(axis=0) for c in range(4)])
        pred = np.argmin(((X[:, None, :] - centroids[None]) ** 2).sum(-1), axis=1)
        assert (pred == y).mean() > 0.8

    def test_invalid_counts(self):
        with pytest.raises(InvalidCounts):
            generate_synthetic(1, 5, 16, seed=0)
        with pytest.raises(InvalidCounts):
            generate_synthetic(3, 0, 16, seed=0)

    def test_rgb_variant(self):
        ds = generate_synthetic(2, 1, 16, seed=0, channels=3)
        assert ds.samples[0].image.data.shape == (3, 16, 16)


class TestAugment:
    def test_count_zero_is_empty(self):
        ds = generate_synthetic(2, 1, 16, seed=0)
        assert augment(ds.samples[0], 0, seed=0) == []

    def test_labels_and_lineage_copied(self):
        ds = generate_synthetic(3, 2, 16, seed=1)
        parent = ds.samples[7]
        for i, child in enumerate(augment(parent, 4, seed=0)):
            assert child.product_class == parent.product_class
            assert child.score == parent.score
            assert child.origin == "augmented"
            assert child.parent_id == parent.sample_id
            assert child.sample_id == f"{parent.sample_id}-a{i:02d}"

    def test_flip_is_involution(self):
        img = stream(0, "flip").random((2, 8, 8))
        assert np.array_equal(hflip(hflip(img)), img)

    def test_augmented_images_stay_in_range_and_differ(self):
        ds = generate_synthetic(2, 1, 32, seed=2)
        parent = ds.samples[0]
        kids = augment(parent, 6, seed=3)
        for child in kids:
            assert child.image.data.min() >= 0.0
            assert child.image.data.max() <= 1.0
        assert any(not np.array_equal(c.image.data, parent.image.data) for c in kids)

    def test_deterministic_per_seed(self):
        ds = generate_synthetic(2, 1, 16, seed=4)
        a = augment(ds.samples[0], 3, seed=7)
        b = augment(ds.samples[0], 3, seed=7)
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.image.data, cb.image.data)

    def test_dataset_level_totals(self):
        ds = generate_synthetic(2, 2, 16, seed=5)
        full = augment_dataset(ds, 3)
        raws = [s for s in full.samples if s.origin == "raw"]
        augs = [s for s in full.samples if s.origin == "augmented"]
        assert len(raws) == 20
        assert len(augs) == 60
        assert full.config.augment_per_raw == 3


class TestSplit:
    def test_published_cell_arithmetic(self):
        # 20 raw parents per cell split 3:1 -> 15 train / 5 val parents
        ds = generate_synthetic(23, 20, 8, seed=0)
        train, val = split_dataset(ds)
        assert len(train) == 1725
        assert len(val) == 575
        val_cells = {}
        for s in val:
            key = (s.product_class, s.score)
            val_cells[key] = val_cells.get(key, 0) + 1
        assert set(val_cells.values()) == {5}

    def test_parent_disjoint_with_augments(self):
        ds = augment_dataset(generate_synthetic(3, 4, 16, seed=1), 2)
        train, val = split_dataset(ds)
        assert len(train) + len(val) == len(ds)
        train_parents = {s.parent_id for s in train}
        val_parents = {s.parent_id for s in val}
        assert not (train_parents & val_parents)
        for s in val:
            assert s.parent_id in val_parents

    def test_augments_follow_their_parent(self):
        ds = augment_dataset(generate_synthetic(2, 2, 16, seed=2), 3)
        train, val = split_dataset(ds)
        val_raw_ids = {s.sample_id for s in val if s.origin == "raw"}
        for s in val:
            if s.origin == "augmented":
                assert s.parent_id in val_raw_ids

    def test_too_few_parents(self):
        ds = generate_synthetic(2, 1, 16, seed=3)
        with pytest.raises(TooFewSamples):
            split_dataset(ds)

    def test_deterministic_in_seed(self):
        ds = generate_synthetic(3, 4, 16, seed=4)
        a_train, _ = split_dataset(ds, seed=11)
        b_train, _ = split_dataset(ds, seed=11)
        assert [s.sample_id for s in a_train] == [s.sample_id for s in b_train]


class TestPack:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = augment_dataset(generate_synthetic(2, 2, 16, seed=0), 1)
        save_dataset(ds, tmp_path / "pack")
        back = load_dataset(tmp_path / "pack")
        assert back.config == ds.config
        assert len(back) == len(ds)
        for a, b in zip(ds.samples, back.samples):
            assert a.sample_id == b.sample_id
            assert a.parent_id == b.parent_id
            assert (a.product_class, a.score, a.origin) == (b.product_class, b.score, b.origin)
            assert np.array_equal(a.image.data, b.image.data)

    def test_save_is_byte_deterministic(self, tmp_path):
        ds = generate_synthetic(2, 2, 16, seed=1)
        save_dataset(ds, tmp_path / "a")
        save_dataset(ds, tmp_path / "b")
        for name in ("manifest.json", "images.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_truncated_blob_rejected(self, tmp_path):
        ds = generate_synthetic(2, 1, 16, seed=2)
        save_dataset(ds, tmp_path / "pack")
        blob = (tmp_path / "pack" / "images.bin").read_bytes()
        (tmp_path / "pack" / "images.bin").write_bytes(blob[:-10])
        with pytest.raises(CorruptManifest):
            load_dataset(tmp_path / "pack")

    def test_checksum_mismatch_rejected(self, tmp_path):
        ds = generate_synthetic(2, 1, 16, seed=3)
        save_dataset(ds, tmp_path / "pack")
        blob = bytearray((tmp_path / "pack" / "images.bin").read_bytes())
        blob[40] ^= 0xFF
        (tmp_path / "pack" / "images.bin").write_bytes(bytes(blob))
        with pytest.raises(CorruptManifest):
            load_dataset(tmp_path / "pack")

    def test_missing_pack_raises_io_error(self, tmp_path):
        with pytest.raises(DatasetIOError):
            load_dataset(tmp_path / "nothing")

    def test_manifest_is_json_with_offsets(self, tmp_path):
        ds = generate_synthetic(2, 1, 16, seed=4)
        save_dataset(ds, tmp_path / "pack")
        manifest = json.loads((tmp_path / "pack" / "manifest.json").read_text())
        assert manifest["version"] == 1
        assert manifest["checksum"].startswith("sha256:")
        offsets = [e["offset"] for e in manifest["samples"]]
        assert offsets == sorted(offsets)
        assert offsets[0] == 0
