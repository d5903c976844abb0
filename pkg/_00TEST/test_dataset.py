import dataclasses

import numpy as np
import pytest

from conftest import build_tiny_dataset
from config import OcclusionConfig
from errors import DatasetError
from data_loaders import io as local_io
from data_loaders.dataset import ALL_SPLIT, image_column, load_dataset
from engines.skeleton import project_to_view


class TestLayout:
    def test_record_counts_and_splits(self, tiny_dataset):
        assert len(tiny_dataset.records) == 48
        assert tiny_dataset.num_views == 2
        train, test = tiny_dataset.split("train"), tiny_dataset.split("test")
        assert len(train) == len(test) == 24
        assert set(train.frame["repetition"]) == {1}
        assert set(test.frame["repetition"]) == {2}
        assert len(tiny_dataset.split(ALL_SPLIT)) == 48

    def test_only_odd_frames_are_kept(self, tiny_dataset):
        assert set(tiny_dataset.records["frame"]) == {1, 3, 5}
        assert all(s["num_records"] == 3 for s in tiny_dataset.sequences)

    def test_index_document(self, tiny_dataset):
        meta = tiny_dataset.meta
        assert meta["view_order"] == [0, 1]
        assert meta["num_records"] == 48
        assert len(meta["splits"]["train"]) == len(meta["splits"]["test"]) == 8
        assert len(meta["joints"]) == 14

    def test_images_exist_with_the_configured_size(self, tiny_dataset):
        split = tiny_dataset.split("test")
        images = split.load_images([0, 5])
        assert images.shape == (2, 2, 32, 32, 3)
        assert images.min() >= 0.0 and images.max() <= 1.0
        for path in split.record(0).image_paths:
            assert path.exists()


class TestContents:
    def test_stored_2d_is_the_projection_of_stored_3d(self, tiny_dataset):
        split = tiny_dataset.split(ALL_SPLIT)
        for r in range(0, len(split), 7):
            record = split.record(r)
            for cam, p2d in zip(split.cameras, record.poses2d):
                expected = project_to_view(record.pose3d, cam)
                assert np.max(np.abs(expected.coords - p2d.coords)) <= 1e-6
                assert np.array_equal(expected.visible, p2d.visible)

    def test_normalized_train_poses_fill_the_unit_cube(self, tiny_dataset):
        q = tiny_dataset.split("train").normalized3d()
        assert q.min() >= -1e-9 and q.max() <= 1.0 + 1e-9
        for k in range(3):
            assert q[..., k].min() == pytest.approx(0.0, abs=1e-9)
            assert q[..., k].max() == pytest.approx(1.0, abs=1e-9)

    def test_view_selection(self, tiny_dataset):
        split = tiny_dataset.split("train", views=[1])
        assert split.views == [1]
        assert split.poses2d().shape == (24, 1, 14, 2)
        both = tiny_dataset.split("train")
        assert np.array_equal(split.poses2d()[:, 0], both.poses2d()[:, 1])
        assert split.with_views([0, 1]).visible().shape == (24, 2, 14)

    def test_unknown_split_or_view(self, tiny_dataset):
        with pytest.raises(DatasetError):
            tiny_dataset.split("val")
        with pytest.raises(DatasetError):
            tiny_dataset.split("train", views=[2])

    def test_head_keeps_order(self, tiny_dataset):
        split = tiny_dataset.split("test")
        assert np.array_equal(split.head(4).poses3d(), split.poses3d()[:4])

    def test_image_cache_is_bounded_lru(self, tiny_dataset):
        cached = load_dataset(tiny_dataset.root, cache_images=True, cache_limit=5)
        split, plain = cached.split("test"), tiny_dataset.split("test")
        rows = list(range(6))
        # 6 records x 2 views = 12장을 읽어도 5장만 남음
        assert np.array_equal(split.load_images(rows), plain.load_images(rows))
        assert len(cached._cache) == 5
        # 다시 읽어도 (캐시 hit 포함) 같은 이미지
        assert np.array_equal(split.load_images(rows[::-1]), plain.load_images(rows[::-1]))
        assert len(cached._cache) <= 5
        # 마지막으로 읽은 것은 row 0의 view 1
        assert next(reversed(cached._cache)) == split.frame.iloc[0][image_column(1)]


class TestWriter:
    def test_rebuild_is_byte_identical(self, tmp_path, tiny_rig_cfg):
        a = build_tiny_dataset(tmp_path / "a", tiny_rig_cfg, seed=5)
        b = build_tiny_dataset(tmp_path / "b", tiny_rig_cfg, seed=5)
        files_a = sorted(p.relative_to(a.root) for p in a.root.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b.root) for p in b.root.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (a.root / rel).read_bytes() == (b.root / rel).read_bytes(), rel

    def test_non_empty_directory_needs_overwrite(self, tmp_path, tiny_rig_cfg):
        out = tmp_path / "ds"
        out.mkdir()
        (out / "stray.txt").write_text("x")
        with pytest.raises(DatasetError):
            build_tiny_dataset(out, tiny_rig_cfg)

    def test_version_mismatch_is_rejected(self, tmp_path, tiny_dataset):
        doc = local_io.load_yaml(tiny_dataset.root / "index.yaml")
        doc["format_version"] = 99
        local_io.save_yaml(doc, tmp_path / "index.yaml")
        with pytest.raises(DatasetError, match="version"):
            load_dataset(tmp_path)

    def test_missing_image_is_reported(self, tmp_path, tiny_rig_cfg):
        index = build_tiny_dataset(tmp_path / "ds", tiny_rig_cfg)
        index.split(ALL_SPLIT).record(0).image_paths[0].unlink()
        with pytest.raises(DatasetError, match="missing"):
            load_dataset(index.root, verify_images=True)

    def test_occluded_view_loses_visibility(self, tmp_path, tiny_rig_cfg, tiny_dataset):
        occluded_cfg = dataclasses.replace(tiny_rig_cfg, occlusion=OcclusionConfig(view=1, probability=1.0,
                                                                                    size_frac=0.5))
        occluded = build_tiny_dataset(tmp_path / "occ", occluded_cfg)
        base_vis = tiny_dataset.split(ALL_SPLIT).visible()
        occ_vis = occluded.split(ALL_SPLIT).visible()
        assert np.array_equal(occ_vis[:, 0], base_vis[:, 0])
        assert not np.any(occ_vis[:, 1] & ~base_vis[:, 1])
        assert occ_vis[:, 1].sum() < base_vis[:, 1].sum()
        assert occluded.meta["occlusion"]["view"] == 1
