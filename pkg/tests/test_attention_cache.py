"""Tests for the on-disk attention map cache"""

import numpy as np
import pytest

from src.attention import Aggregation, build_attention, parse_extractors
from src.attention_cache import HASH_SUFFIX, content_key, precompute_attention
from src.core_types import DataError
from src.dataset import ingest, save_image
from src.map_io import read_map, write_map


@pytest.fixture
def pairs(dataset_dir):
    return ingest(dataset_dir, 4)


@pytest.fixture
def configs():
    return parse_extractors("edge,gaussian")


class TestPrecomputeAttention:
    def test_writes_map_and_hash_per_image(self, tmp_path, pairs, configs):
        """Should write one map and one sidecar per image"""
        cache = tmp_path / "cache"

        report = precompute_attention(pairs, configs, Aggregation.MAX, cache)

        assert report.extractions == 4 and report.hits == 0
        assert sorted(p.name for p in cache.glob("*.ymap")) == [f"{p.id}.ymap" for p in pairs]
        assert len(list(cache.glob(f"*{HASH_SUFFIX}"))) == 4
        for pair in pairs:
            assert report.maps[pair.id].shape == pair.hr.shape[:2]

    def test_second_run_hits(self, tmp_path, pairs, configs):
        """Should reuse every map on a second run"""
        cache = tmp_path / "cache"
        first = precompute_attention(pairs, configs, Aggregation.MAX, cache)

        second = precompute_attention(pairs, configs, Aggregation.MAX, cache)

        assert second.extractions == 0 and second.hits == 4
        for pair in pairs:
            np.testing.assert_array_equal(second.maps[pair.id], first.maps[pair.id])

    def test_cached_equals_fresh(self, tmp_path, pairs, configs):
        """Should hold maps bit-identical to on-the-fly extraction"""
        cache = tmp_path / "cache"
        precompute_attention(pairs, configs, Aggregation.MAX, cache)

        for pair in pairs:
            fresh = build_attention(pair.lr, pair.hr.shape[:2], configs, Aggregation.MAX, pair.id)
            np.testing.assert_array_equal(read_map(cache / f"{pair.id}.ymap"), fresh)

    def test_modified_image_regenerated(self, tmp_path, dataset_dir, configs):
        """Should regenerate only the map of an image whose pixels changed"""
        cache = tmp_path / "cache"
        precompute_attention(ingest(dataset_dir, 4), configs, Aggregation.MAX, cache)
        save_image(np.random.default_rng(0).random((16, 16, 3)), dataset_dir / "synth_0002.png")

        report = precompute_attention(ingest(dataset_dir, 4), configs, Aggregation.MAX, cache)

        assert report.extractions == 1 and report.hits == 3

    def test_config_change_regenerates(self, tmp_path, pairs, configs):
        """Should key the cache on extractor settings and aggregation"""
        cache = tmp_path / "cache"
        precompute_attention(pairs, configs, Aggregation.MAX, cache)

        report = precompute_attention(pairs, configs, Aggregation.AVG, cache)

        assert report.extractions == 4

    def test_corrupt_map_regenerated(self, tmp_path, pairs, configs):
        """Should rebuild a map whose file no longer parses"""
        cache = tmp_path / "cache"
        precompute_attention(pairs, configs, Aggregation.MAX, cache)
        (cache / f"{pairs[0].id}.ymap").write_bytes(b"garbage")

        report = precompute_attention(pairs, configs, Aggregation.MAX, cache)

        assert report.extractions == 1
        assert read_map(cache / f"{pairs[0].id}.ymap").shape == (16, 16)

    def test_replaced_external_map_regenerated(self, tmp_path, pairs):
        """Should rebuild maps whose external source file was replaced"""
        sources = tmp_path / "external"
        sources.mkdir()
        for pair in pairs:
            write_map(np.zeros((4, 4)), sources / f"{pair.id}.ymap")
        external = parse_extractors(f"external:{sources}")
        cache = tmp_path / "cache"
        precompute_attention(pairs, external, Aggregation.MAX, cache)

        for pair in pairs:
            write_map(np.ones((4, 4)), sources / f"{pair.id}.ymap")
        second = precompute_attention(pairs, external, Aggregation.MAX, cache)

        assert second.extractions == 4 and second.hits == 0
        for pair in pairs:
            fresh = build_attention(pair.lr, pair.hr.shape[:2], external, Aggregation.MAX, pair.id)
            np.testing.assert_array_equal(second.maps[pair.id], fresh)
            np.testing.assert_allclose(second.maps[pair.id], 1.0)

    def test_parallel_matches_serial(self, tmp_path, pairs, configs):
        """Should give identical maps with several workers"""
        serial = precompute_attention(pairs, configs, "max", tmp_path / "a")
        parallel = precompute_attention(pairs, configs, "max", tmp_path / "b", workers=3)

        for pair in pairs:
            np.testing.assert_array_equal(serial.maps[pair.id], parallel.maps[pair.id])

    def test_unwritable_cache(self, tmp_path, pairs, configs):
        """Should raise DataError when the cache directory cannot be created"""
        blocker = tmp_path / "file"
        blocker.write_text("in the way")

        with pytest.raises(DataError):
            precompute_attention(pairs, configs, "max", blocker / "cache")


class TestContentKey:
    def test_stable(self, pairs, configs):
        """Should hash identical inputs identically"""
        assert content_key(pairs[0], configs, "max") == content_key(pairs[0], configs, "max")

    def test_depends_on_pixels(self, pairs, configs):
        """Should differ between images"""
        assert content_key(pairs[0], configs, "max") != content_key(pairs[1], configs, "max")
