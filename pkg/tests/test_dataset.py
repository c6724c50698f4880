"""Tests for image files, ingestion and synthetic data"""

import numpy as np
import pytest
from PIL import Image

from src.core_types import DataError
from src.dataset import center_crop, ingest, load_image, save_image, save_mask, synth, synth_image
from src.rng import RngStream


def write_png(path, size, channels=3, value=0.5):
    image = np.full((size, size, channels), value)
    return save_image(image, path)


class TestImageFiles:
    def test_eight_bit_values_survive(self, tmp_path):
        """Should read back k / 255 values exactly"""
        image = (np.arange(48).reshape(4, 4, 3) * 5 % 256) / 255.0

        loaded = load_image(save_image(image, tmp_path / "a.png"))

        np.testing.assert_array_equal(loaded, image)

    def test_grayscale(self, tmp_path):
        """Should keep grayscale images single-channel"""
        path = tmp_path / "g.png"
        Image.fromarray(np.full((3, 5), 51, dtype=np.uint8)).save(path)

        loaded = load_image(path)

        assert loaded.shape == (3, 5, 1)
        np.testing.assert_allclose(loaded, 0.2)

    def test_rgba_becomes_rgb(self, tmp_path):
        """Should drop alpha and return three channels"""
        path = tmp_path / "rgba.png"
        Image.new("RGBA", (4, 4), (255, 0, 0, 128)).save(path)

        loaded = load_image(path)

        assert loaded.shape == (4, 4, 3)
        np.testing.assert_array_equal(loaded[0, 0], [1.0, 0.0, 0.0])

    def test_undecodable(self, tmp_path):
        """Should raise DataError for a file that is not an image"""
        path = tmp_path / "junk.png"
        path.write_text("not an image")

        with pytest.raises(DataError):
            load_image(path)

    def test_save_clips(self, tmp_path):
        """Should clip values outside [0, 1] before quantizing"""
        image = np.array([[[-0.5, 0.5, 1.5]]])

        loaded = load_image(save_image(image, tmp_path / "c.png"))

        np.testing.assert_array_equal(loaded[0, 0], [0.0, 128 / 255, 1.0])

    def test_save_mask(self, tmp_path):
        """Should write masks as black and white"""
        path = save_mask(np.array([[True, False]]), tmp_path / "m.png")

        np.testing.assert_array_equal(load_image(path)[:, :, 0], [[1.0, 0.0]])


class TestIngest:
    def test_pairs(self, dataset_dir):
        """Should build LR images at 1 / scale of the HR size"""
        pairs = ingest(dataset_dir, 4)

        assert [p.id for p in pairs] == [f"synth_{i:04d}" for i in range(4)]
        assert all(p.hr.shape == (16, 16, 3) and p.lr.shape == (4, 4, 3) for p in pairs)

    def test_lexicographic_order(self, tmp_path):
        """Should visit files in sorted order"""
        for name in ("b.png", "a.png", "c.png"):
            write_png(tmp_path / name, 8)

        assert [p.id for p in ingest(tmp_path, 2)] == ["a", "b", "c"]

    def test_center_crop_with_warning(self, tmp_path, mocker):
        """Should crop 33x33 to 32x32 and warn"""
        write_png(tmp_path / "odd.png", 33)
        mock_logger = mocker.patch("src.dataset.logger")

        (pair,) = ingest(tmp_path, 4)

        assert pair.hr.shape == (32, 32, 3)
        assert pair.lr.shape == (8, 8, 3)
        events = [call.args[0] for call in mock_logger.warning.call_args_list]
        assert events == ["image_center_cropped"]

    def test_skips_undecodable(self, tmp_path, mocker):
        """Should skip files that are not images and warn"""
        write_png(tmp_path / "good.png", 8)
        (tmp_path / "notes.txt").write_text("hello")
        mock_logger = mocker.patch("src.dataset.logger")

        pairs = ingest(tmp_path, 2)

        assert [p.id for p in pairs] == ["good"]
        assert mock_logger.warning.call_args.args[0] == "image_skipped"

    def test_missing_directory(self, tmp_path):
        """Should raise DataError for a missing directory"""
        with pytest.raises(DataError):
            ingest(tmp_path / "nope", 2)

    def test_no_images(self, tmp_path):
        """Should raise DataError when nothing decodes"""
        (tmp_path / "a.txt").write_text("x")

        with pytest.raises(DataError):
            ingest(tmp_path, 2)

    def test_mixed_channels(self, tmp_path):
        """Should reject a mix of grayscale and RGB images"""
        write_png(tmp_path / "rgb.png", 8)
        write_png(tmp_path / "gray.png", 8, channels=1)

        with pytest.raises(DataError, match="mixes"):
            ingest(tmp_path, 2)

    def test_invalid_scale(self, dataset_dir):
        """Should reject a scale below one"""
        with pytest.raises(ValueError):
            ingest(dataset_dir, 0)

    def test_center_crop_keeps_middle(self):
        """Should crop symmetrically"""
        image = np.arange(36.0).reshape(6, 6, 1)

        np.testing.assert_array_equal(center_crop(image, 4), image[1:5, 1:5])


class TestSynth:
    def test_writes_count_files(self, tmp_path):
        """Should write the requested number of PNGs"""
        paths = synth(tmp_path, count=3, size=8, seed=1)

        assert [p.name for p in paths] == ["synth_0000.png", "synth_0001.png", "synth_0002.png"]
        assert load_image(paths[0]).shape == (8, 8, 3)

    def test_deterministic(self, tmp_path):
        """Should write identical bytes for the same seed"""
        first = synth(tmp_path / "a", count=2, size=16, seed=5)
        second = synth(tmp_path / "b", count=2, size=16, seed=5)

        assert [p.read_bytes() for p in first] == [p.read_bytes() for p in second]

    def test_image_independent_of_count(self, tmp_path):
        """Should make image i depend only on seed and i"""
        few = synth(tmp_path / "a", count=1, size=16, seed=5)
        many = synth(tmp_path / "b", count=3, size=16, seed=5)

        assert few[0].read_bytes() == many[0].read_bytes()

    def test_seeds_differ(self):
        """Should produce different images for different seeds"""
        a = synth_image(RngStream(1), 16)
        b = synth_image(RngStream(2), 16)

        assert not np.array_equal(a, b)

    def test_grayscale(self):
        """Should honor the channel count and stay in [0, 1]"""
        image = synth_image(RngStream(3), 12, channels=1)

        assert image.shape == (12, 12, 1)
        assert image.min() >= 0.0 and image.max() <= 1.0

    @pytest.mark.parametrize(("count", "size", "channels"), [(0, 8, 3), (1, 2, 3), (1, 8, 2)])
    def test_invalid(self, tmp_path, count, size, channels):
        """Should reject empty counts, tiny sizes and unsupported channels"""
        with pytest.raises(ValueError):
            synth(tmp_path, count=count, size=size, channels=channels)
