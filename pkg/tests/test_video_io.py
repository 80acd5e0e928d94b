import numpy as np
import pytest

from harmovid.video import AlphaVideo, MaskVideo, VideoTensor
from harmovid.video_io import (
    frame_paths,
    linear_to_srgb,
    read_alpha,
    read_mask,
    read_video,
    srgb_to_linear,
    write_alpha,
    write_mask,
    write_video,
)


class TestTransfer:
    def test_midgray_byte_value(self):
        # linear 0.5 through the sRGB transfer and round-half-up lands on 188
        byte = int(np.floor(linear_to_srgb(np.array(0.5)) * 255.0 + 0.5))
        assert byte == 188

    def test_transfer_functions_are_inverse(self):
        x = np.linspace(0.0, 1.0, 1001)
        np.testing.assert_allclose(srgb_to_linear(linear_to_srgb(x)), x, atol=1e-12)

    def test_endpoints(self):
        assert linear_to_srgb(np.array(0.0)) == 0.0
        assert linear_to_srgb(np.array(1.0)) == pytest.approx(1.0)


class TestVideoRoundtrip:
    def test_write_read_write_idempotent(self, tmp_path):
        rng = np.random.default_rng(0)
        v = VideoTensor(rng.random((3, 16, 16, 3)))
        first = tmp_path / "a"
        second = tmp_path / "b"
        write_video(first, v)
        again = read_video(first)
        write_video(second, again)
        for p1, p2 in zip(sorted(first.iterdir()), sorted(second.iterdir())):
            assert p1.read_bytes() == p2.read_bytes()

    def test_frame_naming_and_count(self, tmp_path):
        rng = np.random.default_rng(1)
        v = VideoTensor(rng.random((4, 8, 8, 3)))
        write_video(tmp_path / "v", v)
        names = sorted(p.name for p in (tmp_path / "v").iterdir())
        assert names == ["00000.png", "00001.png", "00002.png", "00003.png"]

    def test_missing_frame_named_in_error(self, tmp_path):
        rng = np.random.default_rng(2)
        v = VideoTensor(rng.random((5, 8, 8, 3)))
        write_video(tmp_path / "v", v)
        (tmp_path / "v" / "00003.png").unlink()
        with pytest.raises(FileNotFoundError, match="00003"):
            frame_paths(tmp_path / "v")

    def test_inconsistent_sizes_rejected(self, tmp_path):
        rng = np.random.default_rng(3)
        write_video(tmp_path / "v", VideoTensor(rng.random((1, 8, 8, 3))))
        from PIL import Image
        Image.new("RGB", (12, 8)).save(tmp_path / "v" / "00001.png")
        with pytest.raises(ValueError, match="differs"):
            read_video(tmp_path / "v")

    def test_empty_directory_rejected(self, tmp_path):
        (tmp_path / "v").mkdir()
        with pytest.raises(FileNotFoundError):
            read_video(tmp_path / "v")


class TestMaskAlphaRoundtrip:
    def test_mask_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        m = MaskVideo((rng.random((3, 8, 8, 1)) < 0.5).astype(np.float64))
        write_mask(tmp_path / "m", m)
        again = read_mask(tmp_path / "m")
        np.testing.assert_array_equal(again.data, m.data)

    def test_alpha_roundtrip_at_8bit(self, tmp_path):
        rng = np.random.default_rng(5)
        a = AlphaVideo(rng.random((2, 8, 8, 1)))
        write_alpha(tmp_path / "a", a)
        again = read_alpha(tmp_path / "a")
        assert np.abs(again.data - a.data).max() <= 0.5 / 255.0 + 1e-12
        write_alpha(tmp_path / "b", again)
        for p1, p2 in zip(sorted((tmp_path / "a").iterdir()),
                          sorted((tmp_path / "b").iterdir())):
            assert p1.read_bytes() == p2.read_bytes()
