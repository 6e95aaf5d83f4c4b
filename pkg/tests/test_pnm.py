import numpy as np
import pytest

from advgap.images import read_pnm, read_seg_mask, write_pnm, write_seg_mask


class TestPnm:
    @pytest.mark.parametrize("c", [1, 3])
    def test_round_trip(self, tmp_path, c):
        img = np.random.default_rng(c).integers(0, 256, (7, 5, c)) / 255
        path = tmp_path / "x.pnm"
        write_pnm(path, img)
        assert np.array_equal(read_pnm(path), img)
        assert path.read_bytes()[:2] == (b"P5" if c == 1 else b"P6")

    def test_ascii_gray_with_comments(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_text("P2\n# a comment\n3 2\n# another\n255\n0 255 51\n102 153 204\n")
        img = read_pnm(path)
        assert img.shape == (2, 3, 1)
        np.testing.assert_array_equal(img[:, :, 0] * 255, [[0, 255, 51], [102, 153, 204]])

    def test_ascii_color(self, tmp_path):
        path = tmp_path / "a.ppm"
        path.write_text("P3 2 1 255 255 0 0 0 0 255\n")
        img = read_pnm(path)
        np.testing.assert_array_equal(img[0], [[1, 0, 0], [0, 0, 1]])

    def test_rejects_other_formats(self, tmp_path):
        path = tmp_path / "b.pgm"
        path.write_text("P2 1 1 65535 7\n")
        with pytest.raises(ValueError):
            read_pnm(path)
        path.write_bytes(b"BM....")
        with pytest.raises(ValueError):
            read_pnm(path)

    def test_truncated_ascii(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_text("P2 2 2 255 1 2 3\n")
        with pytest.raises(ValueError):
            read_pnm(path)

    def test_seg_threshold(self, tmp_path):
        path = tmp_path / "s.pgm"
        path.write_text("P2 4 1 255 0 127 128 255\n")
        np.testing.assert_array_equal(read_seg_mask(path), [[0, 0, 1, 1]])
        seg = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        write_seg_mask(tmp_path / "m.pgm", seg)
        np.testing.assert_array_equal(read_seg_mask(tmp_path / "m.pgm"), seg)
