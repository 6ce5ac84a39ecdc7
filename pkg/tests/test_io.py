import numpy as np
import pytest

from specklecolor.io import dumps_json, read_gray, read_json, read_rgb8, write_gray16, write_json, write_rgb8


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_gray16_round_trip(tmp_path, rng, suffix):
    img = rng.random((20, 30)) * 7.0
    path = tmp_path / f"img{suffix}"
    scale = write_gray16(path, img)
    assert scale == img.max()
    back = read_gray(path)
    assert back.dtype == np.float64 and back.max() == 65535
    np.testing.assert_allclose(back / 65535 * scale, img, atol=scale / 65535)


def test_gray16_shared_scale_clips(tmp_path):
    path = tmp_path / "a.png"
    write_gray16(path, np.array([[0.0, 1.0], [2.0, 4.0]]), scale=2.0)
    np.testing.assert_array_equal(read_gray(path), [[0, 32768], [65535, 65535]])


def test_gray_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_gray(tmp_path / "nope.png")
    with pytest.raises(ValueError):
        write_gray16(tmp_path / "x.tif", np.ones((2, 2)))
    write_rgb8(tmp_path / "rgb.png", np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        read_gray(tmp_path / "rgb.png")


def test_rgb_round_trip(tmp_path, rng):
    rgb = rng.random((5, 6, 3))
    write_rgb8(tmp_path / "c.png", rgb)
    np.testing.assert_allclose(read_rgb8(tmp_path / "c.png"), rgb, atol=0.5 / 255 + 1e-12)
    with pytest.raises(ValueError):
        write_rgb8(tmp_path / "d.png", rng.random((5, 6)))


def test_json_is_canonical(tmp_path):
    assert dumps_json({"b": 1, "a": [1.5]}) == dumps_json({"a": [1.5], "b": 1})
    with pytest.raises(ValueError):
        dumps_json({"x": float("nan")})
    write_json(tmp_path / "sub" / "x.json", {"k": 2})
    assert read_json(tmp_path / "sub" / "x.json") == {"k": 2}
    with pytest.raises(FileNotFoundError):
        read_json(tmp_path / "missing.json")
