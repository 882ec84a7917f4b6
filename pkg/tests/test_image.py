"""PNG codec and color transform checks."""

import io

import numpy as np
import pytest
from PIL import Image

from dasr.errors import DecodeError, DimensionError
from dasr.image import (
    PlanarImage,
    RgbImage,
    decode_png,
    encode_gray_png,
    encode_png,
    load_image,
    quantize_u8,
    rgb_to_ycbcr,
    save_image,
    ycbcr_to_rgb,
)


def rand_rgb(rng, h=13, w=17):
    return RgbImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def test_quantize_rounds_half_away_from_zero():
    vals = np.array([0.49, 0.5, 1.5, 2.5, 254.5, 255.4, 300.0, -5.0])
    assert np.array_equal(quantize_u8(vals), [0, 1, 2, 3, 255, 255, 255, 0])


def test_ycbcr_spot_values():
    # studio swing: white -> (235, 128, 128), black -> (16, 128, 128)
    white = rgb_to_ycbcr(RgbImage(np.full((1, 1, 3), 255, dtype=np.uint8)))
    assert abs(white.y[0, 0] - 235.0) < 1e-9
    assert abs(white.cb[0, 0] - 128.0) < 1e-9
    assert abs(white.cr[0, 0] - 128.0) < 1e-9
    black = rgb_to_ycbcr(RgbImage(np.zeros((1, 1, 3), dtype=np.uint8)))
    assert abs(black.y[0, 0] - 16.0) < 1e-9
    red = rgb_to_ycbcr(RgbImage(np.array([[[255, 0, 0]]], dtype=np.uint8)))
    assert abs(red.y[0, 0] - 81.481) < 1e-9
    assert abs(red.cb[0, 0] - 90.203) < 1e-9
    assert abs(red.cr[0, 0] - 240.0) < 1e-9


def test_color_round_trip_recovers_every_pixel():
    rng = np.random.default_rng(0)
    img = rand_rgb(rng, 21, 19)
    back = ycbcr_to_rgb(rgb_to_ycbcr(img))
    assert np.array_equal(back.pixels, img.pixels)


def test_planes_stay_float_without_rounding():
    img = rgb_to_ycbcr(RgbImage(np.array([[[1, 2, 3]]], dtype=np.uint8)))
    assert img.y.dtype == np.float64
    assert img.y[0, 0] != round(img.y[0, 0])


def test_png_round_trip():
    rng = np.random.default_rng(1)
    img = rand_rgb(rng)
    back = decode_png(encode_png(img))
    assert np.array_equal(back.pixels, img.pixels)


def test_grayscale_png_promotes_to_rgb():
    plane = np.arange(48, dtype=np.uint8).reshape(6, 8)
    img = decode_png(encode_gray_png(plane))
    assert img.pixels.shape == (6, 8, 3)
    assert np.array_equal(img.pixels[..., 0], plane)
    assert np.array_equal(img.pixels[..., 1], plane)


def test_alpha_channel_is_dropped():
    rgba = np.zeros((4, 4, 4), dtype=np.uint8)
    rgba[..., 0] = 200
    rgba[..., 3] = 7
    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    img = decode_png(buf.getvalue())
    assert img.pixels.shape == (4, 4, 3)
    assert np.all(img.pixels[..., 0] == 200)


def test_sixteen_bit_png_is_rejected():
    buf = io.BytesIO()
    Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(buf, format="PNG")
    with pytest.raises(DecodeError, match="16"):
        decode_png(buf.getvalue())


def test_garbage_bytes_raise_with_offset_zero():
    with pytest.raises(DecodeError) as exc:
        decode_png(b"this is not a png at all")
    assert exc.value.offset == 0
    assert "offset 0" in str(exc.value)


def test_truncated_png_reports_an_offset():
    rng = np.random.default_rng(2)
    blob = encode_png(rand_rgb(rng, 32, 32))
    with pytest.raises(DecodeError) as exc:
        decode_png(blob[: len(blob) // 2])
    assert exc.value.offset is not None
    assert exc.value.offset > 0


def test_planar_image_shape_validation():
    with pytest.raises(DimensionError):
        PlanarImage(y=np.zeros((4, 4)), cb=np.zeros((4, 5)), cr=np.zeros((4, 4)))
    img = PlanarImage(y=np.zeros((4, 6)))
    assert img.width == 6 and img.height == 4 and not img.has_chroma


def test_rgb_image_validation():
    with pytest.raises(DimensionError):
        RgbImage(np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(DimensionError):
        RgbImage(np.zeros((4, 4, 3), dtype=np.float32))


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    img = rand_rgb(rng, 24, 26)
    path = tmp_path / "x.png"
    save_image(path, img)
    planes = load_image(path)
    assert planes.has_chroma
    assert planes.y.shape == (24, 26)
    back = ycbcr_to_rgb(planes)
    assert np.array_equal(back.pixels, img.pixels)


def test_save_planar_image_with_chroma(tmp_path):
    rng = np.random.default_rng(4)
    img = rand_rgb(rng, 12, 12)
    planes = rgb_to_ycbcr(img)
    path = tmp_path / "p.png"
    save_image(path, planes)
    assert np.array_equal(load_image(path).y.shape, (12, 12))


def test_ycbcr_to_rgb_requires_chroma():
    with pytest.raises(DimensionError, match="Cb and Cr"):
        ycbcr_to_rgb(PlanarImage(y=np.zeros((4, 4))))
