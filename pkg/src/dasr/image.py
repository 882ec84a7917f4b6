"""Image decoding/encoding and YCbCr color handling.

All reconstruction math runs on floating-point Y planes in the [0, 255]
domain. The color transform is the BT.601 studio-swing variant (luma in
[16, 235], chroma in [16, 240]) that the classic SR benchmark scripts use;
full-range JPEG YCbCr would shift every PSNR figure.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionError

# BT.601 studio swing, for R,G,B scaled to [0,1]
_FWD = np.array(
    [
        [65.481, 128.553, 24.966],
        [-37.797, -74.203, 112.0],
        [112.0, -93.786, -18.214],
    ],
    dtype=np.float64,
)
_OFFSET = np.array([16.0, 128.0, 128.0], dtype=np.float64)
_INV = np.linalg.inv(_FWD)

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass
class RgbImage:
    """Interleaved 8-bit RGB samples, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DimensionError(f"RgbImage needs (H, W, 3) samples, got {self.pixels.shape}")
        if not np.issubdtype(self.pixels.dtype, np.integer):
            raise DimensionError(
                f"RgbImage needs integer samples, got dtype {self.pixels.dtype}; "
                f"quantize_u8 converts floating-point planes"
            )
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]


@dataclass
class PlanarImage:
    """Floating-point Y plane with optional Cb/Cr planes, all (height, width)."""

    y: np.ndarray
    cb: np.ndarray | None = None
    cr: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.ndim != 2:
            raise DimensionError(f"Y plane must be 2-D, got shape {self.y.shape}")
        for name in ("cb", "cr"):
            plane = getattr(self, name)
            if plane is not None:
                plane = np.asarray(plane, dtype=np.float64)
                if plane.shape != self.y.shape:
                    raise DimensionError(
                        f"{name} plane shape {plane.shape} does not match Y {self.y.shape}"
                    )
                setattr(self, name, plane)

    @property
    def width(self):
        return self.y.shape[1]

    @property
    def height(self):
        return self.y.shape[0]

    @property
    def has_chroma(self):
        return self.cb is not None and self.cr is not None


def _locate_png_fault(data: bytes) -> int:
    """Best-effort byte offset of the first malformed structure in a PNG stream."""
    if len(data) < 8 or data[:8] != _PNG_SIGNATURE:
        for i, (got, want) in enumerate(zip(data[:8], _PNG_SIGNATURE)):
            if got != want:
                return i
        return len(data)
    pos = 8
    while pos + 8 <= len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        if pos + 12 + length > len(data):
            return pos
        pos += 12 + length
    return pos


def decode_png(data: bytes) -> RgbImage:
    """Decode an 8-bit PNG. Grayscale is promoted to RGB, alpha is dropped;
    16-bit streams are rejected rather than truncated."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"malformed PNG stream: {exc}", offset=_locate_png_fault(data)) from exc
    if img.format != "PNG":
        raise DecodeError(f"not a PNG stream (detected {img.format})", offset=0)
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N") or img.mode.startswith("I;16"):
        raise DecodeError("16-bit PNGs are not supported")
    if img.mode != "RGB":
        img = img.convert("RGB")
    return RgbImage(np.asarray(img, dtype=np.uint8))


def encode_png(img: RgbImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def encode_gray_png(plane: np.ndarray) -> bytes:
    """Encode a [0,255] float or uint8 plane as an 8-bit grayscale PNG."""
    data = quantize_u8(np.asarray(plane, dtype=np.float64))
    buf = io.BytesIO()
    Image.fromarray(data, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def quantize_u8(plane: np.ndarray) -> np.ndarray:
    """Clamp to [0,255] and round half away from zero to 8 bits."""
    clamped = np.clip(plane, 0.0, 255.0)
    return np.floor(clamped + 0.5).astype(np.uint8)


def rgb_to_ycbcr(img: RgbImage) -> PlanarImage:
    """Studio-swing BT.601 transform; planes stay floating point (no rounding)."""
    rgb = img.pixels.astype(np.float64) / 255.0
    planes = rgb @ _FWD.T + _OFFSET
    return PlanarImage(y=planes[..., 0], cb=planes[..., 1], cr=planes[..., 2])


def ycbcr_to_rgb(img: PlanarImage) -> RgbImage:
    """Inverse studio-swing transform, clamped and rounded to 8-bit RGB."""
    if not img.has_chroma:
        raise DimensionError("ycbcr_to_rgb requires Cb and Cr planes")
    ycc = np.stack([img.y, img.cb, img.cr], axis=-1) - _OFFSET
    rgb = (ycc @ _INV.T) * 255.0
    return RgbImage(quantize_u8(rgb))


def extract_y(img: PlanarImage) -> PlanarImage:
    """Project to the luminance plane only."""
    return PlanarImage(y=img.y.copy())


def load_image(path) -> PlanarImage:
    """Read a PNG file into YCbCr planes."""
    with open(path, "rb") as fh:
        return rgb_to_ycbcr(decode_png(fh.read()))


def save_image(path, img) -> None:
    """Write an RgbImage, or a PlanarImage with chroma, as a PNG file."""
    if isinstance(img, PlanarImage):
        img = ycbcr_to_rgb(img)
    with open(path, "wb") as fh:
        fh.write(encode_png(img))
