"""Separable bicubic resizing (Keys kernel, a = -0.5).

This single implementation is used three ways: antialiased downsampling as
the degradation model, plain upsampling as the cheap reconstruction branch,
and the difficulty-prior upscaler. Conventions are the ones the classic SR
benchmark numbers are computed with: output pixel i samples source coordinate
(i + 0.5) / scale - 0.5; when shrinking with antialias the kernel is stretched
by the inverse scale; weights are renormalized to sum 1; borders replicate.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .image import PlanarImage

SCALES = (2, 3, 4)


def cubic_kernel(x, a: float = -0.5):
    """Piecewise-cubic interpolation weight at offset ``x``.

    (a+2)|x|^3 - (a+3)|x|^2 + 1 on |x| <= 1; a|x|^3 - 5a|x|^2 + 8a|x| - 4a on
    1 < |x| < 2; zero beyond.
    """
    ax = np.abs(np.asarray(x, dtype=np.float64))
    near = ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0
    far = ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _contributions(in_len: int, out_len: int, antialias: bool):
    """Per-output-pixel source indices and normalized weights for one axis.

    Returns (indices, weights) of shape (out_len, taps); indices are clamped
    to the valid range, which realizes replicate borders.
    """
    scale = out_len / in_len
    if scale < 1.0 and antialias:
        width = 4.0 / scale
        kscale = scale
    else:
        width = 4.0
        kscale = 1.0
    u = (np.arange(out_len, dtype=np.float64) + 0.5) / scale - 0.5
    left = np.floor(u - width / 2.0).astype(np.int64) + 1
    taps = int(np.ceil(width)) + 2
    indices = left[:, None] + np.arange(taps)
    weights = cubic_kernel((u[:, None] - indices) * kscale) * kscale
    weights /= weights.sum(axis=1, keepdims=True)
    indices = np.clip(indices, 0, in_len - 1)
    return indices, weights


def _resize_axis0(plane: np.ndarray, out_len: int, antialias: bool) -> np.ndarray:
    indices, weights = _contributions(plane.shape[0], out_len, antialias)
    return np.einsum("ot,otc->oc", weights, plane[indices, :], optimize=True)


def bicubic_resize(plane: np.ndarray, out_w: int, out_h: int, antialias: bool = True) -> np.ndarray:
    """Resize a 2-D plane to (out_h, out_w); rows pass first, then columns.

    The result is not clamped; clamping belongs to 8-bit encoding.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise DimensionError(f"bicubic_resize expects a 2-D plane, got shape {plane.shape}")
    if out_w < 1 or out_h < 1:
        raise DimensionError(f"output dims must be >= 1, got {out_w}x{out_h}")
    out = _resize_axis0(plane.T, out_w, antialias).T  # horizontal pass
    out = _resize_axis0(out, out_h, antialias)  # vertical pass
    return np.ascontiguousarray(out)


def _check_scale(scale):
    if scale not in SCALES:
        raise DimensionError(f"scale must be one of {SCALES}, got {scale}")


def _map_planes(img: PlanarImage, fn) -> PlanarImage:
    return PlanarImage(
        y=fn(img.y),
        cb=fn(img.cb) if img.cb is not None else None,
        cr=fn(img.cr) if img.cr is not None else None,
    )


def crop_to_scale(img: PlanarImage, scale: int) -> PlanarImage:
    """Top-left anchored crop to the largest dims divisible by ``scale``."""
    _check_scale(scale)
    h = (img.height // scale) * scale
    w = (img.width // scale) * scale
    if h < scale or w < scale:
        raise DimensionError(f"image {img.width}x{img.height} too small for scale {scale}")
    return _map_planes(img, lambda p: p[:h, :w].copy())


def degrade(hr: PlanarImage, scale: int, antialias: bool = True) -> PlanarImage:
    """Bicubic downsample of every plane by 1/scale, antialiased by default."""
    _check_scale(scale)
    if hr.height % scale or hr.width % scale:
        raise DimensionError(
            f"HR dims {hr.width}x{hr.height} not divisible by scale {scale}; "
            f"crop_to_scale first"
        )
    w, h = hr.width // scale, hr.height // scale
    return _map_planes(hr, lambda p: bicubic_resize(p, w, h, antialias=antialias))


def pb_upscale(lr, scale: int):
    """Bicubic upscale (antialias off): the plain reconstruction branch.

    Accepts a bare 2-D plane or a PlanarImage and returns the same kind.
    """
    _check_scale(scale)
    if isinstance(lr, PlanarImage):
        w, h = lr.width * scale, lr.height * scale
        return _map_planes(lr, lambda p: bicubic_resize(p, w, h, antialias=False))
    plane = np.asarray(lr, dtype=np.float64)
    if plane.ndim != 2:
        raise DimensionError(f"pb_upscale expects a 2-D plane, got shape {plane.shape}")
    return bicubic_resize(plane, plane.shape[1] * scale, plane.shape[0] * scale, antialias=False)
