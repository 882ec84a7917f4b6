"""Full-reference quality metrics on Y planes: PSNR and SSIM.

Both metrics shave a border of ``shave`` pixels per side before scoring
(the SR-benchmark convention uses shave = scale; patch scoring uses 0).
PSNR is capped at 100 dB so identical flat patches stay representable and
binnable. Dataset scores are means of per-image scores, not pooled MSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0


@dataclass(frozen=True)
class QualityScore:
    psnr_db: float
    ssim: float
    shave: int


def _shaved_pair(a, b, shave: int):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"plane shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise DimensionError(f"expected 2-D planes, got shape {a.shape}")
    if shave < 0:
        raise DimensionError(f"shave must be >= 0, got {shave}")
    h, w = a.shape
    if h <= 2 * shave or w <= 2 * shave:
        raise DimensionError(f"shave {shave} leaves nothing of a {w}x{h} plane")
    if shave:
        a = a[shave:-shave, shave:-shave]
        b = b[shave:-shave, shave:-shave]
    return a, b


def psnr(a, b, shave: int = 0) -> float:
    """10*log10(255^2 / MSE) over the shaved region, capped at 100 dB."""
    a, b = _shaved_pair(a, b, shave)
    mse = np.mean(np.square(a - b))
    if mse == 0.0:
        return PSNR_CAP
    return min(float(10.0 * np.log10(255.0 ** 2 / mse)), PSNR_CAP)


def _gaussian_1d(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-np.square(offsets) / (2.0 * sigma * sigma))
    return g / g.sum()


def _valid_filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a symmetric 1-D kernel."""
    out = sliding_window_view(img, g.size, axis=1) @ g
    out = np.tensordot(sliding_window_view(out, g.size, axis=0), g, axes=([2], [0]))
    return out


def ssim(a, b, shave: int = 0) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), valid windows only."""
    a, b = _shaved_pair(a, b, shave)
    if min(a.shape) < SSIM_WINDOW:
        raise DimensionError(
            f"image {a.shape[1]}x{a.shape[0]} after shave is smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    g = _gaussian_1d()
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    mu_a = _valid_filter(a, g)
    mu_b = _valid_filter(b, g)
    var_a = _valid_filter(a * a, g) - mu_a * mu_a
    var_b = _valid_filter(b * b, g) - mu_b * mu_b
    cov = _valid_filter(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def score_pair(sr, hr, shave: int = 0) -> QualityScore:
    return QualityScore(psnr_db=psnr(sr, hr, shave), ssim=ssim(sr, hr, shave), shave=shave)


def dataset_score(pairs, shave: int = 0) -> QualityScore:
    """Arithmetic mean of per-image PSNR and SSIM over (sr, hr) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise DimensionError("dataset_score requires a non-empty list of pairs")
    scores = [score_pair(sr, hr, shave) for sr, hr in pairs]
    return QualityScore(
        psnr_db=float(np.mean([s.psnr_db for s in scores])),
        ssim=float(np.mean([s.ssim for s in scores])),
        shave=shave,
    )
