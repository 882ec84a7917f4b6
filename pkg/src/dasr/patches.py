"""Deterministic tiling of LR images into fixed-size patches and reassembly.

Images are reflection-padded (mirror without repeating the edge row) up to a
multiple of the patch size, cut row-major into non-overlapping cells, and the
grid records the original dims so stitching can crop back. An optional
context margin extracts patches with extra surround (the SR output is then
center-cropped before stitching) to reduce seam artifacts, default off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .image import PlanarImage

PATCH_SIZE = 48


@dataclass(frozen=True)
class GridCell:
    row: int
    col: int
    x0: int
    y0: int


@dataclass(frozen=True)
class PatchGrid:
    """Tiling layout: patch origins in padded coordinates plus the padding record."""

    source_w: int
    source_h: int
    patch_size: int
    padded_w: int
    padded_h: int
    margin: int
    cells: tuple[GridCell, ...]

    @property
    def rows(self):
        return self.padded_h // self.patch_size

    @property
    def cols(self):
        return self.padded_w // self.patch_size


@dataclass
class PatchPair:
    """An LR patch with its HR counterpart and provenance."""

    lr: np.ndarray
    hr: np.ndarray
    source_id: str = ""
    row: int = 0
    col: int = 0

    def scale(self) -> int:
        s, rem = divmod(self.hr.shape[0], self.lr.shape[0])
        if rem or self.hr.shape[1] != self.lr.shape[1] * s:
            raise DimensionError(
                f"HR patch {self.hr.shape} is not an integer multiple of LR {self.lr.shape}"
            )
        return s


def pad_to_multiple(plane: np.ndarray, multiple: int) -> np.ndarray:
    """Reflection-pad bottom/right up to the next multiple of ``multiple``."""
    h, w = plane.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return plane
    return np.pad(plane, ((0, ph), (0, pw)), mode="reflect")


def tile(lr, patch_size: int = PATCH_SIZE, margin: int = 0):
    """Cut an LR plane (or the Y plane of a PlanarImage) into patches.

    Returns (patches, grid). With margin > 0 each patch carries ``margin``
    extra context pixels per side (patch arrays are patch_size + 2*margin
    square); cell origins always refer to the core patch.
    """
    plane = lr.y if isinstance(lr, PlanarImage) else np.asarray(lr, dtype=np.float64)
    if plane.ndim != 2 or plane.shape[0] < 1 or plane.shape[1] < 1:
        raise DimensionError(f"tile expects a non-empty 2-D plane, got shape {plane.shape}")
    h, w = plane.shape
    padded = pad_to_multiple(plane, patch_size)
    ph, pw = padded.shape
    if margin:
        padded = np.pad(padded, margin, mode="reflect")
    patches = []
    cells = []
    size = patch_size + 2 * margin
    for r in range(ph // patch_size):
        for c in range(pw // patch_size):
            y0, x0 = r * patch_size, c * patch_size
            patches.append(padded[y0 : y0 + size, x0 : x0 + size].copy())
            cells.append(GridCell(row=r, col=c, x0=x0, y0=y0))
    grid = PatchGrid(
        source_w=w,
        source_h=h,
        patch_size=patch_size,
        padded_w=pw,
        padded_h=ph,
        margin=margin,
        cells=tuple(cells),
    )
    return patches, grid


def crop_margin(patch: np.ndarray, margin: int, scale: int = 1) -> np.ndarray:
    """Remove a context margin (``margin`` LR pixels, scaled) from every side."""
    if margin == 0:
        return patch
    m = margin * scale
    return patch[m:-m, m:-m]


def stitch(sr_patches, grid: PatchGrid, scale: int = 1) -> np.ndarray:
    """Reassemble core-sized SR patches at scaled origins and crop the padding."""
    if len(sr_patches) != len(grid.cells):
        raise DimensionError(
            f"patch count {len(sr_patches)} does not match grid cells {len(grid.cells)}"
        )
    size = grid.patch_size * scale
    canvas = np.zeros((grid.padded_h * scale, grid.padded_w * scale), dtype=np.float64)
    for patch, cell in zip(sr_patches, grid.cells):
        patch = np.asarray(patch, dtype=np.float64)
        if patch.shape != (size, size):
            raise DimensionError(
                f"SR patch at cell ({cell.row},{cell.col}) has shape {patch.shape}, "
                f"expected ({size},{size})"
            )
        canvas[cell.y0 * scale : cell.y0 * scale + size, cell.x0 * scale : cell.x0 * scale + size] = patch
    return canvas[: grid.source_h * scale, : grid.source_w * scale]


def orient(plane: np.ndarray, variant: int) -> np.ndarray:
    """Apply one of the 8 dihedral variants: 4 rotations x optional horizontal flip."""
    rot = variant & 3
    out = np.rot90(plane, rot)
    if variant & 4:
        out = np.fliplr(out)
    return np.ascontiguousarray(out)


def augment(pair: PatchPair, rng: np.random.Generator) -> PatchPair:
    """Apply one uniformly-drawn dihedral variant to LR and HR consistently."""
    variant = int(rng.integers(8))
    return PatchPair(
        lr=orient(pair.lr, variant),
        hr=orient(pair.hr, variant),
        source_id=pair.source_id,
        row=pair.row,
        col=pair.col,
    )
