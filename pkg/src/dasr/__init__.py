"""Difficulty-adaptive single-image super-resolution.

Images are reconstructed patch by patch: a small classifier estimates each
48x48 patch's difficulty from the low-resolution pixels alone, easy patches
take the cheap bicubic branch, hard patches take a trained residual conv-net,
and the outputs are stitched back into one image.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .difficulty import (
    DifficultyBins,
    DimModel,
    PatchStore,
    TrainConfig,
    build_dataset,
    classify,
    generate_mask,
    label_patch,
    train_dim,
)
from .errors import (
    ConfigError,
    DasrError,
    DatasetError,
    DecodeError,
    DimensionError,
    NumericsError,
    PrerequisiteError,
)
from .harness import bench_time, evaluate_bicubic, evaluate_patches
from .image import PlanarImage, RgbImage, load_image, rgb_to_ycbcr, save_image, ycbcr_to_rgb
from .metrics import QualityScore, dataset_score, psnr, score_pair, ssim
from .patches import PatchGrid, PatchPair, stitch, tile
from .report import BenchmarkReport, RunConfig
from .resample import bicubic_resize, crop_to_scale, degrade, pb_upscale
from .srnet import CbConfig, CbModel, CbTrainConfig, SrOutput, fuse, super_resolve, train_cb

__version__ = "0.1.0"

__all__ = [
    "BenchmarkReport",
    "CbConfig",
    "CbModel",
    "CbTrainConfig",
    "ConfigError",
    "DasrError",
    "DatasetError",
    "DecodeError",
    "DifficultyBins",
    "DimModel",
    "DimensionError",
    "NumericsError",
    "PatchGrid",
    "PatchPair",
    "PatchStore",
    "PlanarImage",
    "PrerequisiteError",
    "QualityScore",
    "RgbImage",
    "RunConfig",
    "SrOutput",
    "TrainConfig",
    "bench_time",
    "bicubic_resize",
    "build_dataset",
    "classify",
    "crop_to_scale",
    "dataset_score",
    "degrade",
    "evaluate_bicubic",
    "evaluate_patches",
    "fuse",
    "generate_mask",
    "label_patch",
    "load_checkpoint",
    "load_image",
    "pb_upscale",
    "psnr",
    "rgb_to_ycbcr",
    "save_checkpoint",
    "save_image",
    "score_pair",
    "ssim",
    "stitch",
    "super_resolve",
    "tile",
    "train_cb",
    "train_dim",
    "ycbcr_to_rgb",
    "__version__",
]
