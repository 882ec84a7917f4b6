"""Benchmark harness: whole-image and per-patch evaluation, plus timing.

Two protocols live here. The whole-image protocol degrades each benchmark
image, upscales it bicubically, and scores Y-channel PSNR/SSIM with a border
shave of ``scale`` pixels. The patch protocol tiles each image into 48x48 LR
patches, scores each patch pair with no shave, and reports per-image means,
the pooled per-patch mean, and a 45 dB easy/hard split of the pool. Patch
evaluation always computes the plain branch, and the complex branch too when
a model is given, so one run yields both per-branch and fused diagnostics.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .difficulty import DimModel, classify, generate_mask, image_to_pairs
from .errors import ConfigError, DatasetError
from .image import load_image
from .metrics import psnr, ssim
from .report import BenchmarkReport
from .resample import crop_to_scale, degrade, pb_upscale
from .srnet import CbModel, cb_forward, super_resolve

log = logging.getLogger(__name__)

# expected PNG counts for the standard benchmark directories (never downloaded)
MANIFEST = {
    "set5": 5,
    "set14": 14,
    "b100": 100,
    "bsd100": 100,
    "bsds100": 100,
    "urban100": 100,
    "div2k_train_hr": 800,
    "div2k_valid_hr": 100,
}

PATCH_MODES = ("pb", "cb", "adaptive")


def worker_count() -> int:
    """Parallel workers for per-image evaluation; DASR_THREADS caps it."""
    available = os.cpu_count() or 1
    env = os.environ.get("DASR_THREADS", "").strip()
    if env:
        try:
            return max(1, min(int(env), available))
        except ValueError as exc:
            raise ConfigError(f"DASR_THREADS must be an integer, got {env!r}") from exc
    return available


def list_pngs(hr_dir, limit: int | None = None) -> list[Path]:
    paths = sorted(Path(hr_dir).glob("*.png"))
    if not paths:
        raise DatasetError(f"no PNG files found in {hr_dir}")
    return paths[:limit] if limit else paths


def check_manifest(hr_dir, count: int) -> bool | None:
    """True/False when the directory name is a known benchmark, else None."""
    name = Path(hr_dir).name.lower().replace("-", "_")
    expected = MANIFEST.get(name)
    if expected is None:
        return None
    if count != expected:
        log.warning("%s holds %d PNGs, the standard set has %d", hr_dir, count, expected)
        return False
    return True


def _parallel_rows(paths, one):
    """Run ``one`` per path (possibly threaded), return results in name order."""
    workers = min(worker_count(), len(paths))
    if workers <= 1:
        return [one(path) for path in paths]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, paths))


def evaluate_bicubic(hr_dir, scale: int, antialias: bool = True,
                     limit: int | None = None, config: dict | None = None) -> BenchmarkReport:
    """Whole-image degrade-then-upscale baseline, shave = scale."""
    paths = list_pngs(hr_dir, limit)
    manifest_ok = check_manifest(hr_dir, len(paths))

    def one(path: Path):
        started = time.perf_counter()
        hr = crop_to_scale(load_image(path), scale)
        lr = degrade(hr, scale, antialias=antialias)
        sr = pb_upscale(lr.y, scale)
        row = {
            "file": path.name,
            "psnr_db": psnr(sr, hr.y, shave=scale),
            "ssim": ssim(sr, hr.y, shave=scale),
            "pb_patch_fraction": 1.0,
        }
        return row, time.perf_counter() - started

    results = _parallel_rows(paths, one)
    rows = [row for row, _ in results]
    seconds = float(np.mean([sec for _, sec in results]))
    aggregates = {} if manifest_ok is None else {"manifest_ok": bool(manifest_ok)}
    return BenchmarkReport.from_rows(
        dataset=Path(hr_dir).name, scale=scale, mode="bicubic", rows=rows,
        aggregates=aggregates, seconds_per_frame=seconds, config=config,
    ).verify()


def evaluate_patches(hr_dir, scale: int, mode: str,
                     dim: DimModel | None = None, cb: CbModel | None = None,
                     split_db: float = 45.0, antialias: bool = True,
                     limit: int | None = None, config: dict | None = None) -> BenchmarkReport:
    """Per-patch protocol: PSNR/SSIM per 48x48 pair, no shave, pooled mean.

    ``mode`` picks the scored output per patch: the plain branch, the complex
    branch, or the classifier-routed fusion. The aggregate record carries the
    pooled means of every branch that was computed and their easy/hard split
    at ``split_db`` (membership decided by the plain branch's PSNR, i.e. the
    ground-truth difficulty).
    """
    if mode not in PATCH_MODES:
        raise ConfigError(f"patch evaluation mode must be one of {PATCH_MODES}, got {mode!r}")
    if mode in ("cb", "adaptive") and cb is None:
        raise ConfigError(f"mode {mode!r} needs a complex-branch checkpoint")
    if mode == "adaptive" and dim is None:
        raise ConfigError("mode 'adaptive' needs a difficulty-classifier checkpoint")
    if cb is not None and cb.scale != scale:
        raise ConfigError(f"complex branch was built for scale {cb.scale}, requested {scale}")
    if dim is not None and dim.scale != scale:
        raise ConfigError(f"classifier was built for scale {dim.scale}, requested {scale}")
    paths = list_pngs(hr_dir, limit)
    manifest_ok = check_manifest(hr_dir, len(paths))
    want_cb = cb is not None

    def one(path: Path):
        started = time.perf_counter()
        hr_y = crop_to_scale(load_image(path), scale).y
        pairs = image_to_pairs(hr_y, scale, image_id=path.stem)
        lr_stack = np.stack([p.lr for p in pairs])
        pb_out = np.stack([pb_upscale(p, scale) for p in lr_stack])
        pb_scores = np.array([psnr(o, p.hr, shave=0) for o, p in zip(pb_out, pairs)])
        cb_scores = None
        cb_out = None
        if want_cb:
            chunks = [cb_forward(cb, lr_stack[i : i + 64], pb=pb_out[i : i + 64])
                      for i in range(0, len(pairs), 64)]
            cb_out = np.concatenate(chunks)
            cb_scores = np.array([psnr(o, p.hr, shave=0) for o, p in zip(cb_out, pairs)])
        if mode == "pb":
            mask = np.ones(len(pairs), dtype=np.int64)
        elif mode == "cb":
            mask = np.zeros(len(pairs), dtype=np.int64)
        else:
            mask = np.array([generate_mask(p) for p in classify(dim, lr_stack)])
        chosen = np.where(mask[:, None, None] == 1, pb_out,
                          pb_out if cb_out is None else cb_out)
        chosen_psnr = np.where(mask == 1, pb_scores,
                               pb_scores if cb_scores is None else cb_scores)
        chosen_ssim = np.array([ssim(o, p.hr, shave=0) for o, p in zip(chosen, pairs)])
        row = {
            "file": path.name,
            "psnr_db": float(chosen_psnr.mean()),
            "ssim": float(chosen_ssim.mean()),
            "pb_patch_fraction": float(mask.mean()),
            "patch_count": len(pairs),
        }
        pool = {"pb": pb_scores, "cb": cb_scores, "chosen": chosen_psnr,
                "ssim": chosen_ssim}
        return row, pool, time.perf_counter() - started

    results = _parallel_rows(paths, one)
    rows = [row for row, _, _ in results]
    seconds = float(np.mean([sec for _, _, sec in results]))
    pb_all = np.concatenate([pool["pb"] for _, pool, _ in results])
    chosen_all = np.concatenate([pool["chosen"] for _, pool, _ in results])
    ssim_all = np.concatenate([pool["ssim"] for _, pool, _ in results])
    cb_all = None
    if want_cb:
        cb_all = np.concatenate([pool["cb"] for _, pool, _ in results])

    easy = pb_all >= split_db
    aggregates = {
        "patch_count": int(pb_all.size),
        "pooled_psnr_db": float(chosen_all.mean()),
        "pooled_ssim": float(ssim_all.mean()),
        "pb_pooled_psnr_db": float(pb_all.mean()),
        "split_db": float(split_db),
        "easy_count": int(easy.sum()),
        "hard_count": int((~easy).sum()),
        "easy_pb_psnr_db": float(pb_all[easy].mean()) if easy.any() else None,
        "hard_pb_psnr_db": float(pb_all[~easy].mean()) if (~easy).any() else None,
    }
    if manifest_ok is not None:
        aggregates["manifest_ok"] = bool(manifest_ok)
    if cb_all is not None:
        aggregates["cb_pooled_psnr_db"] = float(cb_all.mean())
        aggregates["easy_cb_psnr_db"] = float(cb_all[easy].mean()) if easy.any() else None
        aggregates["hard_cb_psnr_db"] = float(cb_all[~easy].mean()) if (~easy).any() else None
    return BenchmarkReport.from_rows(
        dataset=Path(hr_dir).name, scale=scale, mode=mode, rows=rows,
        aggregates=aggregates, seconds_per_frame=seconds, config=config,
    ).verify()


def param_bytes(model) -> int:
    """Serialized parameter payload size: 4 bytes per float32 entry."""
    return sum(p.data.size * 4 for p in model.net.parameters().values())


def bench_time(hr_dir, scale: int, dim: DimModel | None = None,
               cb: CbModel | None = None, mode: str = "dual", margin: int = 0,
               limit: int | None = None) -> dict:
    """Median seconds per full-image reconstruction; first frame warms up.

    Frames run sequentially (timing would be confounded by parallelism).
    """
    paths = list_pngs(hr_dir, limit)

    def frame(path: Path) -> float:
        lr = degrade(crop_to_scale(load_image(path), scale), scale)
        started = time.perf_counter()
        super_resolve(lr, scale, dim=dim, cb=cb, mode=mode, margin=margin)
        return time.perf_counter() - started

    frame(paths[0])  # warm-up, excluded
    seconds = [frame(path) for path in paths]
    out = {
        "dataset": Path(hr_dir).name,
        "scale": scale,
        "mode": mode,
        "frames": len(seconds),
        "seconds_per_frame_median": float(np.median(seconds)),
        "seconds_per_frame_mean": float(np.mean(seconds)),
    }
    total = 0
    if dim is not None:
        out["dim_param_bytes"] = param_bytes(dim)
        total += out["dim_param_bytes"]
    if cb is not None:
        out["cb_param_bytes"] = param_bytes(cb)
        total += out["cb_param_bytes"]
    out["param_mb"] = total / 2 ** 20
    return out
