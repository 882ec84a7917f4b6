"""Command-line interface.

Subcommands map onto the pipeline stages: build-dataset labels patches,
train-dim / train-cb fit the two models, super-resolve reconstructs one
image, evaluate runs the benchmark protocols, bench times reconstruction.
Every subcommand reads a flat JSON config; --scale/--mode/--seed override
the corresponding config fields.

Exit codes: 0 success, 2 input error, 3 missing prerequisite artifact,
4 invalid or mismatched configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .difficulty import DifficultyBins, DimModel, PatchStore, TrainConfig, build_dataset, train_dim
from .errors import ConfigError, DatasetError, DecodeError, DimensionError, PrerequisiteError
from .harness import bench_time, evaluate_bicubic, evaluate_patches
from .image import encode_gray_png, load_image, save_image
from .patches import PATCH_SIZE
from .report import RunConfig
from .srnet import CbModel, CbTrainConfig, super_resolve, train_cb

log = logging.getLogger(__name__)

SR_MODES = ("pb", "cb", "dual")
EVAL_MODES = ("bicubic", "pb", "cb", "adaptive")


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path_str: str, what: str) -> Path:
    if not path_str:
        raise ConfigError(f"{what} path not set in config")
    path = Path(path_str)
    if not path.exists():
        raise PrerequisiteError(f"{what} not found: {path}")
    return path


def _load_store(config: RunConfig) -> PatchStore:
    return PatchStore.load(_require_file(config.store_path, "patch store"))


def _load_dim(config: RunConfig) -> DimModel:
    return DimModel.load(_require_file(config.dim_checkpoint, "difficulty-classifier checkpoint"))


def _load_cb(config: RunConfig) -> CbModel:
    return CbModel.load(_require_file(config.cb_checkpoint, "complex-branch checkpoint"))


def _write_log(path: Path, history: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def cmd_build_dataset(config: RunConfig) -> int:
    if not config.hr_dir:
        raise ConfigError("hr_dir not set in config")
    if not config.store_path:
        raise ConfigError("store_path not set in config")
    bins = DifficultyBins(config.bins)
    store = build_dataset(config.hr_dir, config.scale, bins=bins, limit=config.limit)
    Path(config.store_path).parent.mkdir(parents=True, exist_ok=True)
    store.save(config.store_path)
    hist = store.histogram()
    hist_path = Path(str(config.store_path) + ".hist.json")
    with open(hist_path, "w", encoding="utf-8") as fh:
        json.dump({
            "scale": store.scale,
            "patch_size": store.patch_size,
            "count": len(store),
            "histogram": {str(k): v for k, v in sorted(hist.items())},
            "bins": list(bins.boundaries),
        }, fh, sort_keys=True, indent=2)
    print(f"wrote {config.store_path}: {len(store)} patches, "
          f"histogram {dict(sorted(hist.items()))}")
    return 0


def cmd_train_dim(config: RunConfig) -> int:
    if not config.dim_checkpoint:
        raise ConfigError("dim_checkpoint path not set in config")
    store = _load_store(config)
    train_cfg = TrainConfig(epochs=config.epochs, batch_size=config.batch_size,
                            lr=config.lr, seed=config.seed)
    model, history = train_dim(store, train_cfg, bins=DifficultyBins(config.bins))
    ckpt = Path(config.dim_checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    model.save(ckpt, extra_meta={"seed": config.seed, "epochs": config.epochs})
    _write_log(Path(str(ckpt) + ".log.jsonl"), history)
    last = history[-1]
    print(f"wrote {ckpt}: epoch {last['epoch']} loss {last['loss']:.6f} "
          f"accuracy {last['accuracy']:.4f}")
    return 0


def cmd_train_cb(config: RunConfig) -> int:
    if not config.cb_checkpoint:
        raise ConfigError("cb_checkpoint path not set in config")
    dim = _load_dim(config)
    store = _load_store(config)
    train_cfg = CbTrainConfig(epochs=config.epochs, batch_size=config.batch_size,
                              lr=config.lr, seed=config.seed, channels=config.channels,
                              blocks=config.blocks, augment=config.augment)
    model, history = train_cb(store, dim, train_cfg)
    ckpt = Path(config.cb_checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    model.save(ckpt, extra_meta={"seed": config.seed, "epochs": config.epochs})
    _write_log(Path(str(ckpt) + ".log.jsonl"), history)
    last = history[-1]
    print(f"wrote {ckpt}: epoch {last['epoch']} loss {last['loss']:.6f} "
          f"hard fraction {last['hard_fraction']:.3f}")
    return 0


def cmd_super_resolve(config: RunConfig) -> int:
    mode = config.mode or "dual"
    if mode not in SR_MODES:
        raise ConfigError(f"super-resolve mode must be one of {SR_MODES}, got {mode!r}")
    input_path = _require_file(config.input, "input image")
    lr = load_image(input_path)
    dim = _load_dim(config) if mode == "dual" else None
    cb = _load_cb(config) if mode in ("cb", "dual") else None
    out = super_resolve(lr, config.scale, dim=dim, cb=cb, mode=mode, margin=config.margin)

    out_dir = _out_dir(config)
    stem = f"{input_path.stem}_x{config.scale}"
    sr_path = out_dir / f"{stem}.png"
    save_image(sr_path, out.sr)

    heat = np.kron(out.mask.astype(np.uint8) * 255,
                   np.ones((PATCH_SIZE, PATCH_SIZE), dtype=np.uint8))
    heat = heat[: lr.height, : lr.width]
    heat_path = out_dir / f"{stem}_mask.png"
    with open(heat_path, "wb") as fh:
        fh.write(encode_gray_png(heat))

    routing = {
        "input": str(input_path),
        "scale": config.scale,
        "mode": mode,
        "grid_rows": int(out.mask.shape[0]),
        "grid_cols": int(out.mask.shape[1]),
        "pb_fraction": out.plain_fraction,
        "mask": out.mask.astype(int).tolist(),
        "seconds": out.seconds,
        "config": config.to_dict(),
    }
    routing_path = out_dir / f"{stem}_routing.json"
    with open(routing_path, "w", encoding="utf-8") as fh:
        json.dump(routing, fh, sort_keys=True, indent=2)
    print(f"wrote {sr_path} ({lr.width * config.scale}x{lr.height * config.scale}), "
          f"{heat_path}, {routing_path}; plain fraction {out.plain_fraction:.3f}")
    return 0


def cmd_evaluate(config: RunConfig) -> int:
    mode = config.mode or "bicubic"
    if mode not in EVAL_MODES:
        raise ConfigError(f"evaluate mode must be one of {EVAL_MODES}, got {mode!r}")
    if not config.hr_dir:
        raise ConfigError("hr_dir not set in config")
    echo = config.to_dict()
    if mode == "bicubic":
        report = evaluate_bicubic(config.hr_dir, config.scale, antialias=config.antialias,
                                  limit=config.limit, config=echo)
    else:
        dim = _load_dim(config) if mode == "adaptive" else None
        cb = _load_cb(config) if mode in ("cb", "adaptive") else None
        report = evaluate_patches(config.hr_dir, config.scale, mode, dim=dim, cb=cb,
                                  split_db=config.bins[0], antialias=config.antialias,
                                  limit=config.limit, config=echo)
    stem = _out_dir(config) / f"report-{report.dataset}-{mode}-x{config.scale}"
    jsonl_path, csv_path = report.write(stem)
    mean = report.mean_row
    line = (f"{report.dataset} x{config.scale} {mode}: "
            f"psnr {mean['psnr_db']:.4f} dB ssim {mean['ssim']:.4f} "
            f"({len(report.rows)} images)")
    if "pooled_psnr_db" in report.aggregates:
        line += (f"; pooled over {report.aggregates['patch_count']} patches: "
                 f"psnr {report.aggregates['pooled_psnr_db']:.4f} dB")
    print(line)
    print(f"wrote {jsonl_path} and {csv_path}")
    return 0


def cmd_bench(config: RunConfig) -> int:
    mode = config.mode or "dual"
    if mode not in SR_MODES:
        raise ConfigError(f"bench mode must be one of {SR_MODES}, got {mode!r}")
    if not config.hr_dir:
        raise ConfigError("hr_dir not set in config")
    dim = _load_dim(config) if mode == "dual" else None
    cb = _load_cb(config) if mode in ("cb", "dual") else None
    result = bench_time(config.hr_dir, config.scale, dim=dim, cb=cb, mode=mode,
                        margin=config.margin, limit=config.limit)
    result["config"] = config.to_dict()
    out_path = _out_dir(config) / f"bench-{result['dataset']}-{mode}-x{config.scale}.json"
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, sort_keys=True, indent=2)
    print(f"{result['dataset']} x{config.scale} {mode}: "
          f"{result['seconds_per_frame_median']:.3f} s/frame median over "
          f"{result['frames']} frames, {result['param_mb']:.3f} MB parameters")
    print(f"wrote {out_path}")
    return 0


COMMANDS = {
    "build-dataset": cmd_build_dataset,
    "train-dim": cmd_train_dim,
    "train-cb": cmd_train_cb,
    "super-resolve": cmd_super_resolve,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dasr",
        description="Difficulty-adaptive single-image super-resolution toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="path to a flat JSON config file")
        cmd.add_argument("--scale", type=int, help="override the config scale (2, 3, or 4)")
        cmd.add_argument("--mode", help="override the config mode")
        cmd.add_argument("--seed", type=int, help="override the config seed")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_file(args.config)
        config.override(scale=args.scale, mode=args.mode, seed=args.seed)
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except PrerequisiteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DatasetError, DecodeError, DimensionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
