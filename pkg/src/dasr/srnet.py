"""Residual super-resolution branch and the dual-branch reconstruction pipeline.

The complex branch (CB) is a compact residual conv-net on normalized [0,1]
luma. Its tail conv is zero-initialized and its output rides on a global
bicubic skip, so an untrained CB reproduces the plain branch exactly:

    sr = pb_upscale(patch) + 255 * residual(patch / 255)

Reconstruction tiles the luma plane into 48x48 patches, asks the difficulty
classifier for a routing mask (1 = plain bicubic, 0 = complex branch), runs
the two branches, fuses per patch, and stitches the canvas back together.
Chroma, when present, is always upscaled bicubically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .checkpoint import KIND_CB, load_checkpoint, save_checkpoint
from .difficulty import DimModel, PatchStore, classify, generate_mask
from .errors import ConfigError, DimensionError
from .image import PlanarImage
from .metrics import psnr
from .optim import Adam, halved_lr
from .patches import PATCH_SIZE, crop_margin, stitch, tile
from .resample import SCALES, pb_upscale


@dataclass(frozen=True)
class CbConfig:
    """Architecture knobs for the complex branch."""

    scale: int
    channels: int = 32
    blocks: int = 4

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale}")
        if self.channels < 1 or self.blocks < 0:
            raise ConfigError(
                f"invalid complex-branch size: channels={self.channels} blocks={self.blocks}"
            )


class CbNet:
    """Head conv, residual blocks, sub-pixel upsampler, zero-init tail."""

    def __init__(self, config: CbConfig, rng: np.random.Generator):
        self.config = config
        ch = config.channels
        self.head_w = ag.kaiming_conv(rng, ch, 1, 3, 3)
        self.head_b = ag.zeros(ch)
        self.block_w: list[tuple[ag.Tensor, ag.Tensor]] = []
        self.block_b: list[tuple[ag.Tensor, ag.Tensor]] = []
        for _ in range(config.blocks):
            self.block_w.append((ag.kaiming_conv(rng, ch, ch, 3, 3),
                                 ag.kaiming_conv(rng, ch, ch, 3, 3)))
            self.block_b.append((ag.zeros(ch), ag.zeros(ch)))
        self.up_w = ag.kaiming_conv(rng, config.scale ** 2, ch, 3, 3)
        self.up_b = ag.zeros(config.scale ** 2)
        self.tail_w = ag.Tensor(np.zeros((1, 1, 3, 3), dtype=np.float32), requires_grad=True)
        self.tail_b = ag.zeros(1)

    def parameters(self) -> dict[str, ag.Tensor]:
        params = {"head_w": self.head_w, "head_b": self.head_b,
                  "up_w": self.up_w, "up_b": self.up_b,
                  "tail_w": self.tail_w, "tail_b": self.tail_b}
        for i, ((w1, w2), (b1, b2)) in enumerate(zip(self.block_w, self.block_b)):
            params[f"block{i}_w1"] = w1
            params[f"block{i}_b1"] = b1
            params[f"block{i}_w2"] = w2
            params[f"block{i}_b2"] = b2
        return params

    def residual(self, x: ag.Tensor) -> ag.Tensor:
        """Residual field for a normalized (N,1,H,W) input, same scale-up shape."""
        out = ag.relu(ag.conv2d(x, self.head_w, self.head_b, pad=1))
        for (w1, w2), (b1, b2) in zip(self.block_w, self.block_b):
            inner = ag.relu(ag.conv2d(out, w1, b1, pad=1))
            inner = ag.conv2d(inner, w2, b2, pad=1)
            out = ag.add(out, inner)
        out = ag.conv2d(out, self.up_w, self.up_b, pad=1)
        out = ag.pixel_shuffle(out, self.config.scale)
        return ag.conv2d(out, self.tail_w, self.tail_b, pad=1)


@dataclass
class CbModel:
    """Trained complex branch plus its architecture description."""

    net: CbNet

    @property
    def scale(self) -> int:
        return self.net.config.scale

    def save(self, path, extra_meta: dict | None = None) -> None:
        cfg = self.net.config
        meta = {"scale": cfg.scale, "channels": cfg.channels, "blocks": cfg.blocks}
        if extra_meta:
            meta.update(extra_meta)
        tensors = {name: p.data for name, p in self.net.parameters().items()}
        save_checkpoint(path, KIND_CB, meta, tensors)

    @classmethod
    def load(cls, path) -> "CbModel":
        kind, meta, tensors = load_checkpoint(path)
        if kind != KIND_CB:
            raise ConfigError(f"{path}: not a complex-branch checkpoint")
        config = CbConfig(scale=int(meta["scale"]), channels=int(meta["channels"]),
                          blocks=int(meta["blocks"]))
        net = CbNet(config, np.random.default_rng(0))
        params = net.parameters()
        if set(params) != set(tensors):
            raise ConfigError(f"{path}: tensor names do not match the branch architecture")
        for name, param in params.items():
            if param.data.shape != tensors[name].shape:
                raise ConfigError(
                    f"{path}: tensor {name} has shape {tensors[name].shape}, "
                    f"expected {param.data.shape}"
                )
            param.data = tensors[name].astype(np.float32)
        return cls(net=net)


def cb_forward(model: CbModel, patches: np.ndarray,
               pb: np.ndarray | None = None) -> np.ndarray:
    """Complex-branch SR for a (N,H,W) stack of [0,255] luma patches.

    ``pb`` optionally supplies precomputed bicubic upscales of the same
    patches (the global skip); otherwise they are computed here.
    """
    raw = np.asarray(patches, dtype=np.float64)
    if raw.ndim != 3:
        raise DimensionError(f"expected a (N,H,W) patch stack, got shape {raw.shape}")
    # the skip keeps full input precision; only the net input drops to float32
    if pb is None:
        pb = np.stack([pb_upscale(p, model.scale) for p in raw])
    x = raw.astype(np.float32)
    res = model.net.residual(ag.Tensor(x[:, None] / np.float32(255.0)))
    return np.asarray(pb, dtype=np.float64) + 255.0 * res.data[:, 0].astype(np.float64)


def fuse(cb: np.ndarray, pb: np.ndarray, mask: int) -> np.ndarray:
    """Blend the two branch outputs: (1 - mask) * cb + mask * pb.

    The mask is binary, so the blend is evaluated as an exact selection and
    the result is bitwise equal to the chosen branch.
    """
    cb = np.asarray(cb, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    if cb.shape != pb.shape:
        raise DimensionError(f"branch outputs disagree in shape: {cb.shape} vs {pb.shape}")
    if mask not in (0, 1):
        raise ConfigError(f"mask must be 0 or 1, got {mask!r}")
    return np.array(pb if mask == 1 else cb, dtype=np.float64, copy=True)


# ---------------------------------------------------------------------------
# complex-branch training


@dataclass
class CbTrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_halve_every: int = 100
    seed: int = 0
    channels: int = 32
    blocks: int = 4
    augment: bool = True


def _hard_weights(dim: DimModel, patches: np.ndarray) -> np.ndarray:
    probs = classify(dim, patches)
    return np.array([1.0 - generate_mask(p) for p in probs], dtype=np.float32)


def train_cb(store: PatchStore, dim: DimModel, config: CbTrainConfig | None = None):
    """Train the complex branch on the hard patches of a labeled store.

    The difficulty classifier is frozen; its routing decision weights the L1
    loss so plain-branch patches contribute nothing. Batches routed entirely
    to the plain branch are skipped outright (no optimizer step), and only
    the hard rows of a mixed batch are pushed through the network, which
    yields the same masked loss at less cost.

    Returns (model, log) with one row per epoch; epoch 0 is the untrained
    state, whose loss is exactly the plain branch's masked L1.
    """
    from .patches import orient

    config = config or CbTrainConfig()
    scale = store.scale
    if dim.scale != scale:
        raise ConfigError(f"classifier was built for scale {dim.scale}, store is {scale}")

    lr_all = np.stack([rec.lr for rec in store.records]).astype(np.float32)
    hr_all = np.stack([rec.hr for rec in store.records]).astype(np.float64)
    weights = _hard_weights(dim, lr_all)

    rng = np.random.default_rng(config.seed)
    net = CbNet(CbConfig(scale=scale, channels=config.channels, blocks=config.blocks), rng)
    model = CbModel(net=net)
    params = list(net.parameters().values())
    opt = Adam(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    n = lr_all.shape[0]

    def masked_epoch_loss() -> float:
        if weights.sum() == 0:
            return 0.0
        total = 0.0
        hard = np.flatnonzero(weights)
        for start in range(0, hard.size, 64):
            sel = hard[start : start + 64]
            sr = cb_forward(model, lr_all[sel])
            total += float(np.abs(sr - hr_all[sel]).mean(axis=(1, 2)).sum())
        return total / hard.size

    history = [{"epoch": 0, "loss": masked_epoch_loss(), "lr": config.lr,
                "hard_fraction": float(weights.mean())}]

    for epoch in range(1, config.epochs + 1):
        opt.lr = halved_lr(config.lr, epoch, config.lr_halve_every)
        order = rng.permutation(n)
        epoch_loss, epoch_rows = 0.0, 0
        for start in range(0, n, config.batch_size):
            sel = order[start : start + config.batch_size]
            hard = sel[weights[sel] > 0]
            if hard.size == 0:
                continue
            lr_batch = lr_all[hard]
            hr_batch = hr_all[hard]
            if config.augment:
                variants = rng.integers(0, 8, size=hard.size)
                lr_batch = np.stack([orient(p, v) for p, v in zip(lr_batch, variants)])
                hr_batch = np.stack([orient(p, v) for p, v in zip(hr_batch, variants)])
            opt.zero_grad()
            pb = np.stack([pb_upscale(p, scale) for p in lr_batch])
            res = net.residual(ag.Tensor(lr_batch[:, None] / np.float32(255.0)))
            pred = ag.scale_shift(res, 255.0, pb[:, None])
            loss = ag.weighted_l1(pred, hr_batch[:, None],
                                  np.ones(hard.size, dtype=np.float32))
            loss.assert_finite("training loss")
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data) * hard.size
            epoch_rows += hard.size
        history.append({
            "epoch": epoch,
            "loss": epoch_loss / epoch_rows if epoch_rows else 0.0,
            "lr": opt.lr,
            "hard_fraction": float(weights.mean()),
        })
    return model, history


# ---------------------------------------------------------------------------
# end-to-end reconstruction


@dataclass
class SrOutput:
    """Reconstruction result plus routing bookkeeping."""

    sr: PlanarImage
    mask: np.ndarray
    probs: np.ndarray
    seconds: float
    patch_outputs: list[np.ndarray] = field(default_factory=list)

    @property
    def plain_fraction(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0


def _route(dim: DimModel | None, patches: list[np.ndarray], mode: str):
    n = len(patches)
    if mode == "pb":
        return np.ones(n, dtype=np.int64), np.zeros((n, 5), dtype=np.float32)
    if mode == "cb":
        return np.zeros(n, dtype=np.int64), np.zeros((n, 5), dtype=np.float32)
    if mode != "dual":
        raise ConfigError(f"mode must be pb, cb, or dual, got {mode!r}")
    if dim is None:
        raise ConfigError("dual-branch reconstruction needs a difficulty classifier")
    probs = classify(dim, patches)
    mask = np.array([generate_mask(p) for p in probs], dtype=np.int64)
    return mask, probs


def super_resolve(lr: PlanarImage | np.ndarray, scale: int,
                  dim: DimModel | None = None, cb: CbModel | None = None,
                  mode: str = "dual", margin: int = 0,
                  cb_batch: int = 64) -> SrOutput:
    """Reconstruct an LR image at the given scale with per-patch routing.

    ``mode`` forces a branch ("pb", "cb") or routes per patch ("dual").
    ``margin`` adds reflected context around each tile, cropped after the
    branches run, trading compute for fewer seam artifacts.
    """
    started = time.perf_counter()
    if scale not in SCALES:
        raise ConfigError(f"scale must be one of {SCALES}, got {scale}")
    plane = lr.y if isinstance(lr, PlanarImage) else np.asarray(lr, dtype=np.float64)
    patches, grid = tile(plane, PATCH_SIZE, margin=margin)
    cores = [crop_margin(p, margin, 1) for p in patches] if margin else patches
    mask, probs = _route(dim, cores, mode)

    if mask.min() == 0 and cb is None:
        raise ConfigError("some patches route to the complex branch but no model was given")
    if cb is not None and cb.scale != scale:
        raise ConfigError(f"complex branch was built for scale {cb.scale}, requested {scale}")

    outputs: list[np.ndarray | None] = [None] * len(patches)
    for i, patch in enumerate(patches):
        if mask[i] == 1:
            outputs[i] = crop_margin(pb_upscale(patch, scale), margin, scale)
    hard = [i for i in range(len(patches)) if mask[i] == 0]
    for start in range(0, len(hard), cb_batch):
        sel = hard[start : start + cb_batch]
        stack = np.stack([patches[i] for i in sel])
        sr_stack = cb_forward(cb, stack)
        for j, i in enumerate(sel):
            outputs[i] = crop_margin(sr_stack[j], margin, scale)

    sr_y = stitch(outputs, grid, scale)
    sr = PlanarImage(y=sr_y)
    if isinstance(lr, PlanarImage) and lr.has_chroma:
        sr = PlanarImage(
            y=sr_y,
            cb=pb_upscale(lr.cb, scale),
            cr=pb_upscale(lr.cr, scale),
        )
    return SrOutput(sr=sr, mask=mask.reshape(grid.rows, grid.cols), probs=probs,
                    seconds=time.perf_counter() - started, patch_outputs=outputs)


def oracle_fusion_gain(pairs, scale: int, cb: CbModel) -> dict[str, float]:
    """PSNR of per-patch best-branch selection vs either branch alone.

    For each LR/HR pair the branch with the higher patch PSNR wins; the
    returned means quantify the headroom an ideal router would capture.
    """
    pb_scores, cb_scores, best_scores = [], [], []
    for pair in pairs:
        pb = pb_upscale(pair.lr, scale)
        sr = cb_forward(cb, pair.lr[None])[0]
        hr = np.asarray(pair.hr, dtype=np.float64)
        p_pb, p_cb = psnr(pb, hr), psnr(sr, hr)
        pb_scores.append(p_pb)
        cb_scores.append(p_cb)
        best_scores.append(max(p_pb, p_cb))
    return {
        "pb_mean": float(np.mean(pb_scores)),
        "cb_mean": float(np.mean(cb_scores)),
        "oracle_mean": float(np.mean(best_scores)),
    }
