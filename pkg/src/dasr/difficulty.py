"""PSNR-prior difficulty machinery.

A patch's reconstruction difficulty is indicated by the PSNR of its plain
bicubic upscale against the ground truth: flat regions interpolate nearly
perfectly (high PSNR), textured regions do not. That score is binned into 5
classes (class 1 easiest), a small conv-net classifier is trained on the
binned labels so difficulty can be predicted without a reference at test
time, and its class-1-vs-rest decision drives the branch-selection mask.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .checkpoint import KIND_DIM, load_checkpoint, save_checkpoint
from .errors import ConfigError, DatasetError, DimensionError
from .image import load_image
from .metrics import psnr
from .optim import Adam, halved_lr
from .patches import PATCH_SIZE, PatchPair, pad_to_multiple, tile
from .resample import crop_to_scale, degrade, pb_upscale

log = logging.getLogger(__name__)

NUM_CLASSES = 5
DEFAULT_BOUNDARIES = (45.0, 37.5, 32.5, 27.5)
INPUT_NORM = 255.0

STORE_MAGIC = b"DPS1"
STORE_VERSION = 1


@dataclass(frozen=True)
class DifficultyBins:
    """Four descending PSNR thresholds separating classes 1..5.

    A PSNR equal to a boundary belongs to the easier class (class 1 is
    "PSNR >= boundaries[0]"), so the 45 dB easy/hard split is ">= 45".
    """

    boundaries: tuple[float, float, float, float] = DEFAULT_BOUNDARIES

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if len(b) != NUM_CLASSES - 1 or any(b[i] <= b[i + 1] for i in range(len(b) - 1)):
            raise ConfigError(f"bin boundaries must be 4 strictly descending values, got {b}")
        object.__setattr__(self, "boundaries", b)

    def classify_psnr(self, value: float) -> int:
        """Map a capped PSNR to a class index in 1..5."""
        for k, bound in enumerate(self.boundaries):
            if value >= bound:
                return k + 1
        return NUM_CLASSES


def label_patch(pair: PatchPair, scale: int, bins: DifficultyBins) -> int:
    """Difficulty class of a patch: bin of its bicubic-upscale PSNR (no shave)."""
    if pair.scale() != scale:
        raise DimensionError(
            f"patch pair implies scale {pair.scale()}, expected {scale}"
        )
    return bins.classify_psnr(psnr(pb_upscale(pair.lr, scale), pair.hr, shave=0))


# ---------------------------------------------------------------------------
# labeled patch store ("DPS1" records on disk)


@dataclass
class PatchRecord:
    image_id: str
    row: int
    col: int
    label: int
    lr: np.ndarray
    hr: np.ndarray


@dataclass
class PatchStore:
    """In-memory labeled patch set with a binary on-disk form."""

    scale: int
    patch_size: int = PATCH_SIZE
    records: list[PatchRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def histogram(self) -> dict[int, int]:
        counts = {c: 0 for c in range(1, NUM_CLASSES + 1)}
        for rec in self.records:
            counts[rec.label] += 1
        return counts

    def save(self, path) -> None:
        hr_size = self.patch_size * self.scale
        with open(path, "wb") as fh:
            fh.write(STORE_MAGIC)
            fh.write(struct.pack("<HBHI", STORE_VERSION, self.scale, self.patch_size,
                                 len(self.records)))
            for rec in self.records:
                ident = rec.image_id.encode("utf-8")
                lr = np.ascontiguousarray(rec.lr, dtype="<f4")
                hr = np.ascontiguousarray(rec.hr, dtype="<f4")
                if lr.shape != (self.patch_size, self.patch_size):
                    raise DimensionError(f"record LR patch has shape {lr.shape}")
                if hr.shape != (hr_size, hr_size):
                    raise DimensionError(f"record HR patch has shape {hr.shape}")
                body = (
                    struct.pack("<H", len(ident)) + ident
                    + struct.pack("<IIB", rec.row, rec.col, rec.label)
                    + lr.tobytes() + hr.tobytes()
                )
                fh.write(struct.pack("<I", len(body)))
                fh.write(body)

    @classmethod
    def load(cls, path) -> "PatchStore":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != STORE_MAGIC:
            raise DatasetError(f"{path}: not a patch store (bad magic {blob[:4]!r})")
        version, scale, patch_size, count = struct.unpack_from("<HBHI", blob, 4)
        if version != STORE_VERSION:
            raise DatasetError(f"{path}: unsupported store version {version}")
        store = cls(scale=scale, patch_size=patch_size)
        hr_size = patch_size * scale
        pos = 13
        for _ in range(count):
            (rec_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            end = pos + rec_len
            (id_len,) = struct.unpack_from("<H", blob, pos)
            image_id = blob[pos + 2 : pos + 2 + id_len].decode("utf-8")
            cursor = pos + 2 + id_len
            row, col, label = struct.unpack_from("<IIB", blob, cursor)
            cursor += 9
            lr = np.frombuffer(blob, dtype="<f4", count=patch_size * patch_size, offset=cursor)
            cursor += 4 * patch_size * patch_size
            hr = np.frombuffer(blob, dtype="<f4", count=hr_size * hr_size, offset=cursor)
            cursor += 4 * hr_size * hr_size
            if cursor != end:
                raise DatasetError(f"{path}: record length mismatch at offset {pos - 4}")
            store.records.append(PatchRecord(
                image_id=image_id, row=row, col=col, label=label,
                lr=lr.reshape(patch_size, patch_size).astype(np.float32),
                hr=hr.reshape(hr_size, hr_size).astype(np.float32),
            ))
            pos = end
        return store


def image_to_pairs(y_plane: np.ndarray, scale: int, image_id: str = "") -> list[PatchPair]:
    """Degrade an HR Y plane and pair each LR tile with its HR counterpart.

    The HR plane must already be cropped to a multiple of scale. Tiles that
    fall in the LR reflection padding are paired with identically mirrored
    HR content.
    """
    from .image import PlanarImage

    hr = np.asarray(y_plane, dtype=np.float64)
    lr = degrade(PlanarImage(y=hr), scale).y
    lr_patches, grid = tile(lr, PATCH_SIZE)
    hr_padded = pad_to_multiple(hr, PATCH_SIZE * scale)
    pairs = []
    for patch, cell in zip(lr_patches, grid.cells):
        y0, x0 = cell.y0 * scale, cell.x0 * scale
        size = PATCH_SIZE * scale
        pairs.append(PatchPair(
            lr=patch,
            hr=hr_padded[y0 : y0 + size, x0 : x0 + size].copy(),
            source_id=image_id,
            row=cell.row,
            col=cell.col,
        ))
    return pairs


def build_dataset(hr_dir, scale: int, bins: DifficultyBins | None = None,
                  limit: int | None = None) -> PatchStore:
    """Label every 48x48 LR patch of every PNG under ``hr_dir`` by bicubic PSNR.

    Files are processed in sorted order; unreadable files are skipped with a
    warning. ``limit`` caps the number of images (first N by name).
    """
    bins = bins or DifficultyBins()
    paths = sorted(Path(hr_dir).glob("*.png"))
    if limit is not None:
        paths = paths[:limit]
    if not paths:
        raise DatasetError(f"no PNG files found in {hr_dir}")
    store = PatchStore(scale=scale)
    for path in paths:
        try:
            img = load_image(path)
        except Exception as exc:  # noqa: BLE001 - skip-and-log contract
            log.warning("skipping unreadable file %s: %s", path, exc)
            continue
        hr_y = crop_to_scale(img, scale).y
        for pair in image_to_pairs(hr_y, scale, image_id=path.stem):
            label = label_patch(pair, scale, bins)
            store.records.append(PatchRecord(
                image_id=pair.source_id, row=pair.row, col=pair.col, label=label,
                lr=pair.lr.astype(np.float32), hr=pair.hr.astype(np.float32),
            ))
    if not store.records:
        raise DatasetError(f"no readable PNG files in {hr_dir}")
    hist = store.histogram()
    total = len(store)
    for cls, count in hist.items():
        if count < 0.01 * total:
            log.warning("class %d holds %d/%d patches (< 1%%); labels are skewed",
                        cls, count, total)
    return store


# ---------------------------------------------------------------------------
# the difficulty classifier


class DimNet:
    """Conv-net classifier for 48x48 single-channel patches.

    conv5x5(1->6)/ReLU/pool2 -> conv5x5(6->16)/ReLU/pool2 -> 1296 ->
    fc120/ReLU -> fc84/ReLU -> fc5 logits.
    """

    def __init__(self, rng: np.random.Generator):
        self.conv1_w = ag.kaiming_conv(rng, 6, 1, 5, 5)
        self.conv1_b = ag.zeros(6)
        self.conv2_w = ag.kaiming_conv(rng, 16, 6, 5, 5)
        self.conv2_b = ag.zeros(16)
        self.fc1_w = ag.kaiming_linear(rng, 120, 1296)
        self.fc1_b = ag.zeros(120)
        self.fc2_w = ag.kaiming_linear(rng, 84, 120)
        self.fc2_b = ag.zeros(84)
        # shrunken head: untrained logits stay near zero, so the initial
        # loss sits at the 5-class chance level ln(5)/5 while the random
        # directions still break symmetry for training
        self.fc3_w = ag.kaiming_linear(rng, NUM_CLASSES, 84)
        self.fc3_w.data *= 0.5
        self.fc3_b = ag.zeros(NUM_CLASSES)

    def parameters(self) -> dict[str, ag.Tensor]:
        return {
            "conv1_w": self.conv1_w, "conv1_b": self.conv1_b,
            "conv2_w": self.conv2_w, "conv2_b": self.conv2_b,
            "fc1_w": self.fc1_w, "fc1_b": self.fc1_b,
            "fc2_w": self.fc2_w, "fc2_b": self.fc2_b,
            "fc3_w": self.fc3_w, "fc3_b": self.fc3_b,
        }

    def logits(self, x: ag.Tensor) -> ag.Tensor:
        out = ag.relu(ag.conv2d(x, self.conv1_w, self.conv1_b))
        out = ag.maxpool2(out)
        out = ag.relu(ag.conv2d(out, self.conv2_w, self.conv2_b))
        out = ag.maxpool2(out)
        out = ag.flatten(out)
        out = ag.relu(ag.linear(out, self.fc1_w, self.fc1_b))
        out = ag.relu(ag.linear(out, self.fc2_w, self.fc2_b))
        return ag.linear(out, self.fc3_w, self.fc3_b)


@dataclass
class DimModel:
    """Trained difficulty classifier plus the labeling configuration it assumes."""

    net: DimNet
    bins: DifficultyBins
    scale: int
    input_norm: float = INPUT_NORM

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {
            "bins": list(self.bins.boundaries),
            "scale": self.scale,
            "input_norm": self.input_norm,
            "architecture": "conv5x6-pool-conv5x16-pool-fc120-fc84-fc5",
        }
        if extra_meta:
            meta.update(extra_meta)
        tensors = {name: p.data for name, p in self.net.parameters().items()}
        save_checkpoint(path, KIND_DIM, meta, tensors)

    @classmethod
    def load(cls, path) -> "DimModel":
        kind, meta, tensors = load_checkpoint(path)
        if kind != KIND_DIM:
            raise ConfigError(f"{path}: not a difficulty-classifier checkpoint")
        net = DimNet(np.random.default_rng(0))
        params = net.parameters()
        if set(params) != set(tensors):
            raise ConfigError(f"{path}: tensor names do not match the classifier architecture")
        for name, param in params.items():
            if param.data.shape != tensors[name].shape:
                raise ConfigError(
                    f"{path}: tensor {name} has shape {tensors[name].shape}, "
                    f"expected {param.data.shape}"
                )
            param.data = tensors[name].astype(np.float32)
        return cls(
            net=net,
            bins=DifficultyBins(tuple(meta["bins"])),
            scale=int(meta["scale"]),
            input_norm=float(meta.get("input_norm", INPUT_NORM)),
        )


def _patch_batch(patches, norm: float) -> np.ndarray:
    batch = np.stack([np.asarray(p, dtype=np.float32) for p in patches])
    if batch.ndim != 3 or batch.shape[1] != PATCH_SIZE or batch.shape[2] != PATCH_SIZE:
        raise DimensionError(
            f"classify expects {PATCH_SIZE}x{PATCH_SIZE} patches, got {batch.shape[1:]}"
        )
    return batch[:, None, :, :] / np.float32(norm)


def classify(model: DimModel, patches, batch_size: int = 256) -> np.ndarray:
    """Difficulty probability vectors, one row of 5 per patch."""
    patches = list(patches)
    out = np.empty((len(patches), NUM_CLASSES), dtype=np.float32)
    for start in range(0, len(patches), batch_size):
        chunk = patches[start : start + batch_size]
        x = ag.Tensor(_patch_batch(chunk, model.input_norm))
        probs = ag.softmax(model.net.logits(x))
        out[start : start + len(chunk)] = probs.data
    return out


def generate_mask(prob) -> int:
    """1 (route to the plain branch) iff class 1 attains the maximum probability."""
    p = np.asarray(prob, dtype=np.float64).reshape(-1)
    if p.shape != (NUM_CLASSES,):
        raise DimensionError(f"probability vector must have {NUM_CLASSES} entries, got {p.shape}")
    return int(p[0] >= p.max())


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_halve_every: int = 100
    seed: int = 0
    val_fraction: float = 0.1


def _one_hot(labels: np.ndarray) -> np.ndarray:
    out = np.zeros((labels.size, NUM_CLASSES), dtype=np.float32)
    out[np.arange(labels.size), labels - 1] = 1.0
    return out


def _split(n: int, val_fraction: float, rng: np.random.Generator):
    order = rng.permutation(n)
    n_val = max(1, int(round(n * val_fraction))) if n > 1 else 0
    return order[n_val:], order[:n_val]


def train_dim(store: PatchStore, config: TrainConfig | None = None,
              bins: DifficultyBins | None = None):
    """Train the difficulty classifier on a labeled patch store.

    Returns (model, log): the log holds one row per epoch (epoch 0 is the
    pre-training state) with the mean training loss, the lr in effect, and
    held-out accuracy on a seeded 90/10 split.
    """
    config = config or TrainConfig()
    bins = bins or DifficultyBins()
    labels = np.array([rec.label for rec in store.records], dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DatasetError(
            f"degenerate dataset: all {labels.size} patches fall in class "
            f"{labels[0] if labels.size else '?'}"
        )
    x_all = np.stack([rec.lr for rec in store.records]).astype(np.float32)
    x_all = x_all[:, None, :, :] / np.float32(INPUT_NORM)
    y_all = _one_hot(labels)

    rng = np.random.default_rng(config.seed)
    net = DimNet(rng)
    params = list(net.parameters().values())
    opt = Adam(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    train_idx, val_idx = _split(labels.size, config.val_fraction, rng)

    def evaluate(indices) -> tuple[float, float]:
        if indices.size == 0:
            return float("nan"), float("nan")
        losses, correct = [], 0
        for start in range(0, indices.size, 256):
            sel = indices[start : start + 256]
            probs = ag.softmax(net.logits(ag.Tensor(x_all[sel])))
            losses.append(float(ag.cross_entropy_loss(probs, y_all[sel]).data) * sel.size)
            correct += int((np.argmax(probs.data, axis=1) == labels[sel] - 1).sum())
        return sum(losses) / indices.size, correct / indices.size

    history = []
    init_loss, init_acc = evaluate(train_idx)
    _, init_val_acc = evaluate(val_idx)
    history.append({"epoch": 0, "loss": init_loss, "lr": config.lr,
                    "accuracy": init_val_acc if val_idx.size else init_acc})

    for epoch in range(1, config.epochs + 1):
        opt.lr = halved_lr(config.lr, epoch, config.lr_halve_every)
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        for start in range(0, order.size, config.batch_size):
            sel = order[start : start + config.batch_size]
            opt.zero_grad()
            probs = ag.softmax(net.logits(ag.Tensor(x_all[sel])))
            loss = ag.cross_entropy_loss(probs, y_all[sel])
            loss.assert_finite("training loss")
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data) * sel.size
        _, val_acc = evaluate(val_idx)
        history.append({"epoch": epoch, "loss": epoch_loss / max(order.size, 1),
                        "lr": opt.lr, "accuracy": val_acc})

    model = DimModel(net=net, bins=bins, scale=store.scale)
    return model, history
