"""Shared fixtures: synthetic images, labeled stores, and micro models.

Heavier artifacts (trained models, the synthetic benchmark directory) are
session-scoped so the suite builds each of them once.
"""

import numpy as np
import pytest

from dasr.difficulty import (
    DifficultyBins,
    DimModel,
    DimNet,
    PatchRecord,
    PatchStore,
    TrainConfig,
    label_patch,
    train_dim,
)
from dasr.image import RgbImage, encode_png
from dasr.patches import PatchPair
from dasr.resample import degrade
from dasr.image import PlanarImage
from dasr.srnet import CbConfig, CbModel, CbNet, CbTrainConfig, train_cb


def synthetic_rgb(h, w, seed):
    """Natural-looking test image: smooth left half, textured right half."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    base = 120 + 60 * np.sin(xx / 23.0) + 40 * np.cos(yy / 31.0)
    tex = rng.uniform(-70, 70, size=(h, w)) * (xx > w // 2)
    edges = 50.0 * ((xx // 16 + yy // 16) % 2) * (xx > w // 2)
    g = np.clip(base + 0.4 * tex + edges, 0, 255)
    rgb = np.stack([g, np.clip(g * 0.9 + 10, 0, 255), np.clip(g * 1.05, 0, 255)], axis=-1)
    return rgb.astype(np.uint8)


def write_png(path, pixels):
    with open(path, "wb") as fh:
        fh.write(encode_png(RgbImage(pixels)))


def flat_noise_store(scale=2, n_per_class=60, seed=11):
    """Labeled store of constant (easy) and uniform-noise (hard) patches."""
    rng = np.random.default_rng(seed)
    bins = DifficultyBins()
    store = PatchStore(scale=scale)
    hr_size = 48 * scale
    for i in range(n_per_class):
        flat = np.full((hr_size, hr_size), float(rng.uniform(10, 245)))
        noise = rng.uniform(0, 255, size=(hr_size, hr_size))
        for kind, hr in (("flat", flat), ("noise", noise)):
            lr = degrade(PlanarImage(y=hr), scale).y
            label = label_patch(PatchPair(lr=lr, hr=hr), scale, bins)
            store.records.append(PatchRecord(
                image_id=kind, row=0, col=i, label=label,
                lr=lr.astype(np.float32), hr=hr.astype(np.float32),
            ))
    return store


def all_easy_dim(scale=2, seed=0):
    """Classifier stub whose output always puts class 1 on top."""
    net = DimNet(np.random.default_rng(seed))
    net.fc3_w.data[:] = 0.0
    net.fc3_b.data[:] = np.array([10.0, 0.0, 0.0, 0.0, 0.0], dtype=np.float32)
    return DimModel(net=net, bins=DifficultyBins(), scale=scale)


@pytest.fixture(scope="session")
def hr_dir(tmp_path_factory):
    """Four synthetic benchmark images with mixed difficulty content."""
    root = tmp_path_factory.mktemp("hr")
    for i in range(4):
        write_png(root / f"img{i:02d}.png", synthetic_rgb(150 + 10 * i, 200 + 14 * i, 100 + i))
    return root


@pytest.fixture(scope="session")
def mixed_store(hr_dir):
    from dasr.difficulty import build_dataset

    return build_dataset(hr_dir, 2)


@pytest.fixture(scope="session")
def separable_store():
    return flat_noise_store()


@pytest.fixture(scope="session")
def trained_dim(separable_store):
    model, history = train_dim(separable_store, TrainConfig(epochs=8, seed=0))
    return model


@pytest.fixture(scope="session")
def micro_cb(mixed_store, trained_dim):
    config = CbTrainConfig(epochs=2, batch_size=16, seed=0, channels=8, blocks=1)
    model, history = train_cb(mixed_store, trained_dim, config)
    return model


@pytest.fixture()
def untrained_cb():
    return CbModel(net=CbNet(CbConfig(scale=2, channels=8, blocks=2),
                             np.random.default_rng(3)))
