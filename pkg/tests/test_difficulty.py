"""Difficulty labeling, the patch store, and the classifier training loop."""

import numpy as np
import pytest

from dasr.difficulty import (
    DEFAULT_BOUNDARIES,
    NUM_CLASSES,
    DifficultyBins,
    DimModel,
    PatchRecord,
    PatchStore,
    TrainConfig,
    build_dataset,
    classify,
    generate_mask,
    image_to_pairs,
    label_patch,
    train_dim,
)
from dasr.errors import ConfigError, DatasetError, DimensionError
from dasr.image import PlanarImage
from dasr.optim import halved_lr
from dasr.patches import PatchPair
from dasr.resample import degrade

from conftest import flat_noise_store, synthetic_rgb, write_png


def test_default_boundaries():
    assert DEFAULT_BOUNDARIES == (45.0, 37.5, 32.5, 27.5)
    assert DifficultyBins().boundaries == DEFAULT_BOUNDARIES


def test_bins_validation():
    with pytest.raises(ConfigError):
        DifficultyBins((45.0, 37.5, 37.5, 27.5))  # not strictly descending
    with pytest.raises(ConfigError):
        DifficultyBins((45.0, 37.5, 32.5))  # wrong count


def test_classify_psnr_boundaries_belong_to_easier_class():
    bins = DifficultyBins()
    cases = [
        (100.0, 1), (45.0, 1), (44.999, 2), (37.5, 2), (37.499, 3),
        (32.5, 3), (32.499, 4), (27.5, 4), (27.499, 5), (0.0, 5),
    ]
    for value, expected in cases:
        assert bins.classify_psnr(value) == expected, value


def _pair_from_hr(hr, scale):
    lr = degrade(PlanarImage(y=hr), scale).y
    return PatchPair(lr=lr, hr=hr)


def test_label_patch_flat_is_class_one():
    hr = np.full((96, 96), 131.0)
    assert label_patch(_pair_from_hr(hr, 2), 2, DifficultyBins()) == 1


def test_label_patch_noise_is_class_five():
    hr = np.random.default_rng(0).uniform(0, 255, (96, 96))
    assert label_patch(_pair_from_hr(hr, 2), 2, DifficultyBins()) == 5


def test_label_patch_scale_mismatch():
    hr = np.zeros((96, 96))
    with pytest.raises(DimensionError):
        label_patch(_pair_from_hr(hr, 2), 3, DifficultyBins())


def _small_store(scale=2, n=5, seed=3):
    rng = np.random.default_rng(seed)
    store = PatchStore(scale=scale)
    for i in range(n):
        store.records.append(PatchRecord(
            image_id=f"img_{i:03d}", row=i, col=2 * i, label=1 + i % NUM_CLASSES,
            lr=rng.uniform(0, 255, (48, 48)).astype(np.float32),
            hr=rng.uniform(0, 255, (48 * scale, 48 * scale)).astype(np.float32),
        ))
    return store


def test_store_round_trip(tmp_path):
    store = _small_store()
    path = tmp_path / "patches.dps"
    store.save(path)
    back = PatchStore.load(path)
    assert back.scale == store.scale and back.patch_size == store.patch_size
    assert len(back) == len(store)
    for a, b in zip(store.records, back.records):
        assert (a.image_id, a.row, a.col, a.label) == (b.image_id, b.row, b.col, b.label)
        assert np.array_equal(a.lr, b.lr) and a.lr.dtype == b.lr.dtype
        assert np.array_equal(a.hr, b.hr)


def test_store_resave_is_byte_identical(tmp_path):
    store = _small_store()
    p1, p2 = tmp_path / "a.dps", tmp_path / "b.dps"
    store.save(p1)
    PatchStore.load(p1).save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_store_rejects_bad_magic_and_version(tmp_path):
    path = tmp_path / "bad.dps"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(DatasetError, match="magic"):
        PatchStore.load(path)
    store = _small_store(n=1)
    good = tmp_path / "good.dps"
    store.save(good)
    blob = bytearray(good.read_bytes())
    blob[4] = 99  # version field
    bad = tmp_path / "ver.dps"
    bad.write_bytes(bytes(blob))
    with pytest.raises(DatasetError, match="version"):
        PatchStore.load(bad)


def test_store_detects_corrupt_record_length(tmp_path):
    store = _small_store(n=1)
    path = tmp_path / "c.dps"
    store.save(path)
    blob = bytearray(path.read_bytes())
    blob[13] += 1  # first record length prefix
    path.write_bytes(bytes(blob))
    with pytest.raises(DatasetError, match="length"):
        PatchStore.load(path)


def test_histogram_counts_every_class():
    store = _small_store(n=7)
    hist = store.histogram()
    assert set(hist) == {1, 2, 3, 4, 5}
    assert sum(hist.values()) == 7
    assert hist[1] == 2 and hist[2] == 2 and hist[5] == 1


def test_image_to_pairs_geometry():
    hr = np.random.default_rng(1).uniform(0, 255, (100, 96))
    pairs = image_to_pairs(hr, 2, image_id="x")
    # LR is 50x48 -> padded to 96x48 -> 2x1 grid
    assert len(pairs) == 2
    assert pairs[0].lr.shape == (48, 48) and pairs[0].hr.shape == (96, 96)
    assert np.array_equal(pairs[0].hr, hr[:96, :96])
    assert (pairs[1].row, pairs[1].col) == (1, 0)
    assert pairs[0].source_id == "x"


def test_image_to_pairs_padding_mirrors_hr():
    hr = np.random.default_rng(2).uniform(0, 255, (100, 96))
    pairs = image_to_pairs(hr, 2, image_id="x")
    # rows 100..191 of the padded HR mirror rows 98..7
    pad = pairs[1].hr
    assert np.array_equal(pad[:4], hr[96:100])
    assert np.array_equal(pad[4], hr[98])
    assert np.array_equal(pad[5], hr[97])


def test_build_dataset_matches_frozen_histogram(hr_dir, mixed_store):
    assert len(mixed_store) == 24
    assert mixed_store.histogram() == {1: 8, 2: 0, 3: 0, 4: 1, 5: 15}
    assert mixed_store.scale == 2


def test_build_dataset_limit_and_order(hr_dir):
    store = build_dataset(hr_dir, 2, limit=1)
    ids = {rec.image_id for rec in store.records}
    assert len(ids) == 1
    assert min(ids) == sorted(p.stem for p in hr_dir.glob("*.png"))[0]


def test_build_dataset_skips_unreadable_files(tmp_path, caplog):
    write_png(tmp_path / "ok.png", synthetic_rgb(100, 100, 0))
    (tmp_path / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\n garbage")
    store = build_dataset(tmp_path, 2)
    assert {rec.image_id for rec in store.records} == {"ok"}
    assert any("skipping" in r.message for r in caplog.records)


def test_build_dataset_empty_dir(tmp_path):
    with pytest.raises(DatasetError, match="no PNG"):
        build_dataset(tmp_path, 2)
    (tmp_path / "only.png").write_bytes(b"junk")
    with pytest.raises(DatasetError, match="no readable"):
        build_dataset(tmp_path, 2)


def test_classify_rows_are_probabilities(trained_dim):
    rng = np.random.default_rng(4)
    patches = [rng.uniform(0, 255, (48, 48)).astype(np.float32) for _ in range(7)]
    probs = classify(trained_dim, patches)
    assert probs.shape == (7, 5)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-5)
    assert (probs >= 0).all()


def test_classify_chunking_is_invisible(trained_dim):
    rng = np.random.default_rng(5)
    patches = [rng.uniform(0, 255, (48, 48)).astype(np.float32) for _ in range(9)]
    a = classify(trained_dim, patches, batch_size=256)
    b = classify(trained_dim, patches, batch_size=2)
    # BLAS sums in batch-shape-dependent order, so float32 agreement only
    assert np.allclose(a, b, atol=1e-5)
    assert np.array_equal(np.argmax(a, axis=1), np.argmax(b, axis=1))


def test_classify_duplicate_patches_get_identical_rows(trained_dim):
    rng = np.random.default_rng(12)
    p = rng.uniform(0, 255, (48, 48)).astype(np.float32)
    q = rng.uniform(0, 255, (48, 48)).astype(np.float32)
    probs = classify(trained_dim, [p, q, p])
    assert np.array_equal(probs[0], probs[2])
    assert not np.array_equal(probs[0], probs[1])


def test_classify_rejects_wrong_patch_size(trained_dim):
    with pytest.raises(DimensionError):
        classify(trained_dim, [np.zeros((32, 32), dtype=np.float32)])


def test_generate_mask_routes_on_class_one_max():
    assert generate_mask([0.9, 0.05, 0.03, 0.01, 0.01]) == 1
    assert generate_mask([0.05, 0.9, 0.03, 0.01, 0.01]) == 0
    assert generate_mask([0.2, 0.2, 0.2, 0.2, 0.2]) == 1  # tie goes plain
    assert generate_mask([0.3, 0.3, 0.2, 0.1, 0.1]) == 1
    with pytest.raises(DimensionError):
        generate_mask([0.5, 0.5])


def test_train_dim_rejects_single_class_store():
    rng = np.random.default_rng(6)
    store = PatchStore(scale=2)
    for i in range(4):
        store.records.append(PatchRecord(
            image_id="x", row=0, col=i, label=3,
            lr=rng.uniform(0, 255, (48, 48)).astype(np.float32),
            hr=rng.uniform(0, 255, (96, 96)).astype(np.float32),
        ))
    with pytest.raises(DatasetError, match="degenerate"):
        train_dim(store)


def test_train_dim_is_deterministic_per_seed():
    store = flat_noise_store(n_per_class=6, seed=2)
    cfg = TrainConfig(epochs=2, seed=1)
    m1, h1 = train_dim(store, cfg)
    m2, h2 = train_dim(store, cfg)
    assert h1 == h2
    for name, p in m1.net.parameters().items():
        assert np.array_equal(p.data, m2.net.parameters()[name].data), name


def test_train_dim_history_shape_and_lr_schedule():
    store = flat_noise_store(n_per_class=6, seed=2)
    cfg = TrainConfig(epochs=3, lr=1e-4, lr_halve_every=2, seed=0)
    model, history = train_dim(store, cfg)
    assert [row["epoch"] for row in history] == [0, 1, 2, 3]
    assert history[0]["lr"] == 1e-4
    assert [row["lr"] for row in history[1:]] == [
        halved_lr(1e-4, e, 2) for e in (1, 2, 3)
    ]
    assert history[3]["lr"] == 5e-5
    assert all(np.isfinite(row["loss"]) for row in history)
    assert model.scale == 2


def test_untrained_loss_is_chance_level():
    # near-zero head logits give a uniform prediction, so the epoch-0
    # loss on a balanced store is the 5-class chance level ln(5)/5
    rng = np.random.default_rng(9)
    store = PatchStore(scale=2)
    for i in range(40):
        store.records.append(PatchRecord(
            image_id="x", row=0, col=i, label=1 + i % 5,
            lr=rng.uniform(0, 255, (48, 48)).astype(np.float32),
            hr=rng.uniform(0, 255, (96, 96)).astype(np.float32),
        ))
    _, history = train_dim(store, TrainConfig(epochs=1, seed=0))
    assert abs(history[0]["loss"] - np.log(5) / 5) < 0.05


def test_train_dim_loss_decreases_early(separable_store):
    _, history = train_dim(separable_store, TrainConfig(epochs=5, seed=0))
    losses = [row["loss"] for row in history]
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))


def test_train_dim_learns_separable_labels(trained_dim, separable_store):
    lrs = [rec.lr for rec in separable_store.records]
    labels = np.array([rec.label for rec in separable_store.records])
    probs = classify(trained_dim, lrs)
    acc = float((np.argmax(probs, axis=1) + 1 == labels).mean())
    assert acc >= 0.95


def test_dim_model_round_trip(tmp_path, trained_dim):
    path = tmp_path / "dim.ckpt"
    trained_dim.save(path)
    back = DimModel.load(path)
    assert back.scale == trained_dim.scale
    assert back.bins.boundaries == trained_dim.bins.boundaries
    assert back.input_norm == trained_dim.input_norm
    rng = np.random.default_rng(8)
    patches = [rng.uniform(0, 255, (48, 48)).astype(np.float32) for _ in range(3)]
    assert np.array_equal(classify(trained_dim, patches), classify(back, patches))
