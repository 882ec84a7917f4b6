"""Run configuration parsing and the benchmark report round trip."""

import json

import pytest

from dasr.errors import ConfigError, DimensionError
from dasr.report import (
    DEFAULT_BINS,
    BenchmarkReport,
    RunConfig,
    mean_of_rows,
    read_csv,
    read_jsonl,
)


def test_run_config_defaults():
    cfg = RunConfig()
    assert cfg.scale == 2
    assert cfg.bins == DEFAULT_BINS
    assert cfg.epochs == 200 and cfg.batch_size == 64 and cfg.lr == 1e-4
    assert cfg.antialias is True and cfg.augment is True


@pytest.mark.parametrize("kwargs", [
    {"scale": 5},
    {"bins": (45.0, 37.5, 37.5, 27.5)},
    {"bins": (45.0, 37.5, 32.5)},
    {"margin": -1},
    {"epochs": 0},
    {"batch_size": 0},
    {"lr": 0.0},
    {"channels": 0},
    {"blocks": -1},
    {"limit": 0},
])
def test_run_config_validation(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys: scales"):
        RunConfig.from_dict({"scales": 2})
    cfg = RunConfig.from_dict({"scale": 3, "mode": "pb"})
    assert cfg.scale == 3 and cfg.mode == "pb"


def test_from_file_round_trip(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"scale": 4, "hr_dir": "data/set5", "limit": 3}))
    cfg = RunConfig.from_file(path)
    assert cfg.scale == 4 and cfg.hr_dir == "data/set5" and cfg.limit == 3
    bad = tmp_path / "bad.json"
    bad.write_text("not json {")
    with pytest.raises(ConfigError, match="JSON"):
        RunConfig.from_file(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="object"):
        RunConfig.from_file(arr)


def test_override_revalidates():
    cfg = RunConfig()
    cfg.override(scale=3, mode="cb", seed=7)
    assert (cfg.scale, cfg.mode, cfg.seed) == (3, "cb", 7)
    with pytest.raises(ConfigError):
        cfg.override(scale=9)


def test_to_dict_serializes_bins_as_list():
    d = RunConfig().to_dict()
    assert d["bins"] == [45.0, 37.5, 32.5, 27.5]
    assert RunConfig.from_dict(d).bins == DEFAULT_BINS


def _rows():
    return [
        {"file": "a.png", "psnr_db": 30.0, "ssim": 0.90, "ok": True},
        {"file": "b.png", "psnr_db": 32.0, "ssim": 0.94, "ok": False},
        {"file": "c.png", "psnr_db": 34.0, "ssim": 0.98, "ok": True},
    ]


def test_mean_of_rows_is_arithmetic_and_skips_non_numeric():
    mean = mean_of_rows(_rows())
    assert mean == {"psnr_db": 32.0, "ssim": pytest.approx(0.94)}
    assert "file" not in mean and "ok" not in mean  # bool is not a metric
    with pytest.raises(DimensionError):
        mean_of_rows([])


def test_report_verify_catches_corruption():
    report = BenchmarkReport.from_rows("set5", 2, "bicubic", _rows())
    report.verify()
    report.mean_row["psnr_db"] += 0.001
    with pytest.raises(DimensionError, match="mean row"):
        report.verify()


def test_report_write_and_read_back(tmp_path):
    report = BenchmarkReport.from_rows(
        "set5", 2, "bicubic", _rows(),
        aggregates={"patch_count": 120, "pooled_psnr_db": 31.5},
        seconds_per_frame=0.125,
        config=RunConfig().to_dict(),
    )
    jsonl_path, csv_path = report.write(tmp_path / "report-set5")
    assert jsonl_path.name == "report-set5.jsonl"
    assert csv_path.name == "report-set5.csv"

    back = read_jsonl(jsonl_path)
    assert back["header"]["dataset"] == "set5"
    assert back["header"]["scale"] == 2
    assert back["header"]["config"]["lr"] == 1e-4
    assert back["rows"] == _rows()
    assert back["mean"] == report.mean_row
    assert back["aggregate"] == {"patch_count": 120, "pooled_psnr_db": 31.5}
    assert back["timing"] == {"seconds_per_frame": 0.125}

    rows, mean = read_csv(csv_path)
    # repr round trip keeps every float bit-exact across formats
    for got, want in zip(rows, _rows()):
        assert got["file"] == want["file"]
        assert got["psnr_db"] == want["psnr_db"]
        assert got["ssim"] == want["ssim"]
    assert mean == {k: float(v) for k, v in report.mean_row.items()}


def test_report_outputs_are_deterministic(tmp_path):
    kwargs = dict(aggregates={"n": 3}, seconds_per_frame=0.5, config={"seed": 1})
    r1 = BenchmarkReport.from_rows("d", 2, "pb", _rows(), **kwargs)
    r2 = BenchmarkReport.from_rows("d", 2, "pb", _rows(), **kwargs)
    p1 = r1.write(tmp_path / "one")
    p2 = r2.write(tmp_path / "two")
    assert p1[0].read_bytes() == p2[0].read_bytes()
    assert p1[1].read_bytes() == p2[1].read_bytes()
