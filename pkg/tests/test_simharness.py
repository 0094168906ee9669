from pathlib import Path

import numpy as np
import pytest
import yaml

from plenoptic_observer import cli
from plenoptic_observer.errors import ConfigError
from plenoptic_observer.scene import read_ply
from plenoptic_observer.simharness import (
    METRICS_HEADER,
    RunConfig,
    gain_sweep,
    overshoot_threshold,
    run,
)

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_YAML = ROOT / "configs" / "default.yaml"


def small(frames=12, gain=3000.0, **extra):
    """Default scenario with a coarse estimate and a short run; the path keeps its 600-frame period."""
    data = RunConfig().to_dict()
    data["observer"].update(frames=frames, gain=gain)
    data["trajectory"]["period_frames"] = 600
    data["estimate"]["icosphere_subdivisions"] = 1
    data["output"]["export_every_frames"] = 5
    for block, values in extra.items():
        data[block].update(values)
    return RunConfig.from_dict(data)


# --------------------------------------------------------------------------- configuration


def test_default_yaml_matches_builtin_defaults():
    assert RunConfig.load(DEFAULT_YAML).to_dict() == RunConfig().to_dict()


def test_config_round_trip(tmp_path):
    cfg = small(frames=7, gain=12.5)
    back = RunConfig.load(cfg.dump(tmp_path / "c.yaml"))
    assert back.to_dict() == cfg.to_dict()


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"camera": {"focal_len": 0.3}},
        {"observer": {"interpolation": "nearest"}},
        {"observer": {"gain": -1.0}},
        {"observer": {"frames": -1}},
        {"camera": {"lens_to_pupilar_m": 0.5}},
        {"scene": {"kind": "torus"}},
        {"scene": {"brightness": "plaid"}},
        {"scene": {"kind": "mesh"}},
        {"output": {"export_every_frames": 0}},
        {"trajectory": {"amplitudes_m": [0, 0, 0]}},
        {"camera": "not a mapping"},
    ],
)
def test_invalid_configs_raise(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_unreadable_config_raises(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("camera: [unclosed\n")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.yaml")


def test_overrides_leave_original_untouched():
    cfg = RunConfig()
    other = cfg.with_overrides(frames=3, gain=1.0, out="x")
    assert (other.observer.frames, other.observer.gain, other.output.directory) == (3, 1.0, "x")
    assert cfg.observer.frames == 600


def test_blocking_assumption_aborts_run(tmp_path):
    cfg = small(trajectory={"amplitude_fraction": 0.6})
    with pytest.raises(ConfigError):
        run(cfg, tmp_path)


# --------------------------------------------------------------------------- runs


def test_zero_frames_writes_initial_cloud_only(tmp_path):
    m = run(small(frames=0), tmp_path)
    assert len(m) == 0
    assert m.final_ratio == 1.0 and not m.diverged
    assert (tmp_path / "clouds" / "cloud_00000.ply").exists()
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines == [",".join(METRICS_HEADER)]


def test_zero_gain_keeps_error_constant(tmp_path):
    m = run(small(frames=6, gain=0.0), write=False)
    assert np.all(m.total_sq_error == m.initial_total_sq_error)
    assert m.final_ratio == 1.0 and not m.diverged


def test_run_outputs(tmp_path):
    m = run(small(frames=10), tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"config.yaml", "assumptions.txt", "metrics.csv", "poses.csv", "summary.yaml", "clouds"} <= names
    clouds = sorted(p.name for p in (tmp_path / "clouds").iterdir())
    assert clouds == ["cloud_00000.ply", "cloud_00005.ply", "cloud_00010.ply", "cloud_final.ply"]
    v, c, _ = read_ply(tmp_path / "clouds" / "cloud_final.ply")
    assert np.array_equal(v, m.final_cloud.points) and c.shape == v.shape
    summary = yaml.safe_load((tmp_path / "summary.yaml").read_text())
    assert summary["frames"] == 10
    rows = (tmp_path / "metrics.csv").read_text().splitlines()
    assert len(rows) == 11 and rows[0] == ",".join(METRICS_HEADER)
    # status counts never exceed the cloud size
    n = len(m.final_cloud)
    assert np.all(m.n_updated + m.n_outside + m.n_behind + m.n_grad_err <= n)
    assert RunConfig.load(tmp_path / "config.yaml").to_dict() == small(frames=10).to_dict()


def test_frame_png_export(tmp_path):
    run(small(frames=2, output={"write_frames_png": True}), tmp_path)
    assert sorted(p.name for p in (tmp_path / "frames").iterdir()) == [
        "frame_00000.png", "frame_00000.txt", "frame_00001.png", "frame_00001.txt"]


def test_metrics_csv_is_byte_reproducible(tmp_path):
    run(small(frames=5), tmp_path / "a")
    run(small(frames=5), tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "clouds" / "cloud_final.ply").read_bytes() == \
        (tmp_path / "b" / "clouds" / "cloud_final.ply").read_bytes()


def test_short_run_reduces_error():
    m = run(small(frames=30), write=False)
    assert m.final_ratio < 1.0
    assert m.cone_checked_points > 0 and m.cone_samples == 30 * m.cone_checked_points


def test_sweep_outputs_and_flat_zero_gain(tmp_path):
    sweep = gain_sweep(small(frames=4), gains=[0.0, 3000.0], out_dir=tmp_path)
    assert sweep.gains == [0.0, 3000.0]
    assert sweep.table()[0]["final_ratio"] == 1.0
    assert sweep.best_gain == 3000.0
    assert (tmp_path / "sweep_errors.csv").exists() and (tmp_path / "sweep_summary.csv").exists()
    assert (tmp_path / "gain_0" / "metrics.csv").exists()
    with pytest.raises(ConfigError):
        gain_sweep(small(frames=1), gains=[], write=False)


def test_overshoot_threshold_requires_bracket():
    with pytest.raises(ValueError):
        overshoot_threshold(small(frames=3), 0.0, 1.0, iterations=1)


# --------------------------------------------------------------------------- CLI


def _write_small(tmp_path, **kw):
    return small(**kw).dump(tmp_path / "small.yaml")


def test_cli_validate(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(_write_small(tmp_path))]) == 0
    out = capsys.readouterr().out
    assert "camera_ball_inside_scene: pass" in out and out.count("\n") == 4
    bad = small(trajectory={"amplitude_fraction": 0.6}).dump(tmp_path / "bad.yaml")
    assert cli.main(["validate", "--config", str(bad)]) == 1


def test_cli_render_frame(tmp_path, capsys):
    target = tmp_path / "new_dir" / "f.png"
    assert cli.main(["render-frame", "--config", str(_write_small(tmp_path)), "--frame", "3", "--out", str(target)]) == 0
    assert target.exists() and target.with_suffix(".txt").exists()


def test_cli_run_and_sweep(tmp_path, capsys):
    cfg = _write_small(tmp_path)
    assert cli.main(["run", "--config", str(cfg), "--frames", "3", "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "metrics.csv").exists()
    assert cli.main(["sweep", "--config", str(cfg), "--frames", "2", "--gains", "0", "10",
                     "--out", str(tmp_path / "s")]) == 0
    out = capsys.readouterr().out
    assert "best gain" in out


def test_cli_reports_config_errors(tmp_path, capsys):
    (tmp_path / "bad.yaml").write_text("observer: {gain: -2}\n")
    assert cli.main(["run", "--config", str(tmp_path / "bad.yaml")]) == 2
    assert "error:" in capsys.readouterr().err
