import json
import math
import pathlib

import numpy as np
import pytest

import fpl

ROOT = pathlib.Path(__file__).resolve().parents[2]


def test_version():
    assert fpl.__version__.count(".") == 2


def test_linear_spline_is_piecewise_linear():
    x = np.array([[-1.0], [0.0], [0.5], [1.0]])
    y = np.array([1.0, -1.0, 2.0, 0.0])
    h = fpl.steady_state(x, y, fpl.KernelSpec(1, 0.0, 1.0))
    grid = np.linspace(-1.0, 1.0, 41).reshape(-1, 1)
    assert np.allclose(h(grid), np.interp(grid[:, 0], x[:, 0], y), atol=1e-10)


def test_kernel_weights():
    k = fpl.kernel_weights_from_stats(12.0, 2.0, 1)
    assert k.cubic == pytest.approx(1.0)
    assert k.linear == pytest.approx(1.0)
    assert fpl.riesz_constant(1, 1) == pytest.approx(-2.0)


def test_nudft_peak():
    p = np.linspace(0.0, 1.0, 400, endpoint=False).reshape(-1, 1)
    v = np.cos(2 * math.pi * 5 * p[:, 0])
    amp, _ = fpl.nudft(p, v, np.array([1.0]), list(range(11)), rescale=False)
    assert int(np.argmax(amp)) == 5


def test_bound_value():
    expected = (2 + 4 * math.sqrt(2 * math.log(4 / 0.05))) / math.sqrt(100)
    assert fpl.generalization_bound(1.0, 100, 0.05) == pytest.approx(expected, rel=1e-12)


def test_validate_rejects_typo(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"schema": "fpl-scenario/1", "scenario": "custom", "modle": {}}))
    with pytest.raises(fpl.ConfigError, match="modle"):
        fpl.validate(cfg)


def test_run_custom(tmp_path):
    man = fpl.run(ROOT / "configs" / "custom_lfp.json", tmp_path / "out")
    listed = {f["path"] for f in man["files"]}
    on_disk = {p.name for p in (tmp_path / "out").iterdir()} - {"manifest.json"}
    assert listed == on_disk
    assert "predictions.csv" in listed
