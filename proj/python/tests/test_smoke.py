import json
import pathlib

import numpy as np
import pytest

import das

ROOT = pathlib.Path(__file__).resolve().parents[2]
ASSETS = ROOT / "assets"


def test_losses_match_closed_forms():
    peak = np.zeros((10, 10), np.float32)
    peak[3, 7] = 1.0
    assert das.distraction_loss(peak, 0.5, 4) == pytest.approx(1 / 99, abs=1e-12)
    assert das.distraction_loss(np.zeros((4, 4), np.float32)) == 0.0

    checker = np.array([[0, 1], [1, 0]], np.float32)
    assert das.smooth_loss(checker) == pytest.approx(4.0)

    t0 = np.full((4, 4, 3), 0.5, np.float32)
    t = t0.copy()
    t[1, 2, 0] += 0.25
    edge = np.zeros((4, 4), bool)
    assert das.evasion_loss(t, t0, edge, 8.0) == pytest.approx(0.0625)
    edge[1, 2] = True
    assert das.evasion_loss(t, t0, edge, 8.0) == pytest.approx(81 * 0.0625)


def test_image_ops():
    rng = np.random.default_rng(0)
    img = rng.random((20, 24, 3), dtype=np.float32)
    assert das.ssim(img, img) == pytest.approx(1.0)
    assert das.ssim(img, 1 - img) < 0.5

    step = np.zeros((16, 16), np.float32)
    step[:, 8:] = 1.0
    edges = das.canny(step)
    assert edges.shape == (16, 16) and edges.dtype == bool
    assert edges[4:12, 7:9].any() and not edges[:, :5].any()

    diag = np.eye(3, dtype=bool)
    assert das.connected_components(diag, 4)[1] == 3
    labels, count = das.connected_components(diag, 8)
    assert count == 1 and labels.shape == (3, 3)


def test_png_round_trip(tmp_path):
    img = (np.arange(48, dtype=np.float32).reshape(4, 4, 3) / 47.0)
    das.write_png(tmp_path / "x.png", img)
    back = das.read_png(tmp_path / "x.png")
    assert back.shape == (4, 4, 3)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6


def test_config_scene_and_model():
    cfg = das.load_config(ASSETS / "default.json")
    assert cfg.architectures == ["compact3", "wide4", "deep5", "avgpool4"]
    assert len(cfg.conditions()) == 128
    cfg.seed = 5
    assert cfg.to_dict()["seed"] == 5

    scene = cfg.scene()
    assert scene.class_names[0] == "car"
    cond = das.RenderCondition(distance=9, yaw=45, pitch=30)
    view = scene.render(0, cond)
    assert view.shape == (scene.image_size, scene.image_size, 3)
    assert 0.0 <= view.min() and view.max() <= 1.0

    model = das.Classifier.initialize("compact3", 4, scene.image_size, seed=3)
    probs = model.predict(view)
    assert len(probs) == 4 and sum(probs) == pytest.approx(1.0, abs=1e-5)
    att = model.attention(view, 0)
    assert att.shape == (scene.image_size, scene.image_size)
    assert att.min() >= 0.0 and att.max() <= 1.0 + 1e-6


def test_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"output": "out", "bogus": 1}))
    with pytest.raises(das.ConfigError, match="bogus"):
        das.load_config(bad)
    with pytest.raises(ValueError):
        das.RenderCondition(pitch=120)
    with pytest.raises(ValueError):
        das.Classifier.initialize("nope")
