import numpy as np
import pytest

import obr


def test_codec():
    assert obr.encode("1") == 1
    assert obr.encode("123456") == 63
    assert obr.decode(obr.encode("245")) == "245"
    assert obr.mirror(obr.encode("1")) == obr.encode("4")
    assert obr.to_unicode(63) == "⠿"
    with pytest.raises(obr.InputError):
        obr.encode("17")


def test_iou_and_nms():
    a = obr.Box(0, 0, 20, 32)
    assert obr.iou(a, a) == pytest.approx(1.0)
    assert obr.iou(a, obr.Box(20, 0, 40, 32)) == 0.0
    kept = obr.nms([a, obr.Box(2, 0, 22, 32), obr.Box(100, 0, 120, 32)], [1, 2, 3], [0.5, 0.9, 0.7], 0.02)
    assert [b.left for b in kept] == [2, 100]


def test_normalize():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(48, 64), dtype=np.uint8)
    t = obr.normalize(img)
    assert t.shape == (1, 48, 64)
    assert t.dtype == np.float32
    assert abs(float(t.mean())) < 1e-4
    assert float(t.std()) == pytest.approx(1 / 3, abs=1e-3)


def test_png_round_trip(tmp_path):
    img = np.arange(12 * 10, dtype=np.uint8).reshape(12, 10)
    obr.write_png(tmp_path / "a.png", img)
    np.testing.assert_array_equal(obr.read_png(tmp_path / "a.png"), img)


def test_render_and_detect(tmp_path):
    image, chars = obr.render_page(seed=4)
    assert image.ndim == 2 and image.dtype == np.uint8
    assert len(chars) > 0
    det = obr.Detector.untrained("desk", seed=1)
    assert det.parameter_count > 0
    out = det.detect(image[:256, :256], width=0, score_threshold=0.5)
    assert isinstance(out, list)
    det.save(tmp_path / "m.ckpt")
    again = obr.Detector.load(tmp_path / "m.ckpt")
    assert again.parameter_count == det.parameter_count
    with pytest.raises(obr.ModelError):
        (tmp_path / "bad.ckpt").write_bytes(b"junk")
        obr.Detector.load(tmp_path / "bad.ckpt")


def test_evaluate_perfect():
    _, chars = obr.render_page(seed=2)
    boxes = [c["box"] for c in chars]
    dots = [c["dots"] for c in chars]
    r = obr.evaluate([(boxes, dots)], [(boxes, dots)])
    assert r["char_f1"] == 1.0
    assert r["dot_f1"] == 1.0


def test_default_config():
    assert "preset" in obr.default_config("desk")
