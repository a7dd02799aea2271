import json

import numpy as np
import pytest

from rivetkey.dataio import (AffineTransform, Manifest, Prediction, Predictions, Sample,
                             border_mode_intensity, load_png, manifest_from_dict,
                             manifest_to_dict, preprocess, read_manifest, read_predictions,
                             save_png, split_by_config, write_manifest, write_predictions)
from rivetkey.errors import InsufficientGroups, KeypointOutsideRoi, SchemaError


def _samples(n_configs, per=2, rng=None):
    rng = rng or np.random.default_rng(0)
    out = []
    for c in range(n_configs):
        for j in range(per):
            out.append(Sample(id=f"s{c}-{j}", image_path=f"images/s{c}-{j}.png",
                              config_id=f"cfg{c}", domain="clean",
                              keypoints=rng.uniform(0, 100, (6, 2)), pixel_pitch_mm=0.05,
                              head_radius_px=45.0))
    return out


def test_manifest_round_trip(tmp_path):
    m = Manifest(samples=_samples(3, per=1))
    write_manifest(m, tmp_path / "m.json")
    back = read_manifest(tmp_path / "m.json")
    assert len(back) == 3
    for a, b in zip(m.samples, back.samples):
        assert a.id == b.id and a.config_id == b.config_id and a.image_path == b.image_path
        np.testing.assert_array_equal(a.keypoints, b.keypoints)
        assert a.pixel_pitch_mm == b.pixel_pitch_mm and a.head_radius_px == b.head_radius_px


def _dict(n=2):
    return manifest_to_dict(Manifest(samples=_samples(n, per=1)))


def test_manifest_schema_errors():
    d = _dict()
    d["samples"][0]["keypoints"] = d["samples"][0]["keypoints"][:5]
    with pytest.raises(SchemaError):
        manifest_from_dict(d)
    d = _dict()
    d["samples"][1]["id"] = d["samples"][0]["id"]
    with pytest.raises(SchemaError):
        manifest_from_dict(d)
    for mutate in (lambda d: d.update(version=2), lambda d: d.update(extra=1),
                   lambda d: d["samples"][0].pop("domain"),
                   lambda d: d["samples"][0].update(domain="ct"),
                   lambda d: d["samples"][0].update(head_radius_px=0),
                   lambda d: d["samples"][0].update(colour="red")):
        d = _dict()
        mutate(d)
        with pytest.raises(SchemaError):
            manifest_from_dict(d)


def test_read_manifest_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        read_manifest(p)


def test_write_manifest_rebases_paths(tmp_path, small_clean):
    write_manifest(small_clean, tmp_path / "sub" / "copy.json")
    m = read_manifest(tmp_path / "sub" / "copy.json")
    for s in m:
        assert m.image_file(s).exists()


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(0).uniform(0, 1, (20, 31))
    save_png(tmp_path / "a.png", img)
    back = load_png(tmp_path / "a.png")
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / 65535 + 1e-12


@pytest.mark.parametrize("n, expect", [(10, 8), (45, 36), (2, 1), (3, 2), (7, 6)])
def test_split_counts(n, expect):
    train, test = split_by_config(Manifest(samples=_samples(n)), 0.8, seed=1)
    tr = {s.config_id for s in train}
    te = {s.config_id for s in test}
    assert len(tr) == expect and len(te) == n - expect
    assert not tr & te
    assert len(train) + len(test) == 2 * n


def test_split_seeded_and_errors():
    m = Manifest(samples=_samples(10))
    a = split_by_config(m, 0.8, seed=3)
    b = split_by_config(m, 0.8, seed=3)
    assert [s.id for s in a[0]] == [s.id for s in b[0]]
    with pytest.raises(InsufficientGroups):
        split_by_config(Manifest(samples=_samples(1)), 0.8)
    with pytest.raises(ValueError):
        split_by_config(m, 1.0)


def test_preprocess_square_half_scale():
    img = np.zeros((448, 448))
    out, k, tf = preprocess(img, np.full((6, 2), 224.0))
    assert out.shape == (224, 224)
    np.testing.assert_allclose(k, 112.0)
    assert tf.scale == 0.5


def test_preprocess_wide_roi_pads_vertically():
    img = np.zeros((300, 500))
    roi = (50, 20, 400, 200)
    kps = np.tile([50.0, 20.0], (6, 1))  # roi-relative (0, 0)
    _, k, tf = preprocess(img, kps, roi=roi)
    np.testing.assert_allclose(k, np.tile([0.0, 56.0], (6, 1)), atol=1e-12)
    assert tf.scale == pytest.approx(0.56)
    np.testing.assert_allclose(tf.apply_inverse(k), kps, atol=1e-9)


def test_preprocess_inverse_recovers():
    rng = np.random.default_rng(2)
    img = rng.uniform(0, 1, (137, 90))
    kps = rng.uniform(0, 89, (6, 2))
    _, k, tf = preprocess(img, kps)
    np.testing.assert_allclose(tf.inverse().apply(k), kps, atol=1e-9)
    np.testing.assert_allclose(tf.apply_inverse(k), kps, atol=1e-9)


def test_preprocess_geometry_follows_keypoint():
    img = np.zeros((150, 100))
    img[61, 41] = 1.0
    out, k, _ = preprocess(img, np.tile([41.0, 61.0], (6, 1)))
    r, c = np.unravel_index(np.argmax(out), out.shape)
    assert abs(c - k[0, 0]) <= 1.0 and abs(r - k[0, 1]) <= 1.0


def test_preprocess_pads_with_background():
    img = np.full((50, 100), 0.2)
    img[20:30, 40:60] = 0.9
    out, _, _ = preprocess(img)
    assert out[5, 112] == pytest.approx(0.2)
    assert border_mode_intensity(img) == pytest.approx(0.2)


def test_preprocess_errors():
    img = np.zeros((50, 50))
    with pytest.raises(KeypointOutsideRoi):
        preprocess(img, np.full((6, 2), 45.0), roi=(0, 0, 40, 40))
    with pytest.raises(ValueError):
        preprocess(img, roi=(10, 10, 50, 50))


def test_affine_transform_matrix():
    tf = AffineTransform(2.0, 3.0, -1.0)
    p = np.array([[1.0, 2.0]])
    hom = tf.matrix @ np.array([1.0, 2.0, 1.0])
    np.testing.assert_allclose(tf.apply(p)[0], hom[:2])


def test_predictions_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    preds = Predictions(predictions=[Prediction(f"s{i}", rng.uniform(0, 9, (6, 2)),
                                                rng.uniform(0, 1, 6)) for i in range(3)])
    write_predictions(preds, tmp_path / "p.json")
    back = read_predictions(tmp_path / "p.json")
    assert [p.id for p in back] == ["s0", "s1", "s2"]
    for a, b in zip(preds, back):
        np.testing.assert_array_equal(a.keypoints, b.keypoints)
        np.testing.assert_array_equal(a.confidence, b.confidence)
    obj = json.loads((tmp_path / "p.json").read_text())
    obj["predictions"][0]["keypoints"] = obj["predictions"][0]["keypoints"][:4]
    (tmp_path / "q.json").write_text(json.dumps(obj))
    with pytest.raises(SchemaError):
        read_predictions(tmp_path / "q.json")
