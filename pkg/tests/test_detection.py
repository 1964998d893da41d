import numpy as np
import pytest

from aggsort import detection
from aggsort.dataset import ClassMap, Lithology
from aggsort.detection import ConfusionSpec, Detection, OracleDetector, SceneView, Silhouette

SQUARE = [[10, 20], [40, 20], [40, 60], [10, 60]]


def _view(*sils, w=100, h=80):
    return SceneView(w, h, tuple(sils))


def test_detection_validation():
    d = Detection(0, 0.5, (1, 2, 3, 4))
    assert d.center == (2.0, 3.0)
    with pytest.raises(ValueError):
        Detection(0, 0.5, (3, 2, 1, 4))
    with pytest.raises(ValueError):
        Detection(0, 1.5, (0, 0, 1, 1))


def test_noise_free_identity_oracle_is_exact():
    sil = Silhouette(4, Lithology.SANDSTONE, 2, SQUARE)
    (d,) = detection.detect(_view(sil), ConfusionSpec.identity(), seed=0, box_noise_px=0.0)
    assert d.box == (10, 20, 40, 60)
    assert d.confidence == 1.0 and d.source_id == 4 and not d.truncated
    assert ClassMap.default().decode(d.class_index) == (Lithology.SANDSTONE, 2)


def test_box_noise_is_bounded():
    sil = Silhouette(0, Lithology.GRANITE, 1, SQUARE)
    rng = np.random.default_rng(0)
    det = OracleDetector(ConfusionSpec.identity(), box_noise_px=1.0)
    for _ in range(200):
        (d,) = det.detect(_view(sil), rng)
        assert np.all(np.abs(np.array(d.box) - [10, 20, 40, 60]) <= 1.0)


def test_offscreen_and_truncated():
    off = Silhouette(0, Lithology.GRANITE, 1, [[200, 200], [220, 220]])
    edge = Silhouette(1, Lithology.GRANITE, 1, [[-5, 10], [20, 30]])
    dets = detection.detect(_view(off, edge), ConfusionSpec.identity(), seed=0, box_noise_px=0.0)
    assert len(dets) == 1 and dets[0].truncated and dets[0].box[0] == 0.0


def test_noise_never_produces_inverted_boxes():
    sil = Silhouette(0, Lithology.GRANITE, 1, [[99.5, 10], [100.2, 20]])
    rng = np.random.default_rng(3)
    det = OracleDetector(ConfusionSpec.identity(), box_noise_px=2.0)
    for _ in range(500):
        det.detect(_view(sil), rng)


def test_misclassification_rate_matches_confusion():
    conf = ConfusionSpec.with_errors({(Lithology.GRANITE, Lithology.LIMESTONE): 0.1})
    det = OracleDetector(conf, box_noise_px=0.0)
    sil = Silhouette(0, Lithology.GRANITE, 1, SQUARE)
    rng = np.random.default_rng(42)
    cm = ClassMap.default()
    wrong = 0
    for _ in range(10_000):
        (d,) = det.detect(_view(sil), rng)
        wrong += cm.decode(d.class_index)[0] is Lithology.LIMESTONE
    assert abs(wrong / 10_000 - 0.1) <= 0.01


def test_same_seed_same_detections():
    sil = Silhouette(0, Lithology.MARBLE, 3, SQUARE)
    conf = ConfusionSpec.with_errors({(Lithology.MARBLE, Lithology.SANDSTONE): 0.3})
    a = detection.detect(_view(sil), conf, seed=9)
    b = detection.detect(_view(sil), conf, seed=9)
    assert a == b


def test_confusion_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        ConfusionSpec(np.ones((4, 4)))
    with pytest.raises(ValueError):
        ConfusionSpec(np.eye(3))
    conf = ConfusionSpec.with_errors({(Lithology.SANDSTONE, Lithology.MARBLE): 0.25})
    (tmp_path / "c.txt").write_text(conf.serialize())
    back = ConfusionSpec.load(tmp_path / "c.txt")
    np.testing.assert_array_equal(back.matrix, conf.matrix)
    assert back.row(Lithology.SANDSTONE)[3] == 0.25


def test_box_from_points():
    assert detection.box_from_points(SQUARE) == (10.0, 20.0, 40.0, 60.0)


def test_zero_noise_boxes_touch_silhouette():
    pts = np.random.default_rng(1).uniform(5, 70, size=(12, 2))
    sil = Silhouette(0, Lithology.GRANITE, 1, pts)
    (d,) = detection.detect(_view(sil), ConfusionSpec.identity(), seed=0, box_noise_px=0.0)
    x1, y1, x2, y2 = d.box
    assert np.all((pts[:, 0] >= x1) & (pts[:, 0] <= x2) & (pts[:, 1] >= y1) & (pts[:, 1] <= y2))
    assert pts[:, 0].min() == x1 and pts[:, 0].max() == x2 and pts[:, 1].min() == y1 and pts[:, 1].max() == y2
