import numpy as np
import pytest

from fuselabel.errors import UndefinedMetricError
from fuselabel.ingest import Vocabulary
from fuselabel.metrics import (
    ConfusionMatrix,
    accumulate_confusion,
    evaluation_report,
    format_report_text,
    map_vocabulary,
    miou,
)

VOCAB = Vocabulary(
    names={0: "void", 1: "wall", 2: "sofa", 3: "knife", 4: "bottle"},
    small_objects=frozenset({4}),
)


def brute_force_miou(pred, gt, subset=None):
    """Set-based IoU oracle: gt-void excluded, empty unions dropped."""
    classes = subset if subset is not None else range(1, max(int(pred.max()), int(gt.max())) + 1)
    ious = []
    for c in classes:
        pred_c = {(i, j) for i, j in zip(*np.nonzero((pred == c) & (gt != 0)))}
        gt_c = {(i, j) for i, j in zip(*np.nonzero(gt == c))}
        union = pred_c | gt_c
        if union:
            ious.append(len(pred_c & gt_c) / len(union))
    if not ious:
        raise UndefinedMetricError("nothing to score")
    return float(np.mean(ious))


def test_map_vocabulary_identity_and_void():
    labels = np.array([[2, 3], [0, 4]], dtype=np.uint16)
    mapping = {"sofa": 2, "bottle": 4}  # knife unmapped -> void
    out = map_vocabulary(labels, VOCAB, mapping)
    np.testing.assert_array_equal(out, [[2, 0], [0, 4]])

    all_void = np.zeros((3, 3), dtype=np.uint16)
    np.testing.assert_array_equal(map_vocabulary(all_void, VOCAB, mapping), all_void)


def test_accumulate_diagonal_when_equal():
    cm = ConfusionMatrix.zeros(5)
    pred = np.array([[1, 2], [2, 4]], dtype=np.uint16)
    cm.add(pred, pred)
    assert np.count_nonzero(cm.matrix - np.diag(np.diag(cm.matrix))) == 0
    assert cm.matrix[1, 1] == 1 and cm.matrix[2, 2] == 2 and cm.matrix[4, 4] == 1


def test_gt_void_excluded():
    cm = ConfusionMatrix.zeros(5)
    cm.add(np.array([[1, 2]]), np.zeros((1, 2), dtype=int))
    assert cm.matrix.sum() == 0


def test_worked_2x2_case():
    pred = np.array([[1, 1], [2, 2]])
    gt = np.array([[1, 2], [2, 2]])
    cm = accumulate_confusion(pred, gt, ConfusionMatrix.zeros(3))
    assert cm.matrix[1, 1] == 1
    assert cm.matrix[2, 1] == 1
    assert cm.matrix[2, 2] == 2
    assert miou(cm) == pytest.approx(7 / 12)
    assert miou(cm) == pytest.approx(brute_force_miou(pred, gt))
    assert miou(cm, subset={2}) == pytest.approx(2 / 3)


def test_perfect_prediction_scores_one():
    rng = np.random.default_rng(0)
    raster = rng.integers(1, 5, (10, 10))
    cm = ConfusionMatrix.zeros(5)
    cm.add(raster, raster)
    assert miou(cm) == 1.0


def test_undefined_when_nothing_scored():
    with pytest.raises(UndefinedMetricError):
        miou(ConfusionMatrix.zeros(4))


def test_tiling_invariance():
    rng = np.random.default_rng(1)
    pred = rng.integers(0, 4, (16, 16))
    gt = rng.integers(0, 4, (16, 16))
    whole = ConfusionMatrix.zeros(4)
    whole.add(pred, gt)
    tiled = ConfusionMatrix.zeros(4)
    for r in range(0, 16, 4):
        for c in range(0, 16, 8):
            tiled.add(pred[r:r + 4, c:c + 8], gt[r:r + 4, c:c + 8])
    np.testing.assert_array_equal(whole.matrix, tiled.matrix)
    assert miou(whole) == miou(tiled)


def test_merge_commutative():
    rng = np.random.default_rng(2)
    a, b = ConfusionMatrix.zeros(4), ConfusionMatrix.zeros(4)
    a.add(rng.integers(0, 4, (8, 8)), rng.integers(0, 4, (8, 8)))
    b.add(rng.integers(0, 4, (8, 8)), rng.integers(0, 4, (8, 8)))
    np.testing.assert_array_equal(a.merge(b).matrix, b.merge(a).matrix)


def test_swap_symmetric_without_void():
    rng = np.random.default_rng(3)
    pred = rng.integers(1, 5, (12, 12))
    gt = rng.integers(1, 5, (12, 12))
    ab = ConfusionMatrix.zeros(5); ab.add(pred, gt)
    ba = ConfusionMatrix.zeros(5); ba.add(gt, pred)
    assert miou(ab) == pytest.approx(miou(ba))


def test_iou_bounds():
    rng = np.random.default_rng(4)
    cm = ConfusionMatrix.zeros(6)
    cm.add(rng.integers(0, 6, (20, 20)), rng.integers(0, 6, (20, 20)))
    for v in cm.per_class_iou().values():
        assert 0.0 <= v <= 1.0


def test_brute_force_equivalence_random_rasters():
    rng = np.random.default_rng(5)
    for _ in range(200):
        h, w = rng.integers(1, 9, 2)
        pred = rng.integers(0, 4, (h, w))
        gt = rng.integers(0, 4, (h, w))
        cm = ConfusionMatrix.zeros(4)
        cm.add(pred, gt)
        try:
            expected = brute_force_miou(pred, gt)
        except UndefinedMetricError:
            with pytest.raises(UndefinedMetricError):
                miou(cm)
            continue
        assert miou(cm) == expected


def test_report_shapes():
    rng = np.random.default_rng(6)
    cm = ConfusionMatrix.zeros(5)
    cm.add(rng.integers(0, 5, (20, 20)), rng.integers(0, 5, (20, 20)))
    report = evaluation_report(cm, VOCAB)
    assert set(report) >= {"per_class_iou", "miou", "miou_small", "scored_pixels"}
    assert "bottle" in report["per_class_iou"]
    text = format_report_text(report)
    assert "mIoU" in text and "bottle" in text
