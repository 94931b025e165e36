import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from fuselabel.errors import FuseLabelError
from fuselabel.fuse import load_annotation
from fuselabel.ingest import load_label_image, load_manifest, save_vocabulary
from fuselabel.pipeline import (
    run_eval,
    run_fuse,
    run_map,
    run_navigate,
    run_parts,
    run_verify,
)
from fuselabel.semmap import SemanticGrid, load_semantic_grid, save_semantic_grid
from fuselabel.synthetic import (
    default_grid_config,
    expected_semantic_grid,
    make_vocabulary,
    preset_fuse_scene,
    preset_nav_scene,
    preset_parts_scene,
    write_dataset,
    atomic_write_json,
)


def tree_digest(root: Path, exclude=("logs",)) -> dict[str, str]:
    root = Path(root)
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_dir():
            continue
        rel = path.relative_to(root)
        if rel.parts and rel.parts[0] in exclude:
            continue
        out[str(rel)] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    manifest_path = write_dataset(
        [preset_fuse_scene(n_frames=5), preset_parts_scene(n_frames=3)], root
    )
    return manifest_path


@pytest.fixture(scope="module")
def pipeline_out(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    manifest = load_manifest(dataset)
    run_fuse(manifest, out, workers=2)
    run_verify(manifest, out, workers=2)
    run_eval(manifest, out, pred_dir=out / "verified")
    run_map(manifest, out, labels_from="gt_semantic", workers=2)
    run_parts(manifest, out, container_class="cabinet", k=3, seed=0)
    return manifest, out


def test_fuse_stage_outputs(pipeline_out):
    manifest, out = pipeline_out
    scene = manifest.scenes[0]
    ann = load_annotation(out / "fused" / scene.id, scene.frames[0].id)
    assert ann.semantic.shape == (120, 160)
    assert len(ann.metadata) >= 5  # all five objects detected
    gt = load_label_image(scene.frames[0].path("gt_semantic"))
    assert (ann.semantic == gt).mean() > 0.99


def test_verify_stage_preserves_quality(pipeline_out):
    manifest, out = pipeline_out
    scene = manifest.scenes[0]
    for frame in scene.frames[:2]:
        ann = load_annotation(out / "verified" / scene.id, frame.id)
        gt = load_label_image(frame.path("gt_semantic"))
        assert (ann.semantic == gt).mean() > 0.985


def test_eval_report_fields(pipeline_out):
    manifest, out = pipeline_out
    with open(out / "eval" / "report.json", encoding="utf-8") as fh:
        report = json.load(fh)
    assert report["miou"] is not None and report["miou"] > 0.9
    assert "per_class_iou" in report and report["frames"] == 8
    assert (out / "eval" / "report.txt").exists()


def test_map_stage_matches_oracle(pipeline_out, dataset):
    manifest, out = pipeline_out
    # the auto-fit grid contains exactly the classes of the footprint oracle
    grid = load_semantic_grid(out / "maps" / manifest.scenes[0].id / "grid.png",
                              out / "maps" / manifest.scenes[0].id / "grid.json")
    spec = preset_fuse_scene(n_frames=5)
    vocab = make_vocabulary([spec, preset_parts_scene(n_frames=3)])
    expected_classes = {vocab.id_of(o.class_name) for o in spec.objects}
    present = set(np.unique(grid.classes).tolist())
    assert expected_classes <= present


def test_parts_stage_artifacts(pipeline_out):
    manifest, out = pipeline_out
    parts_dir = out / "parts" / "parts"
    with open(parts_dir / "clusters.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    assert doc["k"] == 3
    assert sum(doc["counts"]) == len(doc["members"])
    for c in range(doc["k"]):
        assert (parts_dir / f"montage_{c}.png").exists()


def test_missing_prerequisite_names_path(dataset, tmp_path):
    manifest = load_manifest(dataset)
    with pytest.raises(FuseLabelError, match="fused"):
        run_verify(manifest, tmp_path, workers=1)


def test_fuse_rerun_byte_identical(dataset, tmp_path):
    manifest = load_manifest(dataset)
    a, b = tmp_path / "a", tmp_path / "b"
    run_fuse(manifest, a, workers=1)
    run_fuse(manifest, b, workers=4)
    assert tree_digest(a) == tree_digest(b)
    run_fuse(manifest, b, workers=4)  # rerun over existing outputs
    assert tree_digest(a) == tree_digest(b)


# ---------------------------------------------------------------------------
# navigation over analytic grids

@pytest.fixture(scope="module")
def nav_workspace(tmp_path_factory):
    """A manifest of analytic nav scenes with pre-written grid artifacts."""
    root = tmp_path_factory.mktemp("navds")
    specs = [preset_nav_scene(i) for i in range(4)]
    vocab = make_vocabulary(specs)
    save_vocabulary(vocab, root / "vocabulary.json")
    atomic_write_json(
        root / "manifest.json",
        {"dataset": "nav", "vocabulary": "vocabulary.json",
         "scenes": [{"id": s.name, "frames": []} for s in specs]},
    )
    out = root / "out"
    for spec in specs:
        config = default_grid_config(spec)
        classes = expected_semantic_grid(spec, vocab, config)
        grid = SemanticGrid(classes, np.full(classes.shape, np.nan, np.float32),
                            config.origin, config.resolution, vocab.max_id)
        save_semantic_grid(grid, out / "maps" / spec.name / "grid.png",
                           out / "maps" / spec.name / "grid.json")
    return root / "manifest.json", out


def test_navigate_summary_schema(nav_workspace):
    manifest_path, out = nav_workspace
    manifest = load_manifest(manifest_path)
    summary = run_navigate(manifest, out, seeds=[1, 2, 3])
    assert set(summary) >= {"R1", "R2", "R3", "Avg-SR", "seeds", "episodes"}
    assert summary["R1"] == 100.0 and summary["Avg-SR"] == {"mean": 100.0, "std": 0.0}
    csv_text = (out / "nav" / "episodes.csv").read_text()
    assert csv_text.splitlines()[0] == "scene,seed,target,start,stop,cost,success,reason"
    assert len(csv_text.splitlines()) == 1 + summary["episodes"]


def test_navigate_rerun_byte_identical(nav_workspace):
    manifest_path, out = nav_workspace
    manifest = load_manifest(manifest_path)
    run_navigate(manifest, out, seeds=[1, 2, 3])
    first = tree_digest(out / "nav")
    run_navigate(manifest, out, seeds=[1, 2, 3])
    assert tree_digest(out / "nav") == first


def test_navigate_episode_artifacts(nav_workspace):
    manifest_path, out = nav_workspace
    manifest = load_manifest(manifest_path)
    run_navigate(manifest, out, seeds=[1])
    epi_dir = out / "nav" / "episodes"
    files = sorted(epi_dir.glob("*.json"))
    assert files
    with open(files[0], encoding="utf-8") as fh:
        doc = json.load(fh)
    assert {"id", "scene", "target_name", "start", "stop", "success",
            "map_render"} <= set(doc)
    assert (out / "nav" / doc["map_render"]).exists()
