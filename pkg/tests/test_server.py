import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from fuselabel.ingest import load_label_image, load_manifest
from fuselabel.parts import candidate_segments
from fuselabel.pipeline import run_fuse, run_map, run_navigate, run_parts
from fuselabel.server import ReviewServer
from fuselabel.synthetic import preset_parts_scene, render_scene, write_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("srv")
    spec = preset_parts_scene(n_frames=3)
    manifest_path = write_dataset([spec], root / "data")
    out = root / "out"
    manifest = load_manifest(manifest_path)
    run_fuse(manifest, out, workers=1)
    from fuselabel.semmap import GridConfig

    run_map(manifest, out, labels_from="gt_semantic",
            grid_config=GridConfig(height_band=(0.0, 1.8)), workers=1)
    run_navigate(manifest, out, seeds=[1, 2])
    run_parts(manifest, out, container_class="cabinet", k=3, seed=0)
    return manifest_path, out, spec


@pytest.fixture(scope="module")
def server(workspace):
    manifest_path, out, _ = workspace
    srv = ReviewServer(manifest_path, out, port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()


def _get(server, path):
    with urllib.request.urlopen(f"http://127.0.0.1:{server.port}{path}") as resp:
        return json.loads(resp.read().decode())


def _post(server, path, body):
    req = urllib.request.Request(
        f"http://127.0.0.1:{server.port}{path}",
        data=json.dumps(body).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read().decode())


def test_scenes_listing(server):
    doc = _get(server, "/api/scenes")
    assert doc["scenes"][0]["id"] == "parts"
    assert doc["scenes"][0]["has_clusters"] is True


def test_clusters_listing(server):
    doc = _get(server, "/api/scenes/parts/clusters")
    assert doc["k"] == 3
    assert len(doc["clusters"]) == 3
    for c in doc["clusters"]:
        # montage image is fetchable through the static route
        with urllib.request.urlopen(
            f"http://127.0.0.1:{server.port}{c['montage']}"
        ) as resp:
            assert resp.read(8).startswith(b"\x89PNG")


def test_cluster_selection_roundtrip(workspace, server):
    """Selecting a cluster over the wire, then rerunning the parts stage,
    back-projects exactly the planted handle segments."""
    manifest_path, out, spec = workspace
    scene = render_scene(spec)
    vocab = scene.vocabulary
    cabinet = vocab.id_of("cabinet")

    # ground truth: handle (frame, segment) pairs among the candidates
    expected = set()
    handle_rows = []
    with open(out / "parts" / "parts" / "clusters.json", encoding="utf-8") as fh:
        clusters_doc = json.load(fh)
    members = clusters_doc["members"]
    for frame in scene.frames:
        for seg_id, _ in candidate_segments(frame.segments, frame.detections, cabinet):
            if frame.segment_roles[seg_id] == "handle":
                expected.add((frame.frame_id, seg_id))
    for m in members:
        if (m["frame"], m["segment_id"]) in expected:
            handle_rows.append(m["cluster"])
    assert handle_rows
    handle_cluster = int(np.bincount(handle_rows).argmax())

    result = _post(server, "/api/scenes/parts/cluster-selection",
                   {"cluster": handle_cluster, "part": "cabinet handle"})
    assert result["ok"] and result["mask_count"] == len(handle_rows)
    sel_path = out / "parts" / "parts" / "selection.json"
    assert json.loads(sel_path.read_text()) == {
        "cluster": handle_cluster, "part": "cabinet handle"
    }

    # the parts stage consumes the persisted selection
    manifest = load_manifest(manifest_path)
    run_parts(manifest, out, container_class="cabinet", k=3, seed=0)
    index = json.loads((out / "parts" / "parts" / "parts_index.json").read_text())
    assert index["part_name"] == "cabinet handle"
    got = {(img["frame"], sid) for img in index["images"] for sid in img["segments"]}
    assert got == expected

    # masks equal the planted handle segments exactly
    for img in index["images"]:
        mask = load_label_image(out / "parts" / "parts" / img["mask"]) > 0
        frame = next(f for f in scene.frames if f.frame_id == img["frame"])
        planted = np.zeros_like(mask)
        for seg in frame.segments.segments:
            if frame.segment_roles[seg.id] == "handle" and (frame.frame_id, seg.id) in expected:
                planted |= seg.decode(frame.segments.width, frame.segments.height)
        np.testing.assert_array_equal(mask, planted)

    # the clusters view reflects the stored selection after reload
    doc = _get(server, "/api/scenes/parts/clusters")
    assert doc["selection"] == {"cluster": handle_cluster, "part": "cabinet handle"}


def test_reselection_overwrites(server, workspace):
    _, out, _ = workspace
    _post(server, "/api/scenes/parts/cluster-selection", {"cluster": 0, "part": "x"})
    _post(server, "/api/scenes/parts/cluster-selection", {"cluster": 1, "part": "y"})
    doc = _get(server, "/api/scenes/parts/clusters")
    assert doc["selection"] == {"cluster": 1, "part": "y"}


def test_episode_review_roundtrip(server, workspace):
    _, out, _ = workspace
    listing = _get(server, "/api/episodes")
    assert listing["episodes"]
    auto_before = listing["summary"]["automatic"]
    eid = listing["episodes"][0]["id"]

    detail = _get(server, f"/api/episodes/{eid}")
    assert detail["review"] is None
    assert detail["map_render"].startswith("/artifacts/")

    result = _post(server, f"/api/episodes/{eid}/review", {"success": 0})
    assert result["ok"]
    summary = result["summary"]
    # manual column moves, automatic column untouched
    assert summary["manual"]["reviewed"] == 1
    assert summary["manual"]["sr"] == 0.0
    assert summary["automatic"] == auto_before

    # unreviewed episodes are excluded from the manual denominator
    result = _post(server, f"/api/episodes/{eid}/review", {"success": 1})
    assert result["summary"]["manual"] == {"reviewed": 1, "sr": 100.0}

    # reload reproduces persisted state
    detail = _get(server, f"/api/episodes/{eid}")
    assert detail["review"] == 1


def test_frame_annotation_urls(server):
    doc = _get(server, "/api/frames/parts/000/annotation")
    assert "fused" in doc["layers"]
    with urllib.request.urlopen(
        f"http://127.0.0.1:{server.port}{doc['layers']['fused']['semantic']}"
    ) as resp:
        assert resp.read(8).startswith(b"\x89PNG")
    assert doc["rgb"].startswith("/data/")


def test_bad_requests_rejected(server):
    with pytest.raises(urllib.error.HTTPError) as err:
        _post(server, "/api/scenes/parts/cluster-selection", {"cluster": 99, "part": "x"})
    assert err.value.code == 400
    with pytest.raises(urllib.error.HTTPError) as err:
        _post(server, "/api/episodes/nope/review", {"success": 1})
    assert err.value.code == 404
    with pytest.raises(urllib.error.HTTPError) as err:
        _get(server, "/api/scenes/ghost/clusters")
    assert err.value.code == 404


def test_path_traversal_blocked(server):
    with pytest.raises(urllib.error.HTTPError) as err:
        _get(server, "/artifacts/../../etc/passwd")
    assert err.value.code == 404
