"""HTTP review service backing the human-in-the-loop steps.

Serves scene/cluster and episode review data over a small JSON API, and
persists the two human decisions as sidecar files: per-scene cluster
selections (consumed by the parts stage) and per-episode success
verdicts (merged into the manual success-rate column). Stage artifacts
themselves are never mutated.

Routes:
  GET  /api/scenes
  GET  /api/scenes/{id}/clusters
  POST /api/scenes/{id}/cluster-selection   {"cluster": int, "part": str}
  GET  /api/episodes
  GET  /api/episodes/{id}
  POST /api/episodes/{id}/review            {"success": 0|1}
  GET  /api/frames/{scene}/{frame}/annotation
  GET  /artifacts/<path>, /data/<path>, and the static UI at /
"""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .ingest import atomic_write_json, load_manifest

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".png": "image/png",
    ".csv": "text/csv; charset=utf-8",
}


class ReviewServer:
    def __init__(self, manifest_path: Path, out_root: Path, host: str = "127.0.0.1",
                 port: int = 8008, ui_dir: Path | None = None):
        self.manifest = load_manifest(manifest_path)
        self.out_root = Path(out_root)
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self._scene_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.port = self.httpd.server_address[1]

    def serve_forever(self):
        self.httpd.serve_forever()

    def shutdown(self):
        self.httpd.shutdown()
        self.httpd.server_close()

    # -- shared state helpers -------------------------------------------------

    def scene_lock(self, scene_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._scene_locks.setdefault(scene_id, threading.Lock())

    def scenes_payload(self) -> list[dict]:
        out = []
        for scene in self.manifest.scenes:
            parts_dir = self.out_root / "parts" / scene.id
            out.append({
                "id": scene.id,
                "frames": len(scene.frames),
                "has_clusters": (parts_dir / "clusters.json").exists(),
                "has_parts": (parts_dir / "parts_index.json").exists(),
            })
        return out

    def clusters_payload(self, scene_id: str) -> dict | None:
        path = self.out_root / "parts" / scene_id / "clusters.json"
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        clusters = [
            {
                "index": c,
                "count": doc["counts"][c],
                "montage": f"/artifacts/parts/{scene_id}/montage_{c}.png",
            }
            for c in range(doc["k"])
        ]
        selection = None
        sel_path = self.out_root / "parts" / scene_id / "selection.json"
        if sel_path.exists():
            with open(sel_path, encoding="utf-8") as fh:
                selection = json.load(fh)
        return {"scene": scene_id, "k": doc["k"], "clusters": clusters,
                "selection": selection, "container_class": doc.get("container_class")}

    def save_selection(self, scene_id: str, cluster: int, part: str) -> dict:
        clusters = self.clusters_payload(scene_id)
        if clusters is None:
            raise _ApiError(404, f"scene {scene_id!r} has no clusters artifact")
        if not 0 <= cluster < clusters["k"]:
            raise _ApiError(400, f"cluster {cluster} outside [0, {clusters['k']})")
        if not part:
            raise _ApiError(400, "part name must be non-empty")
        with self.scene_lock(scene_id):
            atomic_write_json(
                self.out_root / "parts" / scene_id / "selection.json",
                {"cluster": cluster, "part": part},
            )
        return {"ok": True, "scene": scene_id, "cluster": cluster, "part": part,
                "mask_count": clusters["clusters"][cluster]["count"]}

    def episode_ids(self) -> list[str]:
        epi_dir = self.out_root / "nav" / "episodes"
        if not epi_dir.is_dir():
            return []
        return sorted(p.stem for p in epi_dir.glob("*.json"))

    def episode_payload(self, episode_id: str) -> dict | None:
        path = self.out_root / "nav" / "episodes" / f"{episode_id}.json"
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        doc["map_render"] = f"/artifacts/nav/{doc['map_render']}"
        review_path = self.out_root / "nav" / "reviews" / f"{episode_id}.json"
        doc["review"] = None
        if review_path.exists():
            with open(review_path, encoding="utf-8") as fh:
                doc["review"] = json.load(fh)["success"]
        doc["final_view"] = self._final_view_url(doc)
        return doc

    def _final_view_url(self, episode_doc: dict) -> str | None:
        """RGB of the dataset frame whose camera sits nearest the stop cell."""
        try:
            scene = self.manifest.scene(episode_doc["scene"])
        except Exception:
            return None
        grid_side = self.out_root / "maps" / episode_doc["scene"] / "grid.json"
        if not grid_side.exists():
            return None
        with open(grid_side, encoding="utf-8") as fh:
            side = json.load(fh)
        res = side["resolution"]
        ox, oy = side["origin"]
        sx, sy = episode_doc["stop"]
        stop_xy = np.array([ox + (sx + 0.5) * res, oy + (sy + 0.5) * res])
        best, best_d = None, None
        from .ingest import load_pose

        for frame in scene.frames:
            if not frame.has("pose") or not frame.has("rgb"):
                continue
            t = load_pose(frame.path("pose")).translation[:2]
            d = float(np.hypot(*(t - stop_xy)))
            if best_d is None or d < best_d:
                best, best_d = frame, d
        if best is None:
            return None
        rel = best.path("rgb").relative_to(self.manifest.root)
        return f"/data/{rel.as_posix()}"

    def manual_summary(self) -> dict:
        ids = self.episode_ids()
        reviews_dir = self.out_root / "nav" / "reviews"
        verdicts = {}
        for eid in ids:
            path = reviews_dir / f"{eid}.json"
            if path.exists():
                with open(path, encoding="utf-8") as fh:
                    verdicts[eid] = int(json.load(fh)["success"])
        summary_path = self.out_root / "nav" / "summary.json"
        automatic = None
        if summary_path.exists():
            with open(summary_path, encoding="utf-8") as fh:
                automatic = json.load(fh)
        manual_sr = (
            round(100.0 * sum(verdicts.values()) / len(verdicts), 6) if verdicts else None
        )
        return {
            "automatic": automatic,
            "manual": {"reviewed": len(verdicts), "sr": manual_sr},
            "episodes": len(ids),
            "coverage": round(100.0 * len(verdicts) / len(ids), 6) if ids else 0.0,
        }

    def save_review(self, episode_id: str, success: int) -> dict:
        if self.episode_payload(episode_id) is None:
            raise _ApiError(404, f"unknown episode {episode_id!r}")
        if success not in (0, 1):
            raise _ApiError(400, "success must be 0 or 1")
        with self.scene_lock("__reviews__"):
            atomic_write_json(
                self.out_root / "nav" / "reviews" / f"{episode_id}.json",
                {"success": success},
            )
        return {"ok": True, "episode": episode_id, "success": success,
                "summary": self.manual_summary()}

    def frame_annotation_payload(self, scene_id: str, frame_id: str) -> dict | None:
        try:
            scene = self.manifest.scene(scene_id)
            frame = scene.frame(frame_id)
        except Exception:
            return None
        layers = {}
        for stage in ("fused", "verified"):
            base = self.out_root / stage / scene_id
            if (base / f"{frame_id}_semantic.png").exists():
                layers[stage] = {
                    "semantic": f"/artifacts/{stage}/{scene_id}/{frame_id}_semantic.png",
                    "instance": f"/artifacts/{stage}/{scene_id}/{frame_id}_instance.png",
                }
        rgb = None
        if frame.has("rgb"):
            rel = frame.path("rgb").relative_to(self.manifest.root)
            rgb = f"/data/{rel.as_posix()}"
        return {"scene": scene_id, "frame": frame_id, "rgb": rgb, "layers": layers}


class _ApiError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message
        super().__init__(message)


def _make_handler(server: ReviewServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        # -- plumbing ---------------------------------------------------------

        def _json(self, code: int, obj):
            body = json.dumps(obj, sort_keys=True).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code: int, message: str):
            self._json(code, {"error": message})

        def _file(self, root: Path, rel: str):
            target = (root / rel).resolve()
            if not str(target).startswith(str(root.resolve())) or not target.is_file():
                return self._error(404, f"no such file: {rel}")
            body = target.read_bytes()
            self.send_response(200)
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                doc = json.loads(raw.decode("utf-8")) if raw else {}
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise _ApiError(400, f"malformed JSON body: {exc}") from exc
            if not isinstance(doc, dict):
                raise _ApiError(400, "body must be a JSON object")
            return doc

        # -- routing ----------------------------------------------------------

        def do_GET(self):
            try:
                self._route_get()
            except _ApiError as exc:
                self._error(exc.status, exc.message)
            except Exception as exc:  # pragma: no cover - defensive
                self._error(500, f"internal error: {exc}")

        def do_POST(self):
            try:
                self._route_post()
            except _ApiError as exc:
                self._error(exc.status, exc.message)
            except Exception as exc:  # pragma: no cover - defensive
                self._error(500, f"internal error: {exc}")

        def _route_get(self):
            path = self.path.split("?", 1)[0]
            parts = [p for p in path.split("/") if p]
            if path == "/api/scenes":
                return self._json(200, {"scenes": server.scenes_payload()})
            if len(parts) == 4 and parts[:2] == ["api", "scenes"] and parts[3] == "clusters":
                payload = server.clusters_payload(parts[2])
                if payload is None:
                    return self._error(404, f"scene {parts[2]!r} has no clusters")
                return self._json(200, payload)
            if path == "/api/episodes":
                episodes = [server.episode_payload(eid) for eid in server.episode_ids()]
                return self._json(
                    200, {"episodes": episodes, "summary": server.manual_summary()}
                )
            if len(parts) == 3 and parts[:2] == ["api", "episodes"]:
                payload = server.episode_payload(parts[2])
                if payload is None:
                    return self._error(404, f"unknown episode {parts[2]!r}")
                return self._json(200, payload)
            if len(parts) == 5 and parts[:2] == ["api", "frames"] and parts[4] == "annotation":
                payload = server.frame_annotation_payload(parts[2], parts[3])
                if payload is None:
                    return self._error(404, f"unknown frame {parts[2]}/{parts[3]}")
                return self._json(200, payload)
            if parts and parts[0] == "artifacts":
                return self._file(server.out_root, "/".join(parts[1:]))
            if parts and parts[0] == "data":
                return self._file(server.manifest.root, "/".join(parts[1:]))
            if server.ui_dir is not None:
                rel = "/".join(parts) if parts else "index.html"
                return self._file(server.ui_dir, rel)
            return self._error(404, f"no route for {path}")

        def _route_post(self):
            path = self.path.split("?", 1)[0]
            parts = [p for p in path.split("/") if p]
            if len(parts) == 4 and parts[:2] == ["api", "scenes"] \
                    and parts[3] == "cluster-selection":
                body = self._read_body()
                if "cluster" not in body or "part" not in body:
                    raise _ApiError(400, "body must carry 'cluster' and 'part'")
                result = server.save_selection(
                    parts[2], int(body["cluster"]), str(body["part"])
                )
                return self._json(200, result)
            if len(parts) == 4 and parts[:2] == ["api", "episodes"] and parts[3] == "review":
                body = self._read_body()
                if "success" not in body:
                    raise _ApiError(400, "body must carry 'success'")
                result = server.save_review(parts[2], int(body["success"]))
                return self._json(200, result)
            return self._error(404, f"no route for {path}")

    return Handler
