"""Command-line entry point.

Every stage flag can also be supplied through the environment with a
FUSELABEL_ prefix (e.g. FUSELABEL_WORKERS=4, FUSELABEL_DEPTH_TOL=0.2);
explicit flags win over the environment.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import FuseLabelError
from .fuse import FuseConfig
from .ingest import load_manifest
from .mvverify import VerifyConfig
from .nav import NavConfig
from .pipeline import (
    DEFAULT_WORKERS,
    run_eval,
    run_fuse,
    run_map,
    run_navigate,
    run_parts,
    run_verify,
)
from .semmap import GridConfig


def _env(name: str, default, cast=str):
    raw = os.environ.get(f"FUSELABEL_{name}")
    if raw is None:
        return default
    if cast is bool:
        return raw.lower() in ("1", "true", "yes")
    return cast(raw)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--manifest", required=True, type=Path, help="dataset manifest JSON")
    p.add_argument("--out", required=True, type=Path, help="artifact output root")
    p.add_argument("--workers", type=int, default=_env("WORKERS", DEFAULT_WORKERS, int))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuselabel",
        description="Fuse perception-model outputs into annotations and drive "
                    "evaluation, mapping, navigation, and part discovery.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic box-world dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--preset", default="demo",
                   choices=["demo", "fuse", "mapping", "mv", "parts", "nav"])
    p.add_argument("--scenes", type=int, default=3, help="scene count for the nav preset")
    p.add_argument("--embeddings", action="store_true")

    p = sub.add_parser("fuse", help="single-view fusion")
    _add_common(p)
    p.add_argument("--min-inside-frac", type=float,
                   default=_env("MIN_INSIDE_FRAC", 0.8, float))
    p.add_argument("--min-score", type=float, default=_env("MIN_SCORE", 0.3, float))
    p.add_argument("--use-ingested-masks", action="store_true",
                   default=_env("USE_INGESTED_MASKS", False, bool))

    p = sub.add_parser("verify", help="multi-view verification of fused annotations")
    _add_common(p)
    p.add_argument("--references", type=int, default=_env("REFERENCES", 2, int))
    p.add_argument("--depth-tol", type=float, default=_env("DEPTH_TOL", 0.1, float))
    p.add_argument("--rotation-weight", type=float,
                   default=_env("ROTATION_WEIGHT", 0.5, float))

    p = sub.add_parser("eval", help="score annotations against gt_semantic")
    _add_common(p)
    p.add_argument("--pred", default="verified", help="stage directory to score")
    p.add_argument("--apply-synonyms", action="store_true")

    p = sub.add_parser("map", help="build top-down semantic grids")
    _add_common(p)
    p.add_argument("--labels-from", default="verified",
                   help="fused | verified | semantic | gt_semantic")
    p.add_argument("--resolution", type=float, default=_env("RESOLUTION", 0.05, float))
    p.add_argument("--band", default=_env("BAND", "0.05,1.8"),
                   help="height band lo,hi in meters")
    p.add_argument("--origin", default=None, help="grid origin x,y (default auto-fit)")
    p.add_argument("--size", type=int, default=None, help="grid cells per side")
    p.add_argument("--embeddings", action="store_true")

    p = sub.add_parser("navigate", help="run the seeded episode suite")
    _add_common(p)
    p.add_argument("--seeds", default=_env("SEEDS", "1,2,3"))
    p.add_argument("--episodes-per-scene", type=int,
                   default=_env("EPISODES_PER_SCENE", 1, int))
    p.add_argument("--success-radius", type=float,
                   default=_env("SUCCESS_RADIUS", 1.0, float))
    p.add_argument("--maps-dir", type=Path, default=None,
                   help="read grids from here instead of <out>/maps "
                        "(e.g. the gt_maps tree written by synth --preset nav)")

    p = sub.add_parser("parts", help="cluster segments inside container boxes")
    _add_common(p)
    p.add_argument("--container-class", required=True)
    p.add_argument("--k", type=int, default=_env("K", 3, int))
    p.add_argument("--kmeans-seed", type=int, default=_env("KMEANS_SEED", 0, int))
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--cluster", type=int, default=None,
                   help="cluster index to back-project (else selection.json)")
    p.add_argument("--part-name", default=None)

    p = sub.add_parser("serve", help="run the HTTP review service")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--port", type=int, default=_env("PORT", 8008, int))
    p.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    p.add_argument("--ui-dir", type=Path, default=None,
                   help="static frontend assets to serve at /")

    return parser


def _pair(text: str) -> tuple[float, float]:
    a, b = (float(v) for v in text.split(","))
    return (a, b)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except FuseLabelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "synth":
        from . import synthetic as syn

        if args.preset == "nav":
            import numpy as np

            from .semmap import SemanticGrid, save_semantic_grid

            specs = [syn.preset_nav_scene(i) for i in range(args.scenes)]
            # analytic scenes carry no cameras; emit ready-to-navigate grids
            vocab = syn.make_vocabulary(specs)
            for spec in specs:
                config = syn.default_grid_config(spec)
                classes = syn.expected_semantic_grid(spec, vocab, config)
                grid = SemanticGrid(
                    classes, np.full(classes.shape, np.nan, np.float32),
                    config.origin, config.resolution, vocab.max_id,
                )
                save_semantic_grid(
                    grid,
                    args.out / "gt_maps" / spec.name / "grid.png",
                    args.out / "gt_maps" / spec.name / "grid.json",
                )
        elif args.preset == "fuse":
            specs = [syn.preset_fuse_scene()]
        elif args.preset == "mapping":
            specs = [syn.preset_mapping_scene()]
        elif args.preset == "mv":
            specs = [syn.preset_mv_scene()]
        elif args.preset == "parts":
            specs = [syn.preset_parts_scene()]
        else:
            specs = [syn.preset_fuse_scene(), syn.preset_parts_scene()]
        path = syn.write_dataset(specs, args.out, with_embeddings=args.embeddings,
                                 small_names=("bottle", "plant", "lamp", "vase"))
        print(f"wrote {path}")
        return 0

    if args.command == "serve":
        from .server import ReviewServer

        server = ReviewServer(
            manifest_path=args.manifest, out_root=args.out,
            host=args.host, port=args.port, ui_dir=args.ui_dir,
        )
        print(f"review service on http://{args.host}:{server.port}/")
        server.serve_forever()
        return 0

    manifest_requirements = {
        "fuse": ("segments", "semantic", "detections"),
        "verify": ("depth", "pose", "intrinsics"),
        "map": ("depth", "pose", "intrinsics"),
        "eval": (),
        "navigate": (),
        "parts": ("segments", "detections", "features"),
    }
    manifest = load_manifest(args.manifest, require=manifest_requirements[args.command])

    if args.command == "fuse":
        config = FuseConfig(
            min_inside_frac=args.min_inside_frac,
            min_detection_score=args.min_score,
            use_ingested_masks=args.use_ingested_masks,
        )
        out = run_fuse(manifest, args.out, config, args.workers)
        print(f"fused annotations in {out}")
    elif args.command == "verify":
        config = VerifyConfig(
            num_references=args.references,
            depth_tolerance=args.depth_tol,
            rotation_weight=args.rotation_weight,
        )
        out = run_verify(manifest, args.out, config, args.workers)
        print(f"verified annotations in {out}")
    elif args.command == "eval":
        report = run_eval(manifest, args.out, Path(args.out) / args.pred,
                          args.apply_synonyms)
        miou = report.get("miou")
        print(f"mIoU={miou} over {report['frames']} frames "
              f"-> {Path(args.out) / 'eval' / 'report.json'}")
    elif args.command == "map":
        config = GridConfig(
            resolution=args.resolution,
            height_band=_pair(args.band),
            origin=_pair(args.origin) if args.origin else None,
            size=args.size,
        )
        out = run_map(manifest, args.out, args.labels_from, config,
                      args.embeddings, args.workers)
        print(f"maps in {out}")
    elif args.command == "navigate":
        seeds = [int(s) for s in str(args.seeds).split(",")]
        config = NavConfig(success_radius_m=args.success_radius)
        summary = run_navigate(manifest, args.out, seeds,
                               args.episodes_per_scene, config,
                               maps_dir=args.maps_dir)
        print(f"Avg-SR {summary['Avg-SR']['mean']} +/- {summary['Avg-SR']['std']} "
              f"-> {Path(args.out) / 'nav' / 'summary.json'}")
    elif args.command == "parts":
        selection = None
        if args.cluster is not None:
            if not args.part_name:
                raise FuseLabelError("--cluster requires --part-name")
            selection = (args.cluster, args.part_name)
        out = run_parts(manifest, args.out, args.container_class, args.k,
                        args.kmeans_seed, not args.no_normalize, selection)
        print(f"part clusters in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
