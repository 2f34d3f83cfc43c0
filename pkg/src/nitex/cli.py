"""Batch command-line surface for the baking pipeline.

Subcommands: gbuffers, bake, select-views, simulate, compare, metrics,
kernels. Every run writes a ``run_manifest.json`` recording the config,
library versions, and content hashes of its inputs. Exit codes: 0 success,
1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import statistics
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import resolve_thread_count
from .bake import (
    BakeCache,
    BakeConfig,
    clean_render_provider,
    directory_image_provider,
    external_uncertainty_source,
    heuristic_uncertainty_source,
    iterative_bake,
    oracle_uncertainty_source,
)
from .camera import canonical_candidates, views_from_json
from .errsim import (
    CorruptionSpec,
    compare_strategies,
    default_corruption_suite,
    make_uq_training_pairs,
    psnr,
)
from .geometry import load_obj, normalize_to_unit
from .io_formats import read_png, write_json, write_pfm, write_png
from .kernels import selftest
from .pbrtex import MREncodedImage, TextureSet, decode_mr, encode_mr
from .uncertainty import ssim_map


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep usage failures on exit code 1
        raise UsageError(message)


def _hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


class _Manifest:
    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.inputs: dict[str, str] = {}

    def add_input(self, path: str | Path) -> None:
        path = Path(path)
        if path.is_dir():
            for child in sorted(path.iterdir()):
                if child.is_file():
                    self.inputs[str(child)] = _hash_file(child)
        elif path.is_file():
            self.inputs[str(path)] = _hash_file(path)

    def write(self, out_dir: Path) -> None:
        versions = {
            "nitex": __version__,
            "python": ".".join(map(str, sys.version_info[:3])),
            "numpy": np.__version__,
        }
        try:
            import scipy

            versions["scipy"] = scipy.__version__
        except ImportError:
            pass
        try:
            import PIL

            versions["pillow"] = PIL.__version__
        except ImportError:
            pass
        write_json(
            {
                "command": self.command,
                "config": self.config,
                "inputs": self.inputs,
                "versions": versions,
                # Wall-clock stamp; excluded from determinism comparisons.
                "timestamp": datetime.now(timezone.utc).isoformat(),
            },
            out_dir / "run_manifest.json",
        )


def _load_mesh(path: str):
    mesh, _ = normalize_to_unit(load_obj(path))
    return mesh


def _load_views(spec: str, resolution: int):
    if spec == "canonical":
        return canonical_candidates(resolution=resolution)
    return views_from_json(spec)


def _load_gt_textures(directory: str, resolution: int) -> TextureSet:
    directory = Path(directory)
    albedo_path = directory / "albedo.png"
    if not albedo_path.exists():
        raise FileNotFoundError(f"{albedo_path} not found")
    albedo = read_png(albedo_path).astype(np.float64) / 255.0
    if albedo.ndim != 3:
        raise ValueError(f"{albedo_path}: expected a 3-channel image")
    if albedo.shape[0] != resolution:
        raise ValueError(
            f"{albedo_path}: resolution {albedo.shape[0]} != --resolution {resolution}"
        )
    n = albedo.shape[0]
    mr_path = directory / "mr.png"
    if mr_path.exists():
        pixels = read_png(mr_path)
        foreground = pixels[:, :, 0] > 0
        rough, metal = decode_mr(MREncodedImage(pixels=pixels, foreground=foreground))
    else:
        rough = np.full((n, n), 0.5)
        metal = np.zeros((n, n))
    return TextureSet(albedo=albedo, roughness=rough, metallic=metal).validate()


def _to_u8(values: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _bake_config(args) -> BakeConfig:
    return BakeConfig(
        resolution=args.resolution,
        max_views=args.max_views,
        threshold=args.epsilon,
        epsilon1=args.epsilon1,
        strategy=args.strategy,
        fill_value=args.fill,
        threads=resolve_thread_count(args.threads),
    ).validate()


def _add_common_bake_flags(parser, *, with_strategy=True):
    parser.add_argument("--mesh", required=True, help="OBJ mesh with UVs")
    parser.add_argument(
        "--views", default="canonical", help="'canonical' or a view-set JSON file"
    )
    parser.add_argument("--resolution", type=int, default=512)
    parser.add_argument("--max-views", type=int, default=10)
    parser.add_argument("--epsilon", type=float, default=0.05)
    parser.add_argument("--epsilon1", type=float, default=1e-6)
    parser.add_argument("--fill", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    if with_strategy:
        parser.add_argument("--strategy", choices=("uq", "coverage"), default="uq")
    parser.add_argument(
        "--images", default=None, help="directory of view_{id:03d}.png inputs"
    )
    parser.add_argument(
        "--gt-dir",
        default=None,
        help="directory with albedo.png (+ mr.png); views are rendered from it",
    )
    parser.add_argument("-o", "--output", required=True)


def _build_provider_and_source(args, mesh, cache, uncertainty_spec):
    gt_textures = None
    if args.gt_dir:
        gt_textures = _load_gt_textures(args.gt_dir, args.resolution)
    if args.images:
        provider = directory_image_provider(args.images)
    elif gt_textures is not None:
        provider = clean_render_provider(mesh, gt_textures, cache)
    else:
        raise UsageError("one of --images or --gt-dir is required")

    if uncertainty_spec == "oracle":
        if gt_textures is None:
            raise ValueError("--uncertainty oracle requires --gt-dir")
        source = oracle_uncertainty_source(gt_textures.albedo)
    elif uncertainty_spec == "heuristic":
        source = heuristic_uncertainty_source()
    elif uncertainty_spec.startswith("external:"):
        source = external_uncertainty_source(uncertainty_spec.split(":", 1)[1])
    else:
        raise UsageError(f"unknown uncertainty source {uncertainty_spec!r}")
    return provider, source


def _cmd_gbuffers(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    mesh = _load_mesh(args.mesh)
    views = _load_views(args.views, args.resolution)
    manifest = _Manifest(
        "gbuffers", {"mesh": args.mesh, "views": args.views, "resolution": args.resolution}
    )
    manifest.add_input(args.mesh)
    if args.views != "canonical":
        manifest.add_input(args.views)

    from .raster import render_gbuffer

    from ._parallel import thread_map

    threads = resolve_thread_count(args.threads)
    buffers = thread_map(lambda v: render_gbuffer(mesh, v), views, threads)
    for view, gbuf in zip(views, buffers):
        stem = f"view_{view.id:03d}"
        write_pfm(gbuf.normal_map, out / f"{stem}_normal.pfm")
        write_pfm(gbuf.position_map, out / f"{stem}_position.pfm")
        write_pfm(gbuf.depth, out / f"{stem}_depth.pfm")
        write_png(gbuf.mask.astype(np.uint8) * 255, out / f"{stem}_mask.png")
    manifest.write(out)
    return 0


def _cmd_bake(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    config = _bake_config(args)
    mesh = _load_mesh(args.mesh)
    candidates = _load_views(args.views, args.resolution)
    cache = BakeCache(mesh, candidates, config.resolution)
    provider, source = _build_provider_and_source(args, mesh, cache, args.uncertainty)

    manifest = _Manifest(
        "bake",
        {
            "mesh": args.mesh,
            "views": args.views,
            "resolution": config.resolution,
            "strategy": config.strategy,
            "max_views": config.max_views,
            "epsilon": config.threshold,
            "epsilon1": config.epsilon1,
            "fill": config.fill_value,
            "seed": args.seed,
            "uncertainty": args.uncertainty,
        },
    )
    for source_path in (args.mesh, args.images, args.gt_dir):
        if source_path:
            manifest.add_input(source_path)
    if args.views != "canonical":
        manifest.add_input(args.views)

    result = iterative_bake(mesh, provider, source, config, cache=cache)

    write_png(_to_u8(result.textures.albedo), out / "albedo.png")
    mr = encode_mr(
        result.textures.roughness, result.textures.metallic, cache.atlas.occupied
    )
    write_png(mr.pixels, out / "mr.png")
    write_png(result.coverage.astype(np.uint8) * 255, out / "coverage.png")
    write_pfm(result.residual_uncertainty, out / "uncertainty.pfm")
    write_json(
        {
            "views_used": result.views_used,
            "score_history": result.per_view_scores,
            "uncovered_fraction": result.uncovered_fraction(cache.atlas.occupied),
        },
        out / "bake_report.json",
    )
    manifest.write(out)
    return 0


def _cmd_select_views(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    config = _bake_config(args)
    mesh = _load_mesh(args.mesh)
    candidates = _load_views(args.views, args.resolution)
    cache = BakeCache(mesh, candidates, config.resolution)
    provider, source = _build_provider_and_source(args, mesh, cache, args.uncertainty)

    result = iterative_bake(mesh, provider, source, config, cache=cache)
    for record in result.per_view_scores:
        selected = record.get("selected")
        if selected is not None:
            print(f"view {selected:3d}  score {record['scores'][selected]:.6f}")
    print("order:", " ".join(str(v) for v in result.views_used))
    write_json(
        {"views_used": result.views_used, "score_history": result.per_view_scores},
        out / "selection_report.json",
    )
    manifest = _Manifest(
        "select-views", {"mesh": args.mesh, "strategy": config.strategy}
    )
    manifest.add_input(args.mesh)
    manifest.write(out)
    return 0


def _cmd_simulate(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    mesh = _load_mesh(args.mesh)
    textures = _load_gt_textures(args.gt_dir, args.resolution)
    views = _load_views(args.views, args.resolution)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    specs = [
        CorruptionSpec(
            kind=kind,
            magnitude=args.magnitude,
            region_fraction=args.region_fraction,
            seed=args.seed + i,
        )
        for i, kind in enumerate(kinds)
    ]
    pairs = make_uq_training_pairs(
        mesh, textures, views, specs, resolution=args.resolution
    )
    entries = []
    for k, pair in enumerate(pairs):
        pred_name = f"pair_{k}_pred.png"
        gt_name = f"pair_{k}_gt.png"
        target_name = f"pair_{k}_target.pfm"
        write_png(_to_u8(pair.predicted), out / pred_name)
        write_png(_to_u8(pair.ground_truth), out / gt_name)
        write_pfm(pair.target, out / target_name)
        entries.append(
            {
                "index": k,
                "view_id": pair.view_id,
                "predicted": pred_name,
                "ground_truth": gt_name,
                "target": target_name,
            }
        )
    write_json({"pairs": entries}, out / "pairs_manifest.json")
    manifest = _Manifest(
        "simulate",
        {
            "mesh": args.mesh,
            "kinds": kinds,
            "magnitude": args.magnitude,
            "region_fraction": args.region_fraction,
            "seed": args.seed,
            "resolution": args.resolution,
        },
    )
    manifest.add_input(args.mesh)
    manifest.add_input(args.gt_dir)
    manifest.write(out)
    return 0


def _cmd_compare(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    config = _bake_config(args)
    mesh = _load_mesh(args.mesh)
    textures = _load_gt_textures(args.gt_dir, args.resolution)
    candidates = _load_views(args.views, args.resolution)
    cache = BakeCache(mesh, candidates, config.resolution)

    runs = []
    for scenario in range(args.seeds):
        suite = default_corruption_suite(args.seed + scenario)
        runs.extend(
            compare_strategies(
                mesh,
                textures,
                suite,
                candidates=candidates,
                config=config,
                cache=cache,
                seed=args.seed + scenario,
            )
        )
    medians = {
        strategy: statistics.median(
            run.worst_view_psnr for run in runs if run.strategy == strategy
        )
        for strategy in ("uq", "coverage")
    }
    write_json(
        {
            "runs": [
                {
                    "strategy": run.strategy,
                    "seed": run.seed,
                    "views_used": run.views_used,
                    "per_view_psnr": run.per_view_psnr,
                    "worst_view_psnr": run.worst_view_psnr,
                    "worst_view_id": run.worst_view_id,
                    "uncovered_fraction": run.uncovered_fraction,
                }
                for run in runs
            ],
            "median_worst_view_psnr": medians,
        },
        out / "compare_report.json",
    )
    manifest = _Manifest(
        "compare",
        {
            "mesh": args.mesh,
            "seeds": args.seeds,
            "seed": args.seed,
            "max_views": config.max_views,
            "resolution": config.resolution,
        },
    )
    manifest.add_input(args.mesh)
    manifest.add_input(args.gt_dir)
    manifest.write(out)
    for strategy, value in sorted(medians.items()):
        print(f"median worst-view PSNR [{strategy}]: {value:.3f} dB")
    return 0


def _cmd_metrics(args) -> int:
    a = read_png(args.image_a).astype(np.float64) / 255.0
    b = read_png(args.image_b).astype(np.float64) / 255.0
    mask = None
    if args.mask:
        mask = read_png(args.mask) > 0
    if args.metric == "psnr":
        value = psnr(a, b, mask=mask)
    else:
        smap = ssim_map(a, b, mask=mask)
        region = mask if mask is not None else np.ones(smap.shape, dtype=bool)
        value = float(smap[region].mean())
    print("inf" if value == float("inf") else f"{value:.6f}")
    return 0


def _cmd_kernels(args) -> int:
    if args.action != "selftest":
        raise UsageError(f"unknown kernels action {args.action!r}")
    results = selftest(seed=args.seed)
    failed = 0
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        print(f"[{status}] {name}{suffix}")
        failed += 0 if passed else 1
    return 0 if failed == 0 else 2


def build_parser() -> _Parser:
    parser = _Parser(prog="nitex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gbuffers", help="render per-view normal/position/depth/mask")
    p.add_argument("--mesh", required=True)
    p.add_argument("--views", default="canonical")
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gbuffers)

    p = sub.add_parser("bake", help="iteratively bake textures from view images")
    _add_common_bake_flags(p)
    p.add_argument(
        "--uncertainty",
        default="oracle",
        help="oracle | heuristic | external:<dir>",
    )
    p.set_defaults(func=_cmd_bake)

    p = sub.add_parser("select-views", help="run selection only; print ids and scores")
    _add_common_bake_flags(p)
    p.add_argument("--uncertainty", default="oracle")
    p.set_defaults(func=_cmd_select_views)

    p = sub.add_parser("simulate", help="generate corruption training pairs")
    p.add_argument("--mesh", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--views", default="canonical")
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--kinds", default="hole,blur")
    p.add_argument("--magnitude", type=float, default=3.0)
    p.add_argument("--region-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="uq vs coverage strategy comparison")
    _add_common_bake_flags(p, with_strategy=False)
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=_cmd_compare, strategy="uq")

    p = sub.add_parser("metrics", help="psnr/ssim between two PNGs")
    p.add_argument("metric", choices=("psnr", "ssim"))
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--mask", default=None)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("kernels", help="numeric kernel utilities")
    p.add_argument("action", choices=("selftest",))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_kernels)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
