"""Synthetic baking-error simulation and the strategy-comparison harness.

Corruptions (holes, blur, color shift, warp) are applied inside seeded
elliptical regions of a view's foreground, standing in for the error modes
of a real multi-view generator at desk scale. The comparison harness bakes
with both selection strategies against corrupted views and scores each
candidate viewpoint by PSNR against clean renders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .bake import (
    BakeCache,
    BakeConfig,
    ViewImageSet,
    backproject_view,
    clean_render_provider,
    iterative_bake,
    oracle_uncertainty_source,
)
from .camera import View
from .geometry import TriMesh
from .pbrtex import TextureSet
from .raster import render_texture_image
from .uncertainty import ssim_map

CORRUPTION_KINDS = ("hole", "blur", "color_shift", "warp")


@dataclass(frozen=True)
class CorruptionSpec:
    """One parametric corruption: kind, strength, extent, and seed."""

    kind: str  # hole | blur | color_shift | warp
    magnitude: float = 0.0  # sigma (blur), shift (color), pixels (warp)
    region_fraction: float = 0.2  # share of foreground to corrupt
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not 0.0 <= self.region_fraction <= 1.0:
            raise ValueError("region_fraction must be in [0, 1]")
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")


@dataclass
class CorruptionResult:
    """Corrupted image plus which pixels remain usable for back-projection."""

    image: np.ndarray  # (H, W, 3) float
    valid: np.ndarray  # (H, W) bool; holes are excluded from coverage
    region: np.ndarray  # (H, W) bool pixels the corruption touched


@dataclass
class TrainingPair:
    """Single-view UV texture maps plus their dissimilarity target."""

    predicted: np.ndarray  # (N, N, 3)
    ground_truth: np.ndarray  # (N, N, 3)
    target: np.ndarray  # (N, N) in [0, 1], 1 on uncovered texels
    view_id: int


def _seeded_region(
    mask: np.ndarray, fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Union of random ellipses inside the foreground, close to the target area."""
    region = np.zeros_like(mask)
    if fraction <= 0.0:
        return region
    fg_indices = np.flatnonzero(mask)
    if fg_indices.size == 0:
        return region
    h, w = mask.shape
    target = fraction * fg_indices.size
    ys, xs = np.divmod(fg_indices, w)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(200):
        if region.sum() >= target:
            break
        pick = rng.integers(0, fg_indices.size)
        cy, cx = float(ys[pick]), float(xs[pick])
        rx = rng.uniform(0.02, 0.08) * w
        ry = rng.uniform(0.02, 0.08) * h
        theta = rng.uniform(0.0, np.pi)
        dx = xx - cx
        dy = yy - cy
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        ellipse = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
        region |= ellipse & mask
    return region


def corrupt(
    image: np.ndarray, mask: np.ndarray, spec: CorruptionSpec
) -> CorruptionResult:
    """Apply one corruption inside a seeded region of the foreground.

    Background pixels come back byte-identical; with region_fraction 0 the
    whole image does. Holes additionally invalidate their pixels so
    back-projection treats them as not covered.
    """
    img = np.array(image, dtype=np.float64, copy=True)
    fg = np.asarray(mask, dtype=bool)
    rng = np.random.default_rng(spec.seed)
    region = _seeded_region(fg, spec.region_fraction, rng)
    valid = np.ones_like(fg)
    if not region.any():
        return CorruptionResult(image=img, valid=valid, region=region)

    if spec.kind == "hole":
        img[region] = 0.0
        valid = ~region
    elif spec.kind == "blur":
        sigma = max(spec.magnitude, 1e-6)
        blurred = np.stack(
            [
                ndimage.gaussian_filter(img[:, :, c], sigma=sigma, mode="reflect")
                for c in range(img.shape[2])
            ],
            axis=-1,
        )
        img[region] = blurred[region]
    elif spec.kind == "color_shift":
        shift = rng.uniform(-spec.magnitude, spec.magnitude, size=img.shape[2])
        img[region] = np.clip(img[region] + shift, 0.0, 1.0)
    elif spec.kind == "warp":
        h, w = fg.shape
        coarse = rng.normal(size=(2, 8, 8))
        field = np.stack(
            [
                ndimage.zoom(coarse[axis], (h / 8.0, w / 8.0), order=3)
                for axis in range(2)
            ]
        )
        peak = np.abs(field).max()
        if peak > 0:
            field *= spec.magnitude / peak
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        coords = np.stack([yy + field[0], xx + field[1]])
        warped = np.stack(
            [
                ndimage.map_coordinates(img[:, :, c], coords, order=1, mode="nearest")
                for c in range(img.shape[2])
            ],
            axis=-1,
        )
        img[region] = warped[region]
    return CorruptionResult(image=img, valid=valid, region=region)


def corrupted_render_provider(
    mesh: TriMesh,
    textures: TextureSet,
    cache: BakeCache,
    specs: list[CorruptionSpec],
    **provider_kwargs,
):
    """Clean-render provider with corruptions chained on top, re-seeded per view."""
    clean = clean_render_provider(mesh, textures, cache, **provider_kwargs)

    def provider(view: View) -> ViewImageSet:
        images = clean(view)
        mask = cache.gbuffer(view.id).mask
        albedo = images.albedo
        valid = np.ones_like(mask)
        for spec in specs:
            derived = CorruptionSpec(
                kind=spec.kind,
                magnitude=spec.magnitude,
                region_fraction=spec.region_fraction,
                seed=spec.seed * 1009 + view.id,
            )
            result = corrupt(albedo, mask, derived)
            albedo = result.image
            valid &= result.valid
        return ViewImageSet(albedo=albedo, mr=images.mr, valid=valid)

    return provider


def make_uq_training_pairs(
    mesh: TriMesh,
    textures: TextureSet,
    views: list[View],
    specs: list[CorruptionSpec],
    *,
    resolution: int | None = None,
    cache: BakeCache | None = None,
) -> list[TrainingPair]:
    """Render, corrupt, and back-project to build (prediction, truth, target) triples.

    The target is 1 - SSIM between the corrupted and clean single-view
    bakes, clamped to [0, 1], with uncovered texels forced to 1.
    """
    if cache is None:
        cache = BakeCache(
            mesh, views, resolution or textures.resolution
        )
    provider = clean_render_provider(mesh, textures, cache)
    pairs: list[TrainingPair] = []
    for view in views:
        images = provider(view)
        gbuffer = cache.gbuffer(view.id)
        clean_bake = backproject_view(
            cache.atlas,
            view,
            images.albedo,
            gbuffer.depth,
            depth_tolerance=cache.depth_tolerance,
            grazing_limit_deg=cache.grazing_limit_deg,
        )
        for spec in specs:
            result = corrupt(images.albedo, gbuffer.mask, spec)
            corr_bake = backproject_view(
                cache.atlas,
                view,
                result.image,
                gbuffer.depth,
                valid=result.valid,
                depth_tolerance=cache.depth_tolerance,
                grazing_limit_deg=cache.grazing_limit_deg,
            )
            similarity = ssim_map(corr_bake.values, clean_bake.values)
            target = np.clip(1.0 - similarity, 0.0, 1.0)
            target[~corr_bake.covered] = 1.0
            pairs.append(
                TrainingPair(
                    predicted=corr_bake.values,
                    ground_truth=clean_bake.values,
                    target=target,
                    view_id=view.id,
                )
            )
    return pairs


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """10 * log10(1 / MSE) over masked pixels; identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[:2]:
            raise ValueError("mask resolution mismatch")
        if not mask.any():
            raise ValueError("empty mask")
        a = a[mask]
        b = b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


@dataclass
class StrategyRun:
    strategy: str
    seed: int
    views_used: list[int]
    per_view_psnr: dict[int, float]
    worst_view_psnr: float
    worst_view_id: int
    uncovered_fraction: float


def default_corruption_suite(seed: int) -> list[CorruptionSpec]:
    """The hole+blur scenario used by the comparison experiment."""
    return [
        CorruptionSpec(kind="hole", region_fraction=0.15, seed=seed * 31 + 1),
        CorruptionSpec(kind="blur", magnitude=4.0, region_fraction=0.3, seed=seed * 31 + 2),
    ]


def compare_strategies(
    mesh: TriMesh,
    textures: TextureSet,
    spec_suite: list[CorruptionSpec],
    *,
    candidates: list[View],
    config: BakeConfig = BakeConfig(),
    cache: BakeCache | None = None,
    seed: int = 0,
) -> list[StrategyRun]:
    """Bake once per strategy against corrupted views, then score every candidate.

    Both strategies blend with the ground-truth-referenced uncertainty; only
    the next-view metric differs. Each candidate view of the baked result is
    compared against the clean render by PSNR over the foreground; the
    worst view is the headline number.
    """
    if cache is None:
        cache = BakeCache(
            mesh,
            candidates,
            config.resolution,
            depth_tolerance_scale=config.depth_tolerance_scale,
            grazing_limit_deg=config.grazing_limit_deg,
        )
    provider = corrupted_render_provider(mesh, textures, cache, spec_suite)
    uq_source = oracle_uncertainty_source(textures.albedo)
    occ = cache.atlas.occupied

    gt_renders = {}
    gt_provider = clean_render_provider(mesh, textures, cache)
    for view in candidates:
        gt_renders[view.id] = gt_provider(view).albedo

    runs: list[StrategyRun] = []
    for strategy in ("uq", "coverage"):
        run_config = BakeConfig(
            resolution=config.resolution,
            max_views=config.max_views,
            threshold=config.threshold,
            epsilon1=config.epsilon1,
            strategy=strategy,
            fill_value=config.fill_value,
            dilation_radius=config.dilation_radius,
            depth_tolerance_scale=config.depth_tolerance_scale,
            grazing_limit_deg=config.grazing_limit_deg,
            uq_score_mode=config.uq_score_mode,
            threads=config.threads,
        )
        result = iterative_bake(
            mesh, provider, uq_source, run_config, cache=cache
        )
        # The baked albedo is already dilated and hole-filled, so rendering
        # it back out needs no extra seam handling.
        baked_albedo = result.textures.albedo
        per_view: dict[int, float] = {}
        for view in candidates:
            image, mask = render_texture_image(
                mesh, baked_albedo, view, uv_map=cache.uv_map(view.id)
            )
            per_view[view.id] = psnr(image, gt_renders[view.id], mask=mask)
        worst_id = min(per_view, key=lambda vid: (per_view[vid], vid))
        runs.append(
            StrategyRun(
                strategy=strategy,
                seed=seed,
                views_used=result.views_used,
                per_view_psnr=per_view,
                worst_view_psnr=per_view[worst_id],
                worst_view_id=worst_id,
                uncovered_fraction=result.uncovered_fraction(occ),
            )
        )
    return runs
