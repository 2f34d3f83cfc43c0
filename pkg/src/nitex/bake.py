"""Back-projection of view images into UV space and multi-view blending.

The iterative loop seeds with the front and back views, then repeatedly
blends everything acquired so far, scores the remaining candidates on the
residual per-texel uncertainty (or on uncovered-texel counts), and acquires
the argmax until the view budget or the uncertainty threshold is hit.

Per-texel blend: contributions are averaged with weights
``(1 - U) * c`` where U is the contribution's uncertainty and c the view's
perceptual weight; sums run in view-id order so results are byte-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import viewsel
from ._parallel import thread_map
from .camera import BACK_VIEW_ID, FRONT_VIEW_ID, View, camera_basis, view_weight
from .geometry import TriMesh
from .pbrtex import TextureSet
from .raster import (
    GBuffer,
    TexelGeometry,
    ensure_normals,
    project_to_view,
    bilinear_sample,
    render_gbuffer,
    render_texture_image,
    render_view_uv,
    rasterize_uv_atlas,
    sample_depth_bilinear,
)
from .uncertainty import (
    UncertaintyMap,
    external_uncertainty,
    heuristic_uncertainty,
    oracle_uncertainty,
)

DEFAULT_GRAZING_LIMIT_DEG = 85.0
DEFAULT_DEPTH_TOLERANCE_SCALE = 1e-3
ROUGHNESS_FILL = 0.5
METALLIC_FILL = 0.0


class ProviderError(RuntimeError):
    """A view-image provider failed; carries the offending view id."""

    def __init__(self, view_id: int, cause: Exception):
        super().__init__(f"provider failed on view {view_id}: {cause}")
        self.view_id = view_id


@dataclass
class ViewImageSet:
    """One view's bake inputs: albedo, optional MR channels, optional validity."""

    albedo: np.ndarray  # (H, W, 3) float in [0, 1]
    mr: np.ndarray | None = None  # (H, W, 2) float roughness/metallic
    valid: np.ndarray | None = None  # (H, W) bool, False excludes pixels


@dataclass
class ViewContribution:
    """A single view's partial texture over the UV atlas."""

    view_id: int
    values: np.ndarray  # (N, N, C) float
    covered: np.ndarray  # (N, N) bool
    uncertainty: np.ndarray  # (N, N) float in [0, 1], 1 where uncovered

    @property
    def resolution(self) -> int:
        return self.covered.shape[0]

    def with_uncertainty(self, u: UncertaintyMap | np.ndarray) -> "ViewContribution":
        values = u.values if isinstance(u, UncertaintyMap) else np.asarray(u)
        out = np.clip(values.astype(np.float64), 0.0, 1.0).copy()
        out[~self.covered] = 1.0
        return ViewContribution(
            view_id=self.view_id,
            values=self.values,
            covered=self.covered,
            uncertainty=out,
        )


@dataclass
class BakeResult:
    textures: TextureSet
    coverage: np.ndarray  # (N, N) bool, pre-dilation
    residual_uncertainty: np.ndarray  # (N, N) float in [0, 1]
    views_used: list[int]
    per_view_scores: list[dict]

    def uncovered_fraction(self, occupied: np.ndarray) -> float:
        occ = int(np.count_nonzero(occupied))
        if occ == 0:
            return 0.0
        return float(np.count_nonzero(occupied & ~self.coverage)) / occ


@dataclass
class BakeConfig:
    resolution: int = 512
    max_views: int = 10
    threshold: float = 0.05  # uq-score stop threshold
    epsilon1: float = 1e-6  # blend denominator regularizer
    strategy: str = "uq"  # "uq" | "coverage"
    fill_value: float = 0.5  # albedo fill for texels no view reaches
    dilation_radius: int = 4
    depth_tolerance_scale: float = DEFAULT_DEPTH_TOLERANCE_SCALE
    grazing_limit_deg: float = DEFAULT_GRAZING_LIMIT_DEG
    uq_score_mode: str = "mean"  # "mean" | "sum"
    threads: int = 1

    def validate(self) -> "BakeConfig":
        if self.strategy not in ("uq", "coverage"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.uq_score_mode not in ("mean", "sum"):
            raise ValueError(f"unknown uq_score_mode {self.uq_score_mode!r}")
        if self.max_views < 2:
            raise ValueError("max_views must be >= 2 (front + back seed)")
        if self.epsilon1 < 0:
            raise ValueError("epsilon1 must be >= 0")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        return self


def backproject_coverage(
    texel_geometry: TexelGeometry,
    view: View,
    depth_buffer: np.ndarray,
    *,
    valid: np.ndarray | None = None,
    depth_tolerance: float | None = None,
    grazing_limit_deg: float = DEFAULT_GRAZING_LIMIT_DEG,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decide which occupied texels this view can texture.

    A texel is covered iff its world point projects inside the image, its
    ray depth agrees with the view's depth buffer within the tolerance, and
    its normal faces the camera within the grazing limit. Returns
    (covered (N,N) bool, x, y sample coords of occupied texels).
    """
    res = view.resolution
    if depth_buffer.shape != (res, res):
        raise ValueError(
            f"depth buffer shape {depth_buffer.shape} does not match view "
            f"resolution {res}"
        )
    occupied = texel_geometry.occupied
    points = texel_geometry.position[occupied]
    normals = texel_geometry.normal[occupied]
    if depth_tolerance is None:
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        depth_tolerance = DEFAULT_DEPTH_TOLERANCE_SCALE * float(
            np.linalg.norm(hi - lo)
        )

    x, y, t = project_to_view(view, points)
    inside = (x >= 0) & (x <= res - 1) & (y >= 0) & (y <= res - 1)

    sampled = sample_depth_bilinear(depth_buffer, x, y)
    depth_ok = np.abs(t - sampled) <= depth_tolerance

    _, _, forward = camera_basis(view)
    facing = normals @ (-forward) >= math.cos(math.radians(grazing_limit_deg))

    ok = inside & depth_ok & facing
    if valid is not None:
        if valid.shape != (res, res):
            raise ValueError("valid mask resolution mismatch")
        ok &= _sample_valid4(valid, x, y)

    covered = np.zeros_like(occupied)
    covered[occupied] = ok
    return covered, x, y


def _sample_valid4(valid: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Conservative: all four bilinear taps must be valid pixels.
    h, w = valid.shape
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xc).astype(np.int64), w - 2)
    y0 = np.minimum(np.floor(yc).astype(np.int64), h - 2)
    return (
        valid[y0, x0]
        & valid[y0, np.minimum(x0 + 1, w - 1)]
        & valid[np.minimum(y0 + 1, h - 1), x0]
        & valid[np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)]
    )


def backproject_view(
    texel_geometry: TexelGeometry,
    view: View,
    view_image: np.ndarray,
    depth_buffer: np.ndarray,
    *,
    valid: np.ndarray | None = None,
    depth_tolerance: float | None = None,
    grazing_limit_deg: float = DEFAULT_GRAZING_LIMIT_DEG,
) -> ViewContribution:
    """Sample a view image at every covered texel's projection (bilinear)."""
    image = np.asarray(view_image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    res = view.resolution
    if image.shape[0] != res or image.shape[1] != res:
        raise ValueError(
            f"view image shape {image.shape} does not match view resolution {res}"
        )
    covered, x, y = backproject_coverage(
        texel_geometry,
        view,
        depth_buffer,
        valid=valid,
        depth_tolerance=depth_tolerance,
        grazing_limit_deg=grazing_limit_deg,
    )
    occupied = texel_geometry.occupied
    n = texel_geometry.resolution
    values = np.zeros((n, n, image.shape[2]), dtype=np.float64)
    ok = covered[occupied]
    sampled = bilinear_sample(image, x[ok], y[ok])
    buf = np.zeros((int(occupied.sum()), image.shape[2]), dtype=np.float64)
    buf[ok] = sampled
    values[occupied] = buf
    uncertainty = np.where(covered, 0.0, 1.0)
    return ViewContribution(
        view_id=view.id, values=values, covered=covered, uncertainty=uncertainty
    )


def blend_views(
    contributions: list[ViewContribution],
    weights: list[float],
    epsilon1: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uncertainty- and view-weighted average of per-view partial textures.

    Returns (blended values, coverage, residual uncertainty). Uncovered
    contributions carry zero weight; texels no view covers come back as 0
    with residual uncertainty 1.
    """
    if not contributions:
        raise ValueError("no contributions to blend")
    if len(weights) != len(contributions):
        raise ValueError("one weight per contribution required")
    order = sorted(range(len(contributions)), key=lambda i: contributions[i].view_id)
    shape = contributions[0].values.shape
    for c in contributions:
        if c.values.shape != shape:
            raise ValueError("contribution shapes differ")

    values = np.stack([contributions[i].values for i in order])
    covered = np.stack([contributions[i].covered for i in order])
    unc = np.stack([contributions[i].uncertainty for i in order])
    c_j = np.asarray([weights[i] for i in order], dtype=np.float64)

    w = (1.0 - unc) * c_j[:, None, None] * covered
    den = w.sum(axis=0)
    num = (w[..., None] * values).sum(axis=0)
    denom = den + epsilon1
    blended = np.zeros_like(num)
    np.divide(num, denom[..., None], out=blended, where=denom[..., None] > 0)

    coverage = covered.any(axis=0)
    weighted_u = (w * unc).sum(axis=0)
    residual = np.ones_like(den)
    np.divide(weighted_u, den, out=residual, where=den > 0)
    residual[~coverage] = 1.0
    return blended, coverage, np.clip(residual, 0.0, 1.0)


def dilate_and_fill(
    values: np.ndarray,
    covered: np.ndarray,
    radius: int,
    fill,
) -> np.ndarray:
    """Bleed covered texels into an uncovered border, then flood the rest.

    Each uncovered texel within ``radius`` of coverage takes the value of
    its nearest covered texel; everything farther gets the fill value.
    """
    out = np.array(values, dtype=np.float64, copy=True)
    if covered.all():
        return out
    if not covered.any():
        out[...] = fill
        return out
    dist, (iy, ix) = ndimage.distance_transform_edt(~covered, return_indices=True)
    ring = (~covered) & (dist <= radius)
    out[ring] = out[iy[ring], ix[ring]]
    far = (~covered) & (dist > radius)
    out[far] = fill
    return out


class BakeCache:
    """Per-mesh rasterization products shared across bake runs.

    Holds the UV-atlas texel geometry plus lazily computed per-view
    G-buffers, UV maps, and geometric coverage footprints.
    """

    def __init__(
        self,
        mesh: TriMesh,
        candidates: list[View],
        resolution: int,
        *,
        depth_tolerance_scale: float = DEFAULT_DEPTH_TOLERANCE_SCALE,
        grazing_limit_deg: float = DEFAULT_GRAZING_LIMIT_DEG,
    ):
        self.mesh = ensure_normals(mesh)
        self.candidates = list(candidates)
        self.by_id = {v.id: v for v in candidates}
        if len(self.by_id) != len(candidates):
            raise ValueError("candidate view ids must be unique")
        self.atlas = rasterize_uv_atlas(self.mesh, resolution)
        self.depth_tolerance = depth_tolerance_scale * self.mesh.aabb_diagonal()
        self.grazing_limit_deg = grazing_limit_deg
        self._gbuffers: dict[int, GBuffer] = {}
        self._uv_maps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._footprints: dict[int, np.ndarray] = {}

    def gbuffer(self, view_id: int) -> GBuffer:
        if view_id not in self._gbuffers:
            self._gbuffers[view_id] = render_gbuffer(self.mesh, self.by_id[view_id])
        return self._gbuffers[view_id]

    def uv_map(self, view_id: int) -> tuple[np.ndarray, np.ndarray]:
        if view_id not in self._uv_maps:
            self._uv_maps[view_id] = render_view_uv(self.mesh, self.by_id[view_id])
        return self._uv_maps[view_id]

    def footprint(self, view_id: int) -> np.ndarray:
        if view_id not in self._footprints:
            covered, _, _ = backproject_coverage(
                self.atlas,
                self.by_id[view_id],
                self.gbuffer(view_id).depth,
                depth_tolerance=self.depth_tolerance,
                grazing_limit_deg=self.grazing_limit_deg,
            )
            self._footprints[view_id] = covered
        return self._footprints[view_id]

    def precompute(self, threads: int = 1) -> None:
        ids = [v.id for v in self.candidates]
        missing = [i for i in ids if i not in self._gbuffers]
        buffers = thread_map(
            lambda i: render_gbuffer(self.mesh, self.by_id[i]), missing, threads
        )
        self._gbuffers.update(dict(zip(missing, buffers)))
        missing_fp = [i for i in ids if i not in self._footprints]
        footprints = thread_map(self.footprint, missing_fp, threads)
        self._footprints.update(dict(zip(missing_fp, footprints)))


def clean_render_provider(
    mesh: TriMesh,
    textures: TextureSet,
    cache: BakeCache,
    *,
    fill_value: float = 0.5,
    dilation_radius: int = 4,
):
    """Provider that renders views straight from ground-truth textures.

    Texture maps are border-dilated once up front so bilinear sampling near
    UV seams does not bleed unrelated texels into the renders.
    """
    textures.validate()
    occ = cache.atlas.occupied
    albedo = dilate_and_fill(textures.albedo, occ, dilation_radius, fill_value)
    mr = np.stack(
        [
            dilate_and_fill(textures.roughness, occ, dilation_radius, ROUGHNESS_FILL),
            dilate_and_fill(textures.metallic, occ, dilation_radius, METALLIC_FILL),
        ],
        axis=-1,
    )

    def provider(view: View) -> ViewImageSet:
        uv_map = cache.uv_map(view.id)
        image, _ = render_texture_image(mesh, albedo, view, uv_map=uv_map)
        mr_image, _ = render_texture_image(mesh, mr, view, uv_map=uv_map)
        return ViewImageSet(albedo=np.clip(image, 0.0, 1.0), mr=mr_image)

    return provider


def directory_image_provider(directory: str | Path):
    """Provider reading ``view_{id:03d}.png`` (+ optional ``view_{id:03d}_mr.png``)."""
    from .io_formats import read_png
    from .pbrtex import MREncodedImage, decode_mr

    directory = Path(directory)

    def provider(view: View) -> ViewImageSet:
        albedo_path = directory / f"view_{view.id:03d}.png"
        arr = read_png(albedo_path)
        if arr.ndim != 3:
            raise ValueError(f"{albedo_path}: expected a 3-channel image")
        albedo = arr.astype(np.float64) / 255.0
        mr = None
        mr_path = directory / f"view_{view.id:03d}_mr.png"
        if mr_path.exists():
            pixels = read_png(mr_path)
            foreground = pixels[:, :, 0] > 0
            rough, metal = decode_mr(
                MREncodedImage(pixels=pixels, foreground=foreground)
            )
            mr = np.stack([rough, metal], axis=-1)
        return ViewImageSet(albedo=albedo, mr=mr)

    return provider


def oracle_uncertainty_source(ground_truth_albedo: np.ndarray):
    gt = np.asarray(ground_truth_albedo, dtype=np.float64)

    def source(contribution: ViewContribution) -> UncertaintyMap:
        return oracle_uncertainty(contribution, gt)

    return source


def heuristic_uncertainty_source():
    return heuristic_uncertainty


def external_uncertainty_source(directory: str | Path):
    directory = Path(directory)

    def source(contribution: ViewContribution) -> UncertaintyMap:
        base = directory / f"uncertainty_{contribution.view_id:03d}"
        for suffix in (".pfm", ".png"):
            path = base.with_suffix(suffix)
            if path.exists():
                return external_uncertainty(path, contribution.resolution)
        raise FileNotFoundError(
            f"no uncertainty map for view {contribution.view_id} under {directory}"
        )

    return source


@dataclass
class _Acquired:
    view: View
    albedo: ViewContribution
    mr: ViewContribution | None


def iterative_bake(
    mesh: TriMesh,
    provider,
    uncertainty_source,
    config: BakeConfig = BakeConfig(),
    *,
    candidates: list[View] | None = None,
    cache: BakeCache | None = None,
) -> BakeResult:
    """Seed with front/back, then greedily add views until budget or threshold.

    ``provider`` maps a View to its images; ``uncertainty_source`` maps an
    albedo contribution to its per-texel uncertainty. The mesh should be
    normalized (cameras frame the unit box around the origin).
    """
    config.validate()
    if cache is None:
        if candidates is None:
            from .camera import canonical_candidates

            candidates = canonical_candidates()
        cache = BakeCache(
            mesh,
            candidates,
            config.resolution,
            depth_tolerance_scale=config.depth_tolerance_scale,
            grazing_limit_deg=config.grazing_limit_deg,
        )
    for seed_id in (FRONT_VIEW_ID, BACK_VIEW_ID):
        if seed_id not in cache.by_id:
            raise ValueError(f"candidate pool lacks seed view {seed_id}")
    cache.precompute(config.threads)

    acquired: list[_Acquired] = []
    history: list[dict] = []

    def acquire(view_id: int) -> None:
        view = cache.by_id[view_id]
        try:
            images = provider(view)
        except Exception as exc:  # propagate with the offending view id
            raise ProviderError(view_id, exc) from exc
        stacked = images.albedo
        if images.mr is not None:
            stacked = np.concatenate([images.albedo, images.mr], axis=2)
        contribution = backproject_view(
            cache.atlas,
            view,
            stacked,
            cache.gbuffer(view_id).depth,
            valid=images.valid,
            depth_tolerance=cache.depth_tolerance,
            grazing_limit_deg=cache.grazing_limit_deg,
        )
        albedo = ViewContribution(
            view_id=view_id,
            values=contribution.values[:, :, :3],
            covered=contribution.covered,
            uncertainty=contribution.uncertainty,
        )
        albedo = albedo.with_uncertainty(uncertainty_source(albedo))
        mr = None
        if images.mr is not None:
            mr = ViewContribution(
                view_id=view_id,
                values=contribution.values[:, :, 3:5],
                covered=contribution.covered,
                uncertainty=albedo.uncertainty,
            )
        acquired.append(_Acquired(view=view, albedo=albedo, mr=mr))

    acquire(FRONT_VIEW_ID)
    acquire(BACK_VIEW_ID)

    def blend_current():
        contribs = [a.albedo for a in acquired]
        weights = [view_weight(a.view) for a in acquired]
        return blend_views(contribs, weights, config.epsilon1)

    albedo_map, coverage, residual = blend_current()

    while len(acquired) < config.max_views:
        used = {a.view.id for a in acquired}
        state = viewsel.SelectionState(
            residual_uncertainty=UncertaintyMap(values=residual),
            coverage=coverage,
            candidate_footprints={
                v.id: cache.footprint(v.id)
                for v in cache.candidates
                if v.id not in used
            },
            used=used,
        )
        ranking = viewsel.rank_candidates(
            state, config.strategy, uq_score_mode=config.uq_score_mode
        )
        if not ranking:
            history.append({"stop": "exhausted", "scores": {}})
            break
        best_id, best_score = ranking[0]
        record = {
            "scores": {int(vid): float(score) for vid, score in ranking},
            "selected": int(best_id),
        }
        if config.strategy == "uq" and best_score < config.threshold:
            record["stop"] = "threshold"
            record["selected"] = None
            history.append(record)
            break
        if config.strategy == "coverage" and best_score <= 0:
            record["stop"] = "no_coverage_gain"
            record["selected"] = None
            history.append(record)
            break
        history.append(record)
        acquire(best_id)
        albedo_map, coverage, residual = blend_current()

    if len(acquired) >= config.max_views:
        history.append({"stop": "max_views", "scores": {}})

    # MR blending reuses the albedo-side weights and coverage per texel.
    mr_contribs = [a.mr for a in acquired if a.mr is not None]
    n = cache.atlas.resolution
    if mr_contribs:
        mr_weights = [
            view_weight(a.view) for a in acquired if a.mr is not None
        ]
        mr_map, mr_cov, _ = blend_views(mr_contribs, mr_weights, config.epsilon1)
        roughness = dilate_and_fill(
            mr_map[:, :, 0], mr_cov, config.dilation_radius, ROUGHNESS_FILL
        )
        metallic = dilate_and_fill(
            mr_map[:, :, 1], mr_cov, config.dilation_radius, METALLIC_FILL
        )
    else:
        roughness = np.full((n, n), ROUGHNESS_FILL)
        metallic = np.full((n, n), METALLIC_FILL)

    albedo_final = dilate_and_fill(
        albedo_map, coverage, config.dilation_radius, config.fill_value
    )
    textures = TextureSet(
        albedo=np.clip(albedo_final, 0.0, 1.0),
        roughness=np.clip(roughness, 0.0, 1.0),
        metallic=np.clip(metallic, 0.0, 1.0),
    ).validate()

    return BakeResult(
        textures=textures,
        coverage=coverage,
        residual_uncertainty=residual,
        views_used=[a.view.id for a in acquired],
        per_view_scores=history,
    )
