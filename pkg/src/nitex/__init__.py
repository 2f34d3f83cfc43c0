"""Multi-view PBR texture baking with uncertainty-guided view selection."""

__version__ = "0.1.0"

from .bake import (
    BakeCache,
    BakeConfig,
    BakeResult,
    ViewContribution,
    ViewImageSet,
    backproject_view,
    blend_views,
    iterative_bake,
)
from .camera import View, canonical_candidates, make_view, view_weight
from .errsim import CorruptionSpec, compare_strategies, corrupt, make_uq_training_pairs, psnr
from .geometry import TriMesh, compute_vertex_normals, load_obj, normalize_to_unit
from .pbrtex import MREncodedImage, TextureSet, decode_mr, encode_mr, rectify_mr
from .raster import GBuffer, TexelGeometry, rasterize_uv_atlas, render_gbuffer, render_preview
from .uncertainty import (
    SSIMConfig,
    UncertaintyMap,
    external_uncertainty,
    heuristic_uncertainty,
    oracle_uncertainty,
    ssim_map,
)
from .viewsel import SelectionState, greedy_select, score_view_cvg, score_view_uq

__all__ = [
    "BakeCache",
    "BakeConfig",
    "BakeResult",
    "CorruptionSpec",
    "GBuffer",
    "MREncodedImage",
    "SSIMConfig",
    "SelectionState",
    "TexelGeometry",
    "TextureSet",
    "TriMesh",
    "UncertaintyMap",
    "View",
    "ViewContribution",
    "ViewImageSet",
    "backproject_view",
    "blend_views",
    "canonical_candidates",
    "compare_strategies",
    "compute_vertex_normals",
    "corrupt",
    "decode_mr",
    "encode_mr",
    "external_uncertainty",
    "greedy_select",
    "heuristic_uncertainty",
    "iterative_bake",
    "load_obj",
    "make_uq_training_pairs",
    "make_view",
    "normalize_to_unit",
    "oracle_uncertainty",
    "psnr",
    "rasterize_uv_atlas",
    "rectify_mr",
    "render_gbuffer",
    "render_preview",
    "score_view_cvg",
    "score_view_uq",
    "ssim_map",
    "view_weight",
]
