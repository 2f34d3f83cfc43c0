"""PBR texture containers and the RGB encoding of metallic/roughness maps.

The MR image convention: foreground pixels store (R=255, G=roughness*255,
B=metallic*255) with round-half-up quantization; background is (0,0,0), so
the R channel doubles as a foreground detector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class TextureSet:
    """Albedo + roughness + metallic maps over one UV atlas."""

    albedo: np.ndarray  # (N, N, 3) float in [0, 1]
    roughness: np.ndarray  # (N, N) float in [0, 1]
    metallic: np.ndarray  # (N, N) float in [0, 1]

    @property
    def resolution(self) -> int:
        return self.albedo.shape[0]

    def validate(self) -> "TextureSet":
        n = self.albedo.shape[0]
        if self.albedo.shape != (n, n, 3):
            raise ValueError(f"albedo must be (N, N, 3), got {self.albedo.shape}")
        for name, arr in (("roughness", self.roughness), ("metallic", self.metallic)):
            if arr.shape != (n, n):
                raise ValueError(f"{name} resolution mismatch: {arr.shape}")
        for name, arr in (
            ("albedo", self.albedo),
            ("roughness", self.roughness),
            ("metallic", self.metallic),
        ):
            if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError(f"{name} values outside [0, 1]")
        return self


@dataclass
class MREncodedImage:
    """Roughness/metallic packed into an 8-bit RGB image."""

    pixels: np.ndarray  # (N, N, 3) uint8
    foreground: np.ndarray  # (N, N) bool


def _quantize_half_up(values: np.ndarray) -> np.ndarray:
    # round-half-up so e.g. 0.5 -> 128, reproducibly across platforms
    return np.floor(values * 255.0 + 0.5).astype(np.uint8)


def encode_mr(
    roughness: np.ndarray, metallic: np.ndarray, foreground: np.ndarray
) -> MREncodedImage:
    """Pack roughness/metallic maps into RGB with R fixed at 255 on foreground."""
    rough = np.asarray(roughness, dtype=np.float64)
    metal = np.asarray(metallic, dtype=np.float64)
    fg = np.asarray(foreground, dtype=bool)
    if rough.shape != metal.shape or rough.shape != fg.shape:
        raise ValueError("roughness/metallic/foreground shapes differ")
    for name, arr in (("roughness", rough), ("metallic", metal)):
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError(f"{name} values outside [0, 1]")
    pixels = np.zeros(rough.shape + (3,), dtype=np.uint8)
    pixels[fg, 0] = 255
    pixels[fg, 1] = _quantize_half_up(rough[fg])
    pixels[fg, 2] = _quantize_half_up(metal[fg])
    return MREncodedImage(pixels=pixels, foreground=fg)


def decode_mr(image: MREncodedImage) -> tuple[np.ndarray, np.ndarray]:
    """Unpack an MR image to float roughness/metallic maps (0 on background)."""
    fg = image.foreground
    pixels = image.pixels
    bad_r = fg & (pixels[:, :, 0] != 255)
    if bad_r.any():
        warnings.warn(
            f"{int(bad_r.sum())} foreground pixels have R != 255; decoding anyway",
            stacklevel=2,
        )
    roughness = np.zeros(fg.shape, dtype=np.float64)
    metallic = np.zeros(fg.shape, dtype=np.float64)
    roughness[fg] = pixels[fg, 1] / 255.0
    metallic[fg] = pixels[fg, 2] / 255.0
    return roughness, metallic


def rectify_mr(
    reference: MREncodedImage, targets: list[MREncodedImage]
) -> list[MREncodedImage]:
    """Overwrite each target's foreground with the reference's representative value.

    The representative is the per-channel median over the reference
    foreground (rounded half-up), which reduces to "any foreground pixel"
    when the reference map is uniform. Background pixels pass through
    byte-identical.
    """
    ref_fg = reference.foreground
    if not ref_fg.any():
        raise ValueError("no foreground to sample")
    ref_pixels = reference.pixels[ref_fg]  # (M, 3)
    value = np.floor(np.median(ref_pixels, axis=0) + 0.5).astype(np.uint8)
    out = []
    for target in targets:
        pixels = target.pixels.copy()
        pixels[target.foreground] = value
        out.append(MREncodedImage(pixels=pixels, foreground=target.foreground.copy()))
    return out


def sample_uniform_material(seed: int) -> tuple[float, float]:
    """Draw (roughness ~ U[0,1), metallic = 0) from a seeded generator."""
    rng = np.random.default_rng(seed)
    return float(rng.random()), 0.0
