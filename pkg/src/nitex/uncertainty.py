"""Per-texel uncertainty in [0, 1]: SSIM-based oracle, reference-free heuristic,
and a file-based injection point for an external predictor.

Uncertainty is dissimilarity: U = 1 - SSIM against a reference where one is
available. Uncovered texels are always maximally uncertain (U = 1).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .io_formats import read_pfm, read_png


@dataclass(frozen=True)
class SSIMConfig:
    """Standard SSIM constants; the Gaussian window is normalized to sum 1."""

    window_side: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def window(self) -> np.ndarray:
        half = (self.window_side - 1) / 2.0
        coords = np.arange(self.window_side, dtype=np.float64) - half
        g = np.exp(-(coords**2) / (2.0 * self.window_sigma**2))
        w = np.outer(g, g)
        return w / w.sum()


@dataclass
class UncertaintyMap:
    values: np.ndarray  # (N, N) float64 in [0, 1]

    @property
    def resolution(self) -> int:
        return self.values.shape[0]


def ssim_map(
    a: np.ndarray,
    b: np.ndarray,
    mask: np.ndarray | None = None,
    config: SSIMConfig = SSIMConfig(),
) -> np.ndarray:
    """Per-pixel SSIM with a Gaussian window and reflective border padding.

    Channels are averaged to one scalar per pixel, the raw score is clamped
    from [-1, 1] to [0, 1], and masked-out pixels report 1.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    window = config.window()
    c1 = (config.k1 * config.dynamic_range) ** 2
    c2 = (config.k2 * config.dynamic_range) ** 2

    per_channel = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mu_x = ndimage.correlate(x, window, mode="reflect")
        mu_y = ndimage.correlate(y, window, mode="reflect")
        xx = ndimage.correlate(x * x, window, mode="reflect")
        yy = ndimage.correlate(y * y, window, mode="reflect")
        xy = ndimage.correlate(x * y, window, mode="reflect")
        var_x = xx - mu_x * mu_x
        var_y = yy - mu_y * mu_y
        cov = xy - mu_x * mu_y
        score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
            (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        )
        per_channel.append(score)
    score = np.mean(per_channel, axis=0)
    score = np.clip(score, 0.0, 1.0)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != score.shape:
            raise ValueError("mask resolution mismatch")
        score = np.where(mask, score, 1.0)
    return score


def oracle_uncertainty(contribution, ground_truth: np.ndarray) -> UncertaintyMap:
    """U = 1 - SSIM(contribution, ground truth) on covered texels, 1 elsewhere.

    Holes in the contribution stay visible to the windowed statistics, so
    texels near missing regions score high even when they are covered.
    """
    gt = np.asarray(ground_truth, dtype=np.float64)
    if gt.shape[:2] != contribution.covered.shape:
        raise ValueError("ground truth resolution mismatch")
    similarity = ssim_map(contribution.values, gt)
    u = np.clip(1.0 - similarity, 0.0, 1.0)
    u[~contribution.covered] = 1.0
    return UncertaintyMap(values=u)


HOLE_DECAY_TEXELS = 8
CONTRAST_WINDOW = 7
HOLE_WEIGHT = 0.7
CONTRAST_WEIGHT = 0.3
_CONTRAST_KNEE = 0.01  # gradient energy at which the contrast score reaches 0.5


def heuristic_uncertainty(contribution) -> UncertaintyMap:
    """Reference-free score: proximity to holes plus lack of local contrast.

    Stands in for a learned per-pixel predictor when neither ground truth
    nor an external model is available.
    """
    covered = contribution.covered
    values = np.asarray(contribution.values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]

    if covered.all():
        hole_proximity = np.zeros(covered.shape, dtype=np.float64)
    else:
        dist = ndimage.distance_transform_edt(covered)
        hole_proximity = np.clip(1.0 - dist / HOLE_DECAY_TEXELS, 0.0, 1.0)

    # Forward differences so that even period-2 patterns register energy.
    gx = np.zeros_like(values)
    gy = np.zeros_like(values)
    gx[:, :-1] = values[:, 1:] - values[:, :-1]
    gy[:-1, :] = values[1:, :] - values[:-1, :]
    energy = (gx**2 + gy**2).sum(axis=2)
    local = ndimage.uniform_filter(energy, size=CONTRAST_WINDOW, mode="reflect")
    contrast_score = local / (local + _CONTRAST_KNEE)

    u = np.clip(
        HOLE_WEIGHT * hole_proximity + CONTRAST_WEIGHT * (1.0 - contrast_score),
        0.0,
        1.0,
    )
    u[~covered] = 1.0
    return UncertaintyMap(values=u)


def external_uncertainty(path: str | Path, expected_resolution: int) -> UncertaintyMap:
    """Load a predicted uncertainty map from a 1-channel PFM or 8-bit PNG."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        fm = read_pfm(path)
        if fm.channels != 1:
            raise ValueError(f"{path}: expected 1-channel uncertainty map")
        values = fm.values.astype(np.float64)
    else:
        arr = read_png(path)
        if arr.ndim != 2:
            raise ValueError(f"{path}: expected 1-channel uncertainty map")
        values = arr.astype(np.float64) / 255.0
    if values.shape != (expected_resolution, expected_resolution):
        raise ValueError(
            f"{path}: resolution {values.shape} != expected "
            f"{expected_resolution}x{expected_resolution}"
        )
    if values.min() < 0.0 or values.max() > 1.0:
        warnings.warn(f"{path}: uncertainty values clamped to [0, 1]", stacklevel=2)
        values = np.clip(values, 0.0, 1.0)
    return UncertaintyMap(values=values)
