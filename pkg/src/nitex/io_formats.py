"""Bit-exact readers and writers for the image and report formats shared by the pipeline.

Float maps travel as PFM (portable float map), 8-bit images and masks as PNG,
reports as JSON with sorted keys. All writers are deterministic: the same
input produces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class FormatError(ValueError):
    """Raised when a file does not match the expected on-disk format."""


@dataclass
class FloatMap:
    """A 1- or 3-channel float image, rows stored top-down in memory."""

    values: np.ndarray  # (H, W) or (H, W, 3) float32

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.values.ndim == 2 else self.values.shape[2]


def _read_pfm_token(data: bytes, offset: int) -> tuple[bytes, int]:
    # PFM header tokens are separated by single whitespace bytes.
    start = offset
    while start < len(data) and data[start : start + 1].isspace():
        start += 1
    end = start
    while end < len(data) and not data[end : end + 1].isspace():
        end += 1
    if start == end:
        raise FormatError(f"truncated PFM header at byte {offset}")
    return data[start:end], end + 1


def read_pfm(path: str | Path) -> FloatMap:
    """Read a PFM file (`Pf` grayscale or `PF` color) into a top-down FloatMap."""
    data = Path(path).read_bytes()
    magic, offset = _read_pfm_token(data, 0)
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise FormatError(f"bad PFM magic {magic!r} at byte 0")
    try:
        tok, offset = _read_pfm_token(data, offset)
        width = int(tok)
        tok, offset = _read_pfm_token(data, offset)
        height = int(tok)
        scale_at = offset
        tok, offset = _read_pfm_token(data, offset)
        scale = float(tok)
    except ValueError as exc:
        raise FormatError(f"malformed PFM header at byte {offset}: {exc}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"bad PFM dimensions {width}x{height} at byte {offset}")
    if scale == 0:
        raise FormatError(f"PFM scale must be nonzero at byte {scale_at}")
    count = width * height * channels
    payload = data[offset : offset + 4 * count]
    if len(payload) != 4 * count:
        raise FormatError(f"PFM payload truncated at byte {offset + len(payload)}")
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    if channels == 1:
        values = values.reshape(height, width)
    else:
        values = values.reshape(height, width, 3)
    # PFM rows run bottom-up on disk.
    return FloatMap(np.flipud(values).copy())


def write_pfm(values: np.ndarray | FloatMap, path: str | Path) -> None:
    """Write a float map as little-endian, bottom-up PFM (scale -1.0)."""
    if isinstance(values, FloatMap):
        values = values.values
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise FormatError(f"PFM supports 1 or 3 channels, got shape {arr.shape}")
    height, width = arr.shape[:2]
    header = magic + b"\n" + f"{width} {height}\n".encode() + b"-1.0\n"
    payload = np.flipud(arr).astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG as a uint8 array (H,W) or (H,W,3)."""
    with Image.open(path) as img:
        if img.format != "PNG":
            raise FormatError(f"{path}: not a PNG file")
        if img.mode not in ("L", "RGB"):
            raise FormatError(f"{path}: unsupported PNG variant (mode {img.mode})")
        return np.asarray(img, dtype=np.uint8).copy()


def write_png(values: np.ndarray, path: str | Path) -> None:
    """Write a uint8 array (H,W) or (H,W,3) as PNG with fixed settings."""
    arr = np.asarray(values)
    if arr.dtype != np.uint8:
        raise FormatError(f"write_png expects uint8 data, got {arr.dtype}")
    if arr.ndim == 2:
        mode = "L"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        mode = "RGB"
    else:
        raise FormatError(f"write_png supports 1 or 3 channels, got shape {arr.shape}")
    img = Image.fromarray(arr, mode=mode)
    img.save(str(path), format="PNG", compress_level=6, optimize=False)


def json_safe(obj):
    """Convert numpy scalars/arrays and non-finite floats to plain JSON values.

    Infinite metrics (e.g. PSNR of identical images) become the strings
    "inf"/"-inf" so reports stay valid strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        if np.isnan(val):
            return "nan"
        if np.isinf(val):
            return "inf" if val > 0 else "-inf"
        return val
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(obj, path: str | Path) -> None:
    """Write a JSON report: UTF-8, 2-space indent, lexicographically sorted keys."""
    text = json.dumps(json_safe(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
