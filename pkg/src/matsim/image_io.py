"""Image file plumbing: PNG / Radiance HDR codecs and the sRGB transfer.

All in-memory images are float arrays in linear light, shaped (h, w) or
(h, w, 3), RGB channel order. OpenCV does the byte-level encoding; channel
swaps to/from its BGR convention happen here and nowhere else.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import cv2
import numpy as np


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Linear [0,1] -> sRGB [0,1], elementwise."""
    c = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    """sRGB [0,1] -> linear [0,1], elementwise."""
    c = np.clip(np.asarray(encoded, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.04045, c / 12.92, np.power((c + 0.055) / 1.055, 2.4))


def tonemap(linear: np.ndarray) -> np.ndarray:
    """Exposure-clamp a linear RGB buffer and apply the sRGB transfer.

    Returns uint8. Monotone per channel: clamp to [0,1], sRGB-encode, round.
    """
    arr = np.asarray(linear, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("tonemap input must be finite and non-negative")
    return np.clip(np.rint(srgb_encode(arr) * 255.0), 0, 255).astype(np.uint8)


def _to_bgr(rgb: np.ndarray) -> np.ndarray:
    if rgb.ndim == 3 and rgb.shape[2] == 3:
        return np.ascontiguousarray(rgb[:, :, ::-1])
    return np.ascontiguousarray(rgb)


def write_png(path: str | Path, data: np.ndarray) -> None:
    """Write uint8 or uint16 image data (grayscale or RGB) as PNG."""
    data = np.asarray(data)
    if data.dtype not in (np.uint8, np.uint16):
        raise ValueError(f"write_png expects uint8/uint16, got {data.dtype}")
    ok = cv2.imwrite(str(path), _to_bgr(data))
    if not ok:
        raise IOError(f"PNG write failed: {path}")


def read_png(path: str | Path) -> np.ndarray:
    """Read a PNG as stored (uint8 or uint16), RGB order for color images."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"PNG read failed: {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        raw = raw[:, :, ::-1]
    return np.ascontiguousarray(raw)


def read_png_float(path: str | Path, srgb: bool = False) -> np.ndarray:
    """Read an 8/16-bit PNG into float64 [0,1], optionally sRGB-decoding it."""
    raw = read_png(path)
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    out = raw.astype(np.float64) / scale
    return srgb_decode(out) if srgb else out


def write_hdr(path: str | Path, radiance: np.ndarray) -> None:
    """Write a linear float RGB buffer as 32-bit Radiance (.hdr)."""
    arr = np.asarray(radiance, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("write_hdr expects an (h, w, 3) buffer")
    ok = cv2.imwrite(str(path), _to_bgr(arr))
    if not ok:
        raise IOError(f"HDR write failed: {path}")


def read_hdr(path: str | Path) -> np.ndarray:
    """Read a Radiance (.hdr) file into a float32 (h, w, 3) RGB buffer."""
    raw = cv2.imread(str(path), cv2.IMREAD_ANYDEPTH | cv2.IMREAD_ANYCOLOR)
    if raw is None:
        raise IOError(f"HDR read failed: {path}")
    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    return np.ascontiguousarray(raw[:, :, ::-1].astype(np.float32))


def write_json_atomic(path: str | Path, payload: dict) -> None:
    """Canonical JSON write (sorted keys, 2-space indent) via temp + rename."""
    path = Path(path)
    text = json.dumps(payload, sort_keys=True, indent=2)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text + "\n", encoding="utf-8")
    os.replace(tmp, path)
