"""Deterministic image preprocessing: resize -> center crop -> normalize -> patchify."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError

RESIZE = 256
CROP = 224


@dataclass(frozen=True)
class NormalizationSpec:
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)


IMAGENET = NormalizationSpec()


class ImageDecodeError(InputError):
    pass


def load_image(path) -> np.ndarray:
    """Decode a raster file to an (H, W, 3) uint8 array; grayscale is replicated, alpha dropped."""
    try:
        with Image.open(Path(path)) as im:
            rgb = im.convert("RGB")
            return np.asarray(rgb, dtype=np.uint8).copy()
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from exc


def to_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    elif img.ndim == 3 and img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    elif img.ndim == 3 and img.shape[2] == 4:
        img = img[:, :, :3]
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageDecodeError(f"expected an RGB image, got array of shape {img.shape}")
    return img


def _bilinear_weights(in_size: int, out_size: int):
    # half-pixel centers, edge-clamped
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def resize(img: np.ndarray, size: int = RESIZE) -> np.ndarray:
    """Bilinear resize of an (H, W, 3) image to (size, size, 3) floats in [0, 1].

    Aspect ratio is not preserved.  uint8 input is scaled by 1/255 first.
    """
    img = to_rgb(img)
    h, w = img.shape[:2]
    if h == 0 or w == 0:
        raise ImageDecodeError("cannot resize a zero-sized image")
    x = img.astype(np.float64)
    if img.dtype == np.uint8:
        x /= 255.0
    r0, r1, fr = _bilinear_weights(h, size)
    c0, c1, fc = _bilinear_weights(w, size)
    rows = x[r0] * (1 - fr)[:, None, None] + x[r1] * fr[:, None, None]
    out = rows[:, c0] * (1 - fc)[None, :, None] + rows[:, c1] * fc[None, :, None]
    return out


def center_crop(img: np.ndarray, size: int = CROP) -> np.ndarray:
    h, w = img.shape[:2]
    if size > h or size > w:
        raise ValueError(f"crop size {size} exceeds image size {h}x{w}")
    top = (h - size) // 2
    left = (w - size) // 2
    return img[top : top + size, left : left + size]


def normalize(img: np.ndarray, spec: NormalizationSpec = IMAGENET) -> np.ndarray:
    """(H, W, 3) floats -> channels-first (3, H, W) standardized float32."""
    mean = np.asarray(spec.mean, dtype=np.float64)
    std = np.asarray(spec.std, dtype=np.float64)
    if (std <= 0).any():
        raise ValueError(f"normalization std must be positive, got {spec.std}")
    out = (np.asarray(img, dtype=np.float64) - mean) / std
    return out.transpose(2, 0, 1).astype(np.float32)


def denormalize(img: np.ndarray, spec: NormalizationSpec = IMAGENET) -> np.ndarray:
    mean = np.asarray(spec.mean)[:, None, None]
    std = np.asarray(spec.std)[:, None, None]
    return (np.asarray(img, dtype=np.float64) * std + mean).transpose(1, 2, 0)


def preprocess(img: np.ndarray, resize_to: int = RESIZE, crop: int = CROP, spec: NormalizationSpec = IMAGENET):
    """Full chain for one decoded image; output is (3, crop, crop) float32."""
    return normalize(center_crop(resize(img, resize_to), crop), spec)


def patchify(img: np.ndarray, patch: int = 16) -> np.ndarray:
    """(..., 3, H, W) -> (..., N, P*P*3); patches in row-major grid order, each flattened as (row, col, channel)."""
    *lead, c, h, w = img.shape
    if h % patch or w % patch:
        raise ValueError(f"patch size {patch} does not divide image size {h}x{w}")
    gh, gw = h // patch, w // patch
    x = img.reshape(*lead, c, gh, patch, gw, patch)
    k = len(lead)
    x = x.transpose(*range(k), k + 1, k + 3, k + 2, k + 4, k)
    return x.reshape(*lead, gh * gw, patch * patch * c)


def unpatchify(patches: np.ndarray, patch: int, height: int, width: int, channels: int = 3) -> np.ndarray:
    *lead, n, dim = patches.shape
    gh, gw = height // patch, width // patch
    if n != gh * gw or dim != patch * patch * channels:
        raise ValueError(f"patch grid {patches.shape[-2:]} does not match a {height}x{width} image with P={patch}")
    x = patches.reshape(*lead, gh, gw, patch, patch, channels)
    k = len(lead)
    x = x.transpose(*range(k), k + 4, k, k + 2, k + 1, k + 3)
    return x.reshape(*lead, channels, height, width)


def num_patches(image_size: int, patch: int) -> int:
    return (image_size // patch) ** 2
