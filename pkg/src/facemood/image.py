"""Image container and the resampling primitives used by the pipeline."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import IoError, ShapeError

# Rec.601 luma coefficients.
LUMA_R, LUMA_G, LUMA_B = 0.299, 0.587, 0.114


@dataclass(frozen=True)
class ImagePlane:
    """8-bit image, (H, W) grayscale or (H, W, 3) RGB, values in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise ShapeError(f"image must be (H, W) or (H, W, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError("zero-size image")
        object.__setattr__(self, "data", np.ascontiguousarray(arr, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3


def grayscale(img: ImagePlane) -> ImagePlane:
    """Rec.601 luma; grayscale input passes through unchanged."""
    if img.channels == 1:
        return img
    rgb = img.data.astype(np.float64)
    gray = LUMA_R * rgb[:, :, 0] + LUMA_G * rgb[:, :, 1] + LUMA_B * rgb[:, :, 2]
    return ImagePlane(np.rint(gray).astype(np.uint8))


def resize_bilinear(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a single (H, W) plane to (out_h, out_w), float32.

    Source coordinates follow the half-pixel-center convention
    src = (dst + 0.5) * in/out - 0.5, clamped at the borders, so an
    identity-size call reproduces the input exactly.
    """
    plane = np.asarray(plane, dtype=np.float32)
    if plane.ndim != 2:
        raise ShapeError(f"expected a single plane, got shape {plane.shape}")
    in_h, in_w = plane.shape
    if out_h < 1 or out_w < 1:
        raise ShapeError("output size must be positive")

    sy = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * in_h / out_h - 0.5, 0, in_h - 1)
    sx = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * in_w / out_w - 0.5, 0, in_w - 1)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (sy - y0).astype(np.float32)[:, None]
    fx = (sx - x0).astype(np.float32)[None, :]

    top = plane[y0[:, None], x0[None, :]] * (1 - fx) + plane[y0[:, None], x1[None, :]] * fx
    bot = plane[y1[:, None], x0[None, :]] * (1 - fx) + plane[y1[:, None], x1[None, :]] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)


def crop(img: ImagePlane, x: int, y: int, w: int, h: int) -> ImagePlane:
    if x < 0 or y < 0 or x + w > img.width or y + h > img.height or w < 1 or h < 1:
        raise ShapeError(f"crop ({x},{y},{w},{h}) outside {img.width}x{img.height} image")
    return ImagePlane(img.data[y : y + h, x : x + w])


def load_image(path) -> ImagePlane:
    """Load PNG/JPEG from disk as an ImagePlane (grayscale kept single-plane)."""
    try:
        with Image.open(path) as im:
            return _from_pil(im)
    except OSError as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc


def decode_image(payload: bytes) -> ImagePlane:
    """Decode an in-memory PNG/JPEG payload."""
    try:
        with Image.open(io.BytesIO(payload)) as im:
            return _from_pil(im)
    except OSError as exc:
        raise IoError(f"cannot decode image payload: {exc}") from exc


def save_image(img: ImagePlane, path) -> None:
    try:
        Image.fromarray(img.data).save(path)
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc


def _from_pil(im: Image.Image) -> ImagePlane:
    if im.mode in ("L", "I;16", "I"):
        return ImagePlane(np.asarray(im.convert("L")))
    return ImagePlane(np.asarray(im.convert("RGB")))
