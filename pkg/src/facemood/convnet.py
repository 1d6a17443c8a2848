"""Fixed-topology forward pass of the pretrained network with layer taps.

The network is the classic five-conv / two-fc ImageNet architecture; only the
layers up to the second fully-connected input are executed, since features
are tapped after conv5's pool (9216 values) or after fc6's activation
(4096 values). All arithmetic is float32; identical input bits produce
identical output bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ShapeError
from .image import ImagePlane, grayscale, resize_bilinear
from .tensorio import Tensor, WeightBundle

INPUT_SIZE = 227
LAYER5_DIM = 9216  # 256 channels * 6 * 6 after conv5's pool
LAYER6_DIM = 4096

# (name, stride, pad, groups, lrn after relu, pool after)
_CONV_PLAN = (
    ("conv1", 4, 0, 1, True, True),
    ("conv2", 1, 2, 2, True, True),
    ("conv3", 1, 1, 1, False, False),
    ("conv4", 1, 1, 2, False, False),
    ("conv5", 1, 1, 2, False, True),
)

LRN_SIZE = 5
LRN_ALPHA = 1e-4
LRN_BETA = 0.75
LRN_K = 1.0
POOL_K = 3
POOL_STRIDE = 2


class LayerTap(Enum):
    LAYER5 = 5
    LAYER6 = 6

    @property
    def dim(self) -> int:
        return LAYER5_DIM if self is LayerTap.LAYER5 else LAYER6_DIM


@dataclass(frozen=True)
class FeatureVector:
    tap: LayerTap
    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1)
        if arr.shape[0] != self.tap.dim:
            raise ShapeError(f"{self.tap.name} feature length {arr.shape[0]} != {self.tap.dim}")
        object.__setattr__(self, "values", arr)


def preprocess(img: ImagePlane, mean: Tensor) -> Tensor:
    """Grayscale, replicate to 3 channels, resize to 227x227, subtract mean."""
    gray = grayscale(img)
    plane = resize_bilinear(gray.data, INPUT_SIZE, INPUT_SIZE)
    stacked = np.repeat(plane[None, :, :], 3, axis=0)
    if mean.dims != (3, INPUT_SIZE, INPUT_SIZE):
        raise ShapeError(f"mean tensor dims {mean.dims} != (3, {INPUT_SIZE}, {INPUT_SIZE})")
    return Tensor("input", stacked - mean.data)


def conv_forward(
    input: Tensor, weight: Tensor, bias: Tensor, stride: int, pad: int, groups: int = 1
) -> Tensor:
    """Cross-correlation with zero padding; grouped channels run block-diagonal."""
    x = input.data
    w = weight.data
    b = bias.data
    if x.ndim != 3 or w.ndim != 4 or b.ndim != 1:
        raise ShapeError("conv expects input (C,H,W), weight (O,I,K,K), bias (O,)")
    c_in, in_h, in_w = x.shape
    c_out, c_in_g, kh, kw = w.shape
    if b.shape[0] != c_out:
        raise ShapeError(f"bias length {b.shape[0]} != output channels {c_out}")
    if c_in % groups or c_out % groups:
        raise ShapeError(f"channels ({c_in} in, {c_out} out) not divisible by {groups} groups")
    if c_in_g != c_in // groups:
        raise ShapeError(f"weight inner channels {c_in_g} != {c_in}//{groups}")
    out_h = (in_h + 2 * pad - kh) // stride + 1
    out_w = (in_w + 2 * pad - kw) // stride + 1
    if out_h < 1 or out_w < 1 or in_h + 2 * pad < kh or in_w + 2 * pad < kw:
        raise ShapeError(f"kernel {kh}x{kw} too large for padded input {in_h}x{in_w}")

    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.empty((c_out, out_h, out_w), dtype=np.float32)
    og = c_out // groups
    ig = c_in // groups
    for g in range(groups):
        cols = _im2col(x[g * ig : (g + 1) * ig], kh, kw, stride, out_h, out_w)
        wg = w[g * og : (g + 1) * og].reshape(og, -1)
        out[g * og : (g + 1) * og] = (wg @ cols).reshape(og, out_h, out_w)
    out += b[:, None, None]
    return Tensor("conv", out)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    c, _, _ = x.shape
    sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(c, kh, kw, out_h, out_w),
        strides=(sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return windows.reshape(c * kh * kw, out_h * out_w)


def relu(t: Tensor) -> Tensor:
    return Tensor(t.name, np.maximum(t.data, np.float32(0)))


def max_pool(t: Tensor, k: int = POOL_K, stride: int = POOL_STRIDE) -> Tensor:
    """Per-channel sliding max, no padding (overlapping when stride < k)."""
    x = t.data
    if x.ndim != 3:
        raise ShapeError("max_pool expects (C,H,W)")
    c, in_h, in_w = x.shape
    if in_h < k or in_w < k:
        raise ShapeError(f"pool window {k} larger than input {in_h}x{in_w}")
    out_h = (in_h - k) // stride + 1
    out_w = (in_w - k) // stride + 1
    sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(c, out_h, out_w, k, k),
        strides=(sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )
    return Tensor(t.name, windows.max(axis=(3, 4)))


def lrn(
    t: Tensor,
    n: int = LRN_SIZE,
    alpha: float = LRN_ALPHA,
    beta: float = LRN_BETA,
    k: float = LRN_K,
) -> Tensor:
    """Cross-channel response normalization, window clamped at channel edges:

        b[c] = a[c] / (k + (alpha/n) * sum_{c' in window(c, n)} a[c']^2) ^ beta
    """
    x = t.data
    if x.ndim != 3:
        raise ShapeError("lrn expects (C,H,W)")
    c = x.shape[0]
    sq = (x * x).astype(np.float32)
    csum = np.concatenate([np.zeros((1,) + x.shape[1:], np.float32), np.cumsum(sq, axis=0)])
    lo = np.maximum(np.arange(c) - (n - 1) // 2, 0)
    hi = np.minimum(np.arange(c) + n // 2, c - 1)
    windowed = csum[hi + 1] - csum[lo]
    scale = (k + (alpha / n) * windowed) ** beta
    return Tensor(t.name, (x / scale).astype(np.float32))


def fc_forward(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map weight @ flatten(input) + bias."""
    x = input.data.reshape(-1)
    w = weight.data
    b = bias.data
    if w.ndim != 2 or x.shape[0] != w.shape[1] or b.shape[0] != w.shape[0]:
        raise ShapeError(
            f"fc shapes inconsistent: input {x.shape[0]}, weight {w.shape}, bias {b.shape}"
        )
    return Tensor("fc", w @ x + b)


def forward_taps(x: Tensor, bundle: WeightBundle) -> dict[LayerTap, np.ndarray]:
    """Run the conv stack and fc6 on a preprocessed input; return both taps."""
    t = x
    for name, stride, pad, groups, use_lrn, use_pool in _CONV_PLAN:
        t = conv_forward(t, bundle[f"{name}.weight"], bundle[f"{name}.bias"], stride, pad, groups)
        t = relu(t)
        if use_lrn:
            t = lrn(t)
        if use_pool:
            t = max_pool(t)
    layer5 = t.data.reshape(-1)
    t = fc_forward(t, bundle["fc6.weight"], bundle["fc6.bias"])
    t = relu(t)
    return {LayerTap.LAYER5: layer5, LayerTap.LAYER6: t.data}


def extract_features(img: ImagePlane, bundle: WeightBundle, tap: LayerTap) -> FeatureVector:
    x = preprocess(img, bundle["mean"])
    return FeatureVector(tap, forward_taps(x, bundle)[tap])


def dry_run_shapes(bundle: WeightBundle) -> dict[LayerTap, int]:
    """Push a zero image through the network and report tap lengths."""
    zero = ImagePlane(np.zeros((INPUT_SIZE, INPUT_SIZE), dtype=np.uint8))
    taps = forward_taps(preprocess(zero, bundle["mean"]), bundle)
    return {tap: arr.shape[0] for tap, arr in taps.items()}
