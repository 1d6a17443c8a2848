"""Cascade face detector: OpenCV-schema XML parsing, integral images,
multi-scale window scanning with variance normalization, neighbor grouping.

Windows are scanned at the original image resolution with the Haar features
rescaled per scale (step 1 pixel at base scale, proportional above). A window
survives when every boosted stage's tree-sum reaches the stage threshold;
feature values are compared against node thresholds multiplied by the
window's pixel standard deviation, so flat windows (non-positive variance)
are rejected outright.

Tilted (45-degree) rectangles follow the rotated summed-area-table scheme:
the table T holds pyramid sums T[y][x] = sum of pixels (px, py) with py < y
and |px - x| <= y - 1 - py, and the rect anchored at (x, y) spanning w steps
down-right and h steps down-left covers the 2*w*h pixels with
0 <= (px-x)+(py-y) <= 2w-1 and 0 <= (py-y)-(px-x) <= 2h-1, retrieved as
T[y][x] + T[y+w+h][x+w-h] - T[y+w][x+w] - T[y+h][x-h].
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParseError, ShapeError, UnsupportedCascadeError
from .image import ImagePlane, crop, grayscale

GROUP_EPS = 0.2


@dataclass(frozen=True)
class HaarFeature:
    """Up to 3 weighted rectangles relative to the detector base window."""

    rects: tuple[tuple[int, int, int, int, float], ...]
    tilted: bool = False


@dataclass(frozen=True)
class TreeNode:
    feature: int
    threshold: float
    # exactly one of (*_val, *_child) is set per side; children index nodes
    left_val: float | None = None
    left_child: int | None = None
    right_val: float | None = None
    right_child: int | None = None


@dataclass(frozen=True)
class DecisionTree:
    nodes: tuple[TreeNode, ...]


@dataclass(frozen=True)
class CascadeStage:
    threshold: float
    trees: tuple[DecisionTree, ...]


@dataclass(frozen=True)
class Cascade:
    base_width: int
    base_height: int
    features: tuple[HaarFeature, ...]
    stages: tuple[CascadeStage, ...]


@dataclass(frozen=True)
class FaceBox:
    """Square region located in image coordinates."""

    x: int
    y: int
    side: int


@dataclass(frozen=True)
class DetectParams:
    scale_factor: float = 1.3
    min_neighbors: int = 3
    min_size: int = 0

    def __post_init__(self):
        if self.scale_factor <= 1.0:
            raise ShapeError("scale_factor must be > 1")
        if self.min_neighbors < 0:
            raise ShapeError("min_neighbors must be >= 0")


@dataclass(frozen=True)
class IntegralImages:
    ii: np.ndarray
    ii2: np.ndarray
    tilted: np.ndarray


# ---------------------------------------------------------------------------
# cascade XML parsing (old "opencv-haar-classifier" and new "cascade" schemas)


def parse_cascade(path) -> Cascade:
    try:
        tree = ET.parse(path)
    except (ET.ParseError, OSError) as exc:
        raise ParseError(f"cannot parse cascade XML {path}: {exc}") from exc
    root = tree.getroot()
    if root.tag != "opencv_storage":
        raise ParseError(f"unexpected root element <{root.tag}>")
    for child in root:
        if child.get("type_id") == "opencv-haar-classifier":
            return _parse_old(child)
        if child.tag == "cascade" or child.find("featureType") is not None:
            return _parse_new(child)
    raise ParseError("no cascade element found")


def _req(elem: ET.Element, tag: str) -> ET.Element:
    found = elem.find(tag)
    if found is None:
        raise ParseError(f"missing <{tag}> under <{elem.tag}>")
    return found


def _text(elem: ET.Element, tag: str) -> str:
    found = _req(elem, tag)
    return (found.text or "").strip()


def _parse_rects(feature_elem: ET.Element, base_w: int, base_h: int) -> HaarFeature:
    rects = []
    for r in _req(feature_elem, "rects"):
        parts = (r.text or "").split()
        if len(parts) != 5:
            raise ParseError(f"rect needs 5 fields, got {r.text!r}")
        x, y, w, h = (int(p) for p in parts[:4])
        rects.append((x, y, w, h, float(parts[4])))
    if not 2 <= len(rects) <= 3:
        raise ParseError(f"feature must have 2 or 3 rects, got {len(rects)}")
    tilted_elem = feature_elem.find("tilted")
    tilted = tilted_elem is not None and (tilted_elem.text or "0").strip() == "1"
    for x, y, w, h, _ in rects:
        if w < 1 or h < 1 or y < 0:
            raise ParseError(f"degenerate rect ({x},{y},{w},{h})")
        if tilted:
            inside = x - h >= 0 and x + w <= base_w and y + w + h <= base_h
        else:
            inside = x >= 0 and x + w <= base_w and y + h <= base_h
        if not inside:
            raise ParseError(f"rect ({x},{y},{w},{h}) outside {base_w}x{base_h} base window")
    weights = [r[4] for r in rects]
    if not (any(w < 0 for w in weights) and any(w > 0 for w in weights)):
        raise ParseError("feature weights must mix positive and negative terms")
    return HaarFeature(tuple(rects), tilted)


def _parse_old(elem: ET.Element) -> Cascade:
    size = _text(elem, "size").split()
    if len(size) != 2:
        raise ParseError(f"bad <size>: {size}")
    base_w, base_h = int(size[0]), int(size[1])
    features: list[HaarFeature] = []
    stages: list[CascadeStage] = []
    for stage_elem in _req(elem, "stages"):
        trees: list[DecisionTree] = []
        for tree_elem in _req(stage_elem, "trees"):
            nodes: list[TreeNode] = []
            node_elems = list(tree_elem)
            for node_elem in node_elems:
                feature = _parse_rects(_req(node_elem, "feature"), base_w, base_h)
                features.append(feature)
                kwargs: dict = {"feature": len(features) - 1,
                                "threshold": float(_text(node_elem, "threshold"))}
                for side in ("left", "right"):
                    val = node_elem.find(f"{side}_val")
                    child = node_elem.find(f"{side}_node")
                    if (val is None) == (child is None):
                        raise ParseError(f"node needs exactly one of {side}_val/{side}_node")
                    if val is not None:
                        kwargs[f"{side}_val"] = float((val.text or "").strip())
                    else:
                        idx = int((child.text or "").strip())
                        if not 0 < idx < len(node_elems):
                            raise ParseError(f"{side}_node index {idx} out of range")
                        kwargs[f"{side}_child"] = idx
                nodes.append(TreeNode(**kwargs))
            trees.append(DecisionTree(tuple(nodes)))
        stages.append(CascadeStage(float(_text(stage_elem, "stage_threshold")), tuple(trees)))
    if not stages:
        raise ParseError("cascade has no stages")
    return Cascade(base_w, base_h, tuple(features), tuple(stages))


def _parse_new(elem: ET.Element) -> Cascade:
    stage_type = _text(elem, "stageType")
    if stage_type != "BOOST":
        raise UnsupportedCascadeError(f"stageType {stage_type!r} not supported")
    feature_type = _text(elem, "featureType")
    if feature_type != "HAAR":
        raise UnsupportedCascadeError(f"featureType {feature_type!r} not supported")
    params = elem.find("featureParams")
    if params is not None:
        cat = params.find("maxCatCount")
        if cat is not None and (cat.text or "0").strip() not in ("", "0"):
            raise UnsupportedCascadeError("categorical features not supported")
    base_w = int(_text(elem, "width"))
    base_h = int(_text(elem, "height"))
    features = tuple(
        _parse_rects(f, base_w, base_h) for f in _req(elem, "features")
    )
    stages: list[CascadeStage] = []
    for stage_elem in _req(elem, "stages"):
        trees: list[DecisionTree] = []
        for weak in _req(stage_elem, "weakClassifiers"):
            raw_nodes = _text(weak, "internalNodes").split()
            leaves = [float(v) for v in _text(weak, "leafValues").split()]
            if len(raw_nodes) % 4:
                raise ParseError("internalNodes length must be a multiple of 4")
            nodes: list[TreeNode] = []
            n_internal = len(raw_nodes) // 4
            for i in range(n_internal):
                left_i, right_i = int(raw_nodes[4 * i]), int(raw_nodes[4 * i + 1])
                feat_idx = int(raw_nodes[4 * i + 2])
                thr = float(raw_nodes[4 * i + 3])
                if not 0 <= feat_idx < len(features):
                    raise ParseError(f"feature index {feat_idx} out of range")
                # child encoding: positive = internal node index, <= 0 = leaf -enc
                kwargs: dict = {"feature": feat_idx, "threshold": thr}
                for side, enc in (("left", left_i), ("right", right_i)):
                    if enc <= 0:
                        leaf = -enc
                        if leaf >= len(leaves):
                            raise ParseError(f"leaf index {leaf} out of range")
                        kwargs[f"{side}_val"] = leaves[leaf]
                    else:
                        if enc >= n_internal:
                            raise ParseError(f"child index {enc} out of range")
                        kwargs[f"{side}_child"] = enc
                nodes.append(TreeNode(**kwargs))
            trees.append(DecisionTree(tuple(nodes)))
        stages.append(CascadeStage(float(_text(stage_elem, "stageThreshold")), tuple(trees)))
    if not stages:
        raise ParseError("cascade has no stages")
    return Cascade(base_w, base_h, features, tuple(stages))


# ---------------------------------------------------------------------------
# integral images


def integral_images(img: ImagePlane) -> IntegralImages:
    """Summed-area tables: plain, squared, and rotated, all (H+1, W+1) int64."""
    gray = grayscale(img)
    px = gray.data.astype(np.int64)
    h, w = px.shape
    ii = np.zeros((h + 1, w + 1), np.int64)
    ii[1:, 1:] = px.cumsum(axis=0).cumsum(axis=1)
    ii2 = np.zeros((h + 1, w + 1), np.int64)
    ii2[1:, 1:] = (px * px).cumsum(axis=0).cumsum(axis=1)

    # rotated table over padded columns; recurrence per derivation in module doc
    pad = h + 2
    wide = np.zeros((h + 1, w + 2 * pad), np.int64)
    src = np.zeros((h + 1, w + 2 * pad), np.int64)
    src[:h, pad : pad + w] = px
    for y in range(1, h + 1):
        prev = wide[y - 1]
        wide[y, 1:-1] = prev[:-2] + prev[2:] + src[y - 1, 1:-1]
        if y >= 2:
            wide[y, 1:-1] -= wide[y - 2, 1:-1]
            wide[y, 1:-1] += src[y - 2, 1:-1]
    tilted = np.ascontiguousarray(wide[:, pad : pad + w + 1])
    return IntegralImages(ii, ii2, tilted)


def rect_sum(ii: np.ndarray, x: int, y: int, w: int, h: int):
    return ii[y + h, x + w] - ii[y, x + w] - ii[y + h, x] + ii[y, x]


def tilted_rect_sum(tilted: np.ndarray, x: int, y: int, w: int, h: int):
    return tilted[y, x] + tilted[y + w + h, x + w - h] - tilted[y + w, x + w] - tilted[y + h, x - h]


# ---------------------------------------------------------------------------
# multi-scale scanning


@dataclass
class _ScaledFeature:
    tilted: bool
    offsets: np.ndarray  # flat table offsets relative to the window origin
    coeffs: np.ndarray   # corner signs folded with balanced rect weights
    min_cx: int = 0      # corner bounds, for keeping gathers inside the table
    max_cx: int = 0
    max_cy: int = 0


def _iround(v: float) -> int:
    return int(np.rint(v))


def _norm_area(cascade: Cascade, scale: float, win: int) -> float:
    inset = _iround(scale)
    ew = min(_iround((cascade.base_width - 2) * scale), win - inset)
    eh = min(_iround((cascade.base_height - 2) * scale), win - inset)
    return float(ew * eh)


def _scale_feature(f: HaarFeature, scale: float, stride: int, inv_norm_area: float) -> _ScaledFeature:
    offsets: list[int] = []
    coeffs: list[float] = []
    scaled = []
    for x, y, w, h, weight in f.rects:
        sx, sy = _iround(x * scale), _iround(y * scale)
        sw, sh = max(1, _iround(w * scale)), max(1, _iround(h * scale))
        scaled.append((sx, sy, sw, sh, weight))
    # rebalance the first rect's weight so the weighted pixel counts cancel,
    # keeping flat regions at exactly zero response despite rounding
    ratio = inv_norm_area * (0.5 if f.tilted else 1.0)
    areas = [2 * sw * sh if f.tilted else sw * sh for (_, _, sw, sh, _) in scaled]
    tail = sum(scaled[k][4] * ratio * areas[k] for k in range(1, len(scaled)))
    weights = [-tail / areas[0]] + [scaled[k][4] * ratio for k in range(1, len(scaled))]
    min_cx, max_cx, max_cy = 0, 0, 0
    for (sx, sy, sw, sh, _), w_eff in zip(scaled, weights):
        if f.tilted:
            corners = (
                (sy, sx, 1.0),
                (sy + sw + sh, sx + sw - sh, 1.0),
                (sy + sw, sx + sw, -1.0),
                (sy + sh, sx - sh, -1.0),
            )
        else:
            corners = (
                (sy + sh, sx + sw, 1.0),
                (sy, sx + sw, -1.0),
                (sy + sh, sx, -1.0),
                (sy, sx, 1.0),
            )
        for cy, cx, sign in corners:
            offsets.append(cy * stride + cx)
            coeffs.append(sign * w_eff)
            min_cx = min(min_cx, cx)
            max_cx = max(max_cx, cx)
            max_cy = max(max_cy, cy)
    return _ScaledFeature(
        f.tilted, np.asarray(offsets, np.int64), np.asarray(coeffs, np.float64),
        min_cx, max_cx, max_cy,
    )


def _eval_tree(
    tree: DecisionTree,
    feats: Sequence[_ScaledFeature],
    ii_flat: np.ndarray,
    tilted_flat: np.ndarray,
    base: np.ndarray,
    nf: np.ndarray,
) -> np.ndarray:
    out = np.zeros(base.shape[0], np.float64)

    def feature_value(node: TreeNode, idx: np.ndarray) -> np.ndarray:
        sf = feats[node.feature]
        table = tilted_flat if sf.tilted else ii_flat
        gathered = table[base[idx][:, None] + sf.offsets[None, :]]
        return gathered.astype(np.float64) @ sf.coeffs

    def walk(node_idx: int, idx: np.ndarray) -> None:
        node = tree.nodes[node_idx]
        go_right = feature_value(node, idx) >= node.threshold * nf[idx]
        for mask, val, child in (
            (~go_right, node.left_val, node.left_child),
            (go_right, node.right_val, node.right_child),
        ):
            sel = idx[mask]
            if sel.size == 0:
                continue
            if child is None:
                out[sel] += val
            else:
                walk(child, sel)

    walk(0, np.arange(base.shape[0]))
    return out


def detect(img: ImagePlane, cascade: Cascade, params: DetectParams) -> list[FaceBox]:
    """Multi-scale scan; returns grouped boxes sorted by descending side."""
    gray = grayscale(img)
    h, w = gray.data.shape
    tables = integral_images(gray)
    stride = w + 1
    ii_flat = tables.ii.reshape(-1)
    ii2_flat = tables.ii2.reshape(-1)
    tilted_flat = tables.tilted.reshape(-1)
    min_size = max(params.min_size, cascade.base_width)

    raw: list[tuple[int, int, int]] = []
    scale = 1.0
    while True:
        win = _iround(cascade.base_width * scale)
        if win > min(w, h):
            break
        if win >= min_size:
            raw.extend(_scan_scale(cascade, scale, win, w, h, stride, ii_flat, ii2_flat, tilted_flat))
        scale *= params.scale_factor

    boxes = group_detections(raw, params.min_neighbors)
    boxes = [b for b in boxes if b.side >= min_size]
    boxes.sort(key=lambda b: (-b.side, b.y, b.x))
    return boxes


def _scan_scale(cascade, scale, win, w, h, stride, ii_flat, ii2_flat, tilted_flat):
    step = max(1, _iround(scale))
    feats = [_scale_feature(f, scale, stride, 1.0 / _norm_area(cascade, scale, win)) for f in cascade.features]
    # rounding can push scaled rect corners a pixel past the nominal window;
    # trim the scan range so every gather stays inside the tables
    x_lo = max(0, -min(sf.min_cx for sf in feats))
    x_hi = w - max(win, max(sf.max_cx for sf in feats))
    y_hi = h - max(win, max(sf.max_cy for sf in feats))
    xs = np.arange(x_lo, x_hi + 1, step, np.int64)
    ys = np.arange(0, y_hi + 1, step, np.int64)
    if xs.size == 0 or ys.size == 0:
        return []
    posx = np.repeat(xs[None, :], ys.size, axis=0).reshape(-1)
    posy = np.repeat(ys[:, None], xs.size, axis=1).reshape(-1)
    base = posy * stride + posx

    # variance normalization over the window inset by one base pixel
    inset = _iround(scale)
    ew = min(_iround((cascade.base_width - 2) * scale), win - inset)
    eh = min(_iround((cascade.base_height - 2) * scale), win - inset)
    area = _norm_area(cascade, scale, win)
    corners = [
        ((inset + eh) * stride + inset + ew, 1.0),
        (inset * stride + inset + ew, -1.0),
        ((inset + eh) * stride + inset, -1.0),
        (inset * stride + inset, 1.0),
    ]
    s1 = sum(sign * ii_flat[base + off] for off, sign in corners)
    s2 = sum(sign * ii2_flat[base + off] for off, sign in corners)
    mean = s1 / area
    variance = s2 / area - mean * mean
    alive = variance > 0
    base = base[alive]
    posx, posy = posx[alive], posy[alive]
    nf = np.sqrt(variance[alive])

    for stage in cascade.stages:
        if base.size == 0:
            return []
        total = np.zeros(base.shape[0], np.float64)
        for tree in stage.trees:
            total += _eval_tree(tree, feats, ii_flat, tilted_flat, base, nf)
        keep = total >= stage.threshold
        base, posx, posy, nf = base[keep], posx[keep], posy[keep], nf[keep]
    return [(int(x), int(y), win) for x, y in zip(posx, posy)]


def group_detections(raw: Sequence[tuple[int, int, int]], min_neighbors: int) -> list[FaceBox]:
    """Cluster overlapping raw windows; emit averaged boxes for clusters with
    at least min_neighbors members."""
    n = len(raw)
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    if n:
        arr = np.asarray(raw, np.float64)
        x, y, s = arr[:, 0], arr[:, 1], arr[:, 2]
        for i in range(n - 1):
            delta = GROUP_EPS * np.minimum(s[i], s[i + 1 :])
            similar = (
                (np.abs(x[i] - x[i + 1 :]) <= delta)
                & (np.abs(y[i] - y[i + 1 :]) <= delta)
                & (np.abs(x[i] + s[i] - x[i + 1 :] - s[i + 1 :]) <= delta)
                & (np.abs(y[i] + s[i] - y[i + 1 :] - s[i + 1 :]) <= delta)
            )
            for j in np.nonzero(similar)[0] + i + 1:
                ra, rb = find(i), find(int(j))
                if ra != rb:
                    parent[ra] = rb

    clusters: dict[int, list[tuple[int, int, int]]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(raw[i])
    boxes = []
    for members in clusters.values():
        if len(members) < min_neighbors:
            continue
        arr = np.asarray(members, np.float64)
        x, y, side = (int(np.rint(v)) for v in arr.mean(axis=0))
        boxes.append(FaceBox(x, y, side))
    return boxes


def crop_largest_face(img: ImagePlane, cascade: Cascade, params: DetectParams) -> ImagePlane | None:
    boxes = detect(img, cascade, params)
    if not boxes:
        return None
    box = boxes[0]
    side = min(box.side, img.width - box.x, img.height - box.y)
    return crop(img, box.x, box.y, side, side)
