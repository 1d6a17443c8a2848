#!/usr/bin/env python3
"""Train the bundled frontal-face Haar cascade and write it as OpenCV-schema XML.

Development tool, not part of the installed package. Positives come from the
100 LFW face crops bundled with scikit-image (plus mirrored and shifted
variants); negatives are face-free texture photos, with hard negatives mined
between stages by running the real multi-scale detector on them, so training
sees exactly the window population the runtime scan produces. Feature values
go through the same code path the runtime detector uses at scale 1.0, so
learned thresholds transfer exactly.

Usage: python scripts/train_cascade.py [output.xml]
Fully seeded; regenerating produces identical bytes.
"""

from __future__ import annotations

import sys
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
from skimage import data as skdata

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from facemood.facedetect import (  # noqa: E402
    Cascade,
    CascadeStage,
    DecisionTree,
    HaarFeature,
    TreeNode,
    _scale_feature,
    _scan_scale,
    integral_images,
)
from facemood.image import ImagePlane, resize_bilinear  # noqa: E402

BASE = 20
NORM_AREA = float((BASE - 2) * (BASE - 2))
SEED = 20140404
TARGET_NEG = 3000
MAX_STAGES = 18
MAX_WEAK = 80
STAGE_MAX_FPR = 0.35
STAGE_MIN_TPR = 0.997
MINE_SCALE_FACTOR = 1.15
DEFAULT_OUT = Path(__file__).resolve().parent.parent / "src/facemood/data/cascade_frontal.xml"


# --------------------------------------------------------------------------- features


def generate_features() -> list[HaarFeature]:
    feats: list[HaarFeature] = []
    for x in range(0, BASE, 2):
        for y in range(0, BASE, 2):
            for w in range(2, BASE - x + 1):
                for h in range(2, BASE - y + 1):
                    # two-rect edges: left|right and top/bottom halves
                    if w % 2 == 0:
                        feats.append(HaarFeature(((x, y, w, h, -1.0), (x, y, w // 2, h, 2.0))))
                    if h % 2 == 0:
                        feats.append(HaarFeature(((x, y, w, h, -1.0), (x, y, w, h // 2, 2.0))))
                    # three-rect lines
                    if w % 3 == 0:
                        feats.append(
                            HaarFeature(((x, y, w, h, -1.0), (x + w // 3, y, w // 3, h, 3.0)))
                        )
                    if h % 3 == 0:
                        feats.append(
                            HaarFeature(((x, y, w, h, -1.0), (x, y + h // 3, w, h // 3, 3.0)))
                        )
                    # center-surround
                    if w % 3 == 0 and h % 3 == 0 and w >= 6 and h >= 6:
                        feats.append(
                            HaarFeature(
                                ((x, y, w, h, -1.0), (x + w // 3, y + h // 3, w // 3, h // 3, 9.0))
                            )
                        )
    return feats


def corner_matrix(feats: list[HaarFeature]) -> np.ndarray:
    """(441, n_feat) matrix mapping a flattened 21x21 window integral image
    to every feature's raw weighted-rect sum."""
    mat = np.zeros(((BASE + 1) * (BASE + 1), len(feats)), np.float32)
    for j, f in enumerate(feats):
        sf = _scale_feature(f, 1.0, BASE + 1, 1.0 / NORM_AREA)
        for off, coeff in zip(sf.offsets, sf.coeffs):
            mat[off, j] += coeff
    return mat


def window_tables(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flattened integral images and per-window stddev for (N, 20, 20) uint8."""
    px = windows.astype(np.int64)
    n = px.shape[0]
    ii = np.zeros((n, BASE + 1, BASE + 1), np.int64)
    ii[:, 1:, 1:] = px.cumsum(axis=1).cumsum(axis=2)
    ii2 = np.zeros_like(ii)
    ii2[:, 1:, 1:] = (px * px).cumsum(axis=1).cumsum(axis=2)

    def boxsum(t):
        return t[:, 19, 19] - t[:, 1, 19] - t[:, 19, 1] + t[:, 1, 1]

    mean = boxsum(ii) / NORM_AREA
    var = boxsum(ii2) / NORM_AREA - mean * mean
    return ii.reshape(n, -1).astype(np.float32), np.sqrt(np.maximum(var, 0))


def feature_values(windows: np.ndarray, cmat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Variance-normalized feature values; rows with zero variance are flagged."""
    flat, std = window_tables(windows)
    ok = std > 0
    std_safe = np.where(ok, std, 1.0)
    vals = np.empty((windows.shape[0], cmat.shape[1]), np.float32)
    chunk = 1024
    for i in range(0, flat.shape[0], chunk):
        vals[i : i + chunk] = (flat[i : i + chunk] @ cmat) / std_safe[i : i + chunk, None]
    return vals, ok


# --------------------------------------------------------------------------- data


def positive_windows() -> np.ndarray:
    lfw = skdata.lfw_subset()
    faces = (lfw[:100] * 255).clip(0, 255)
    out = []
    offsets = [(0, 0, 25), (0, 2, 23), (2, 0, 23), (2, 2, 23), (1, 1, 23)]
    for face in faces:
        for ox, oy, side in offsets:
            patch = face[oy : oy + side, ox : ox + side]
            win = np.rint(resize_bilinear(patch, BASE, BASE)).clip(0, 255).astype(np.uint8)
            out.append(win)
            out.append(win[:, ::-1])
    return np.stack(out)


def negative_sources(rng: np.random.Generator) -> list[np.ndarray]:
    imgs = []
    for name in ("coins", "moon", "page", "text", "brick", "grass", "gravel"):
        img = getattr(skdata, name, None)
        if img is None:
            continue
        arr = img()
        if arr.ndim == 3:
            arr = arr.mean(axis=2)
        imgs.append(arr.astype(np.float64))
    imgs.append(np.asarray(skdata.checkerboard(), np.float64))
    # smooth random fields add low-frequency structure the textures lack
    for _ in range(8):
        small = rng.uniform(0, 255, (rng.integers(6, 24), rng.integers(6, 24)))
        imgs.append(resize_bilinear(small, 300, 300).astype(np.float64))
    lfw = skdata.lfw_subset()
    for i in range(100, 200):
        imgs.append((lfw[i] * 255).clip(0, 255))
    return imgs


def random_windows(sources, rng: np.random.Generator, count: int) -> np.ndarray:
    out: list[np.ndarray] = []
    while len(out) < count:
        img = sources[rng.integers(len(sources))]
        h, w = img.shape
        if min(h, w) < BASE:
            continue
        if rng.random() < 0.5:
            side = BASE  # sharp patches exactly at the scan's base scale
        else:
            side = int(rng.integers(BASE, min(h, w) + 1))
        y = int(rng.integers(0, h - side + 1))
        x = int(rng.integers(0, w - side + 1))
        patch = img[y : y + side, x : x + side]
        if side != BASE:
            patch = resize_bilinear(patch, BASE, BASE)
        win = np.rint(patch).clip(0, 255).astype(np.uint8)
        if win.std() > 1e-3:
            out.append(win)
    return np.stack(out)


# --------------------------------------------------------------------------- boosting


class Stump:
    __slots__ = ("feature", "threshold", "left", "right")

    def __init__(self, feature: int, threshold: float, left: float, right: float):
        self.feature = feature
        self.threshold = threshold
        self.left = left  # value when f < threshold
        self.right = right


def best_stump(vals: np.ndarray, order: np.ndarray, labels: np.ndarray, weights: np.ndarray):
    """Exhaustive weighted-error stump search over all features.

    vals: (N, F) values; order: (F, N) per-feature ascending index; labels +-1.
    """
    n = vals.shape[0]
    w_pos = np.where(labels > 0, weights, 0.0).astype(np.float64)
    w_neg = np.where(labels < 0, weights, 0.0).astype(np.float64)
    total_neg = w_neg.sum()
    best = (1.0, -1, 0.0, 1)  # error, feature, threshold, polarity
    chunk = 512
    for f0 in range(0, vals.shape[1], chunk):
        idx = order[f0 : f0 + chunk]
        cpos = w_pos[idx].cumsum(axis=1)
        cneg = w_neg[idx].cumsum(axis=1)
        # error when predicting +1 strictly right of cut k
        err_plus = cpos + (total_neg - cneg)
        err = np.minimum(err_plus, 1.0 - err_plus)
        flat = np.argmin(err)
        fi, cut = divmod(int(flat), n)
        e = float(err[fi, cut])
        if e < best[0]:
            feature = f0 + fi
            svals = vals[idx[fi], feature]
            if cut + 1 < n and svals[cut + 1] > svals[cut]:
                thr = float((svals[cut] + svals[cut + 1]) / 2.0)
            else:
                thr = float(svals[cut]) + 1e-6
            polarity = 1 if err_plus[fi, cut] <= 1.0 - err_plus[fi, cut] else -1
            best = (e, feature, thr, polarity)
    return best


def train_stage(vals: np.ndarray, labels: np.ndarray, log=print):
    n = vals.shape[0]
    order = np.argsort(vals, axis=0).T.astype(np.int32)
    weights = np.where(labels > 0, 0.5 / (labels > 0).sum(), 0.5 / (labels < 0).sum())
    stumps: list[Stump] = []
    scores = np.zeros(n, np.float64)
    stage_thr, fpr = 0.0, 1.0
    for round_i in range(MAX_WEAK):
        weights = weights / weights.sum()
        err, feature, thr, polarity = best_stump(vals, order, labels, weights)
        err = min(max(err, 1e-10), 0.5 - 1e-10)
        alpha = 0.5 * np.log((1.0 - err) / err)
        h = np.where(vals[:, feature] >= thr, polarity, -polarity).astype(np.float64)
        if polarity > 0:
            stump = Stump(feature, thr, -alpha, alpha)
        else:
            stump = Stump(feature, thr, alpha, -alpha)
        stumps.append(stump)
        scores += alpha * h
        weights = weights * np.exp(-alpha * labels * h)

        pos_scores = scores[labels > 0]
        stage_thr = float(np.quantile(pos_scores, 1.0 - STAGE_MIN_TPR)) - 1e-9
        fpr = float(np.mean(scores[labels < 0] >= stage_thr))
        if fpr <= STAGE_MAX_FPR and round_i >= 1:
            break
    log(f"    {len(stumps)} stumps, fpr {fpr:.3f}")
    return stumps, stage_thr, fpr


def cascade_pass(windows: np.ndarray, stages, cmat) -> np.ndarray:
    vals, ok = feature_values(windows, cmat)
    alive = ok.copy()
    for stumps, thr in stages:
        if not alive.any():
            break
        score = np.zeros(windows.shape[0], np.float64)
        for s in stumps:
            v = vals[:, s.feature]
            score += np.where(v >= s.threshold, s.right, s.left)
        alive &= score >= thr
    return alive


# --------------------------------------------------------------------------- mining


def to_cascade(feats: list[HaarFeature], stages) -> Cascade:
    used: dict[int, int] = {}
    packed_feats: list[HaarFeature] = []
    packed_stages = []
    for stumps, thr in stages:
        trees = []
        for s in stumps:
            if s.feature not in used:
                used[s.feature] = len(packed_feats)
                packed_feats.append(feats[s.feature])
            node = TreeNode(
                feature=used[s.feature],
                threshold=s.threshold,
                left_val=s.left,
                right_val=s.right,
            )
            trees.append(DecisionTree((node,)))
        packed_stages.append(CascadeStage(thr, tuple(trees)))
    return Cascade(BASE, BASE, tuple(packed_feats), tuple(packed_stages))


def mine_hard_negatives(sources, feats, stages, rng, count, log=print) -> np.ndarray:
    """Crop the windows the real multi-scale scan still accepts."""
    cascade = to_cascade(feats, stages)
    out: list[np.ndarray] = []
    t0 = time.time()
    for img in rng.permutation(len(sources)):
        arr = sources[img]
        h, w = arr.shape
        if min(h, w) < BASE:
            continue
        u8 = np.rint(arr).clip(0, 255).astype(np.uint8)
        tables = integral_images(ImagePlane(u8))
        stride = w + 1
        ii, ii2, til = (tables.ii.reshape(-1), tables.ii2.reshape(-1), tables.tilted.reshape(-1))
        scale = 1.0
        hits: list[tuple[int, int, int]] = []
        while True:
            win = int(np.rint(BASE * scale))
            if win > min(w, h):
                break
            hits.extend(_scan_scale(cascade, scale, win, w, h, stride, ii, ii2, til))
            scale *= MINE_SCALE_FACTOR
        if len(hits) > 400:
            keep = rng.choice(len(hits), 400, replace=False)
            hits = [hits[int(k)] for k in keep]
        for x, y, side in hits:
            patch = arr[y : y + side, x : x + side]
            if side != BASE:
                patch = resize_bilinear(patch, BASE, BASE)
            out.append(np.rint(patch).clip(0, 255).astype(np.uint8))
        if len(out) >= count:
            break
    log(f"    mined {len(out)} runtime hard negatives in {time.time() - t0:.0f}s")
    return np.stack(out) if out else np.zeros((0, BASE, BASE), np.uint8)


# --------------------------------------------------------------------------- XML


def emit_xml(feats: list[HaarFeature], stages, path: Path) -> None:
    root = ET.Element("opencv_storage")
    casc = ET.SubElement(root, "facemood_frontalface", {"type_id": "opencv-haar-classifier"})
    ET.SubElement(casc, "size").text = f"{BASE} {BASE}"
    stages_el = ET.SubElement(casc, "stages")
    for stumps, thr in stages:
        st = ET.SubElement(stages_el, "_")
        trees = ET.SubElement(st, "trees")
        for s in stumps:
            tree = ET.SubElement(trees, "_")
            node = ET.SubElement(tree, "_")
            feat_el = ET.SubElement(node, "feature")
            rects = ET.SubElement(feat_el, "rects")
            for x, y, w, h, weight in feats[s.feature].rects:
                ET.SubElement(rects, "_").text = f"{x} {y} {w} {h} {weight:.1f}"
            ET.SubElement(feat_el, "tilted").text = "0"
            ET.SubElement(node, "threshold").text = f"{s.threshold:.10e}"
            ET.SubElement(node, "left_val").text = f"{s.left:.10e}"
            ET.SubElement(node, "right_val").text = f"{s.right:.10e}"
        ET.SubElement(st, "stage_threshold").text = f"{thr:.10e}"
        ET.SubElement(st, "parent").text = "-1"
        ET.SubElement(st, "next").text = "-1"
    ET.indent(root)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(ET.tostring(root, xml_declaration=True, encoding="utf-8") + b"\n")


# --------------------------------------------------------------------------- main


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_OUT
    rng = np.random.default_rng(SEED)
    t0 = time.time()

    feats = generate_features()
    print(f"{len(feats)} candidate features")
    cmat = corner_matrix(feats)

    pos = positive_windows()
    pos_vals, pos_ok = feature_values(pos, cmat)
    pos = pos[pos_ok]
    pos_vals = pos_vals[pos_ok]
    print(f"{pos.shape[0]} positive windows")

    sources = negative_sources(rng)
    neg = random_windows(sources, rng, TARGET_NEG)
    stages: list[tuple[list[Stump], float]] = []

    for stage_i in range(MAX_STAGES):
        print(f"stage {stage_i}: {pos.shape[0]} pos, {neg.shape[0]} neg")
        neg_vals, neg_ok = feature_values(neg, cmat)
        vals = np.vstack([pos_vals, neg_vals[neg_ok]])
        labels = np.concatenate([np.ones(pos_vals.shape[0]), -np.ones(int(neg_ok.sum()))])
        stumps, thr, fpr = train_stage(vals, labels)
        stages.append((stumps, thr))

        mined = mine_hard_negatives(sources, feats, stages, rng, TARGET_NEG)
        if mined.shape[0] < 150:
            print("    negative pool exhausted; cascade is strong enough")
            break
        if mined.shape[0] < TARGET_NEG:
            top_up = random_windows(sources, rng, TARGET_NEG - mined.shape[0])
            mined = np.concatenate([mined, top_up])
        neg = mined[:TARGET_NEG]

    emit_xml(feats, stages, out)
    kept = cascade_pass(pos, stages, cmat).mean()
    print(f"cascade: {len(stages)} stages, {sum(len(s) for s, _ in stages)} stumps, "
          f"TPR on training faces {kept:.4f}")
    print(f"wrote {out} in {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
