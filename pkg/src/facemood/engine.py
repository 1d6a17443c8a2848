"""Real-time classification engine: detect, crop, extract, predict, and the
five-snapshot smoothing window that keeps the reported emotion stable."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .convnet import LayerTap, extract_features
from .errors import StateError
from .facedetect import Cascade, DetectParams, FaceBox, detect
from .image import ImagePlane, crop, grayscale
from .svm import EMOTIONS, MulticlassModel, predict
from .tensorio import WeightBundle

WINDOW_SIZE = 5

LIVE_PARAMS = DetectParams(scale_factor=1.3, min_neighbors=3, min_size=150)


@dataclass(frozen=True)
class EmotionWindow:
    """Ring of the most recent per-frame emotions; `current` is their mode,
    ties resolved in favor of the most recently seen tied label."""

    ring: tuple[int, ...] = ()
    current: int | None = None


def smooth(window: EmotionWindow, new_emotion: int) -> EmotionWindow:
    ring = (window.ring + (new_emotion,))[-WINDOW_SIZE:]
    counts: dict[int, int] = {}
    for e in ring:
        counts[e] = counts.get(e, 0) + 1
    top = max(counts.values())
    tied = {e for e, n in counts.items() if n == top}
    for e in reversed(ring):
        if e in tied:
            return EmotionWindow(ring, e)
    raise AssertionError("unreachable: ring is non-empty")


@dataclass(frozen=True)
class FrameResult:
    frame_id: int
    face: FaceBox | None
    raw_emotion: int | None
    smoothed_emotion: int | None
    scores: dict[str, float] | None
    latency_ms: float


@dataclass
class EmotionEngine:
    """Bundles the immutable pipeline components; safe for concurrent calls.

    Window state lives with the caller (one per connection), not here.
    """

    bundle: WeightBundle | None = None
    cascade: Cascade | None = None
    model: MulticlassModel | None = None
    params: DetectParams = field(default_factory=lambda: LIVE_PARAMS)
    tap: LayerTap = LayerTap.LAYER5

    @property
    def initialized(self) -> bool:
        return self.bundle is not None and self.cascade is not None and self.model is not None

    def require_initialized(self) -> None:
        if not self.initialized:
            missing = [
                name
                for name, val in (
                    ("weights", self.bundle),
                    ("cascade", self.cascade),
                    ("model", self.model),
                )
                if val is None
            ]
            raise StateError(f"engine not initialized: missing {', '.join(missing)}")

    def classify_crop(self, face_img: ImagePlane) -> tuple[int, dict[str, float]]:
        features = extract_features(face_img, self.bundle, self.tap)
        label, detail = predict(self.model, features.values)
        names = self.model.label_names or EMOTIONS
        scores = {names[l]: float(v) for l, v in detail.label_scores.items()}
        return label, scores

    def process_frame(
        self, img: ImagePlane, window: EmotionWindow, frame_id: int = 0
    ) -> tuple[FrameResult, EmotionWindow]:
        """Full pipeline on one frame. Returns the result and the advanced
        window; a faceless frame leaves the window untouched."""
        self.require_initialized()
        start = time.perf_counter()
        gray = grayscale(img)
        boxes = detect(gray, self.cascade, self.params)
        if not boxes:
            latency = (time.perf_counter() - start) * 1000.0
            return (
                FrameResult(frame_id, None, None, window.current, None, latency),
                window,
            )
        box = boxes[0]
        side = min(box.side, gray.width - box.x, gray.height - box.y)
        face_img = crop(gray, box.x, box.y, side, side)
        label, scores = self.classify_crop(face_img)
        new_window = smooth(window, label)
        latency = (time.perf_counter() - start) * 1000.0
        return (
            FrameResult(frame_id, box, label, new_window.current, scores, latency),
            new_window,
        )


def process_frame(
    img: ImagePlane,
    cascade: Cascade,
    params: DetectParams,
    bundle: WeightBundle,
    model: MulticlassModel,
    window: EmotionWindow | None = None,
    frame_id: int = 0,
    tap: LayerTap = LayerTap.LAYER5,
) -> tuple[FrameResult, EmotionWindow]:
    engine = EmotionEngine(bundle=bundle, cascade=cascade, model=model, params=params, tap=tap)
    return engine.process_frame(img, window or EmotionWindow(), frame_id)
