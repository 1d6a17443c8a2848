"""CK+-layout corpus ingestion: sequence discovery, emotion labels,
peak-frame loading, and design-matrix extraction with a feature cache.

Directory layout (the distribution's own):

    images_root/<participant>/<sequence>/<frames .png>
    labels_root/<participant>/<sequence>/<one *_emotion.txt per labelled seq>

The label file holds a numeric code 1..7, mapped to ids 0..6 in the order
anger, contempt, disgust, fear, happiness, sadness, surprise. Code 0
(neutral) and anything unreadable is skipped and counted in the scan report.
Only the last frame of a sequence (the peak frame) is ever used.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .convnet import LayerTap, extract_features
from .errors import IoError
from .facedetect import Cascade, DetectParams, crop_largest_face
from .image import ImagePlane, grayscale, load_image
from .svm import EMOTIONS
from .tensorio import Tensor, WeightBundle, read_tensors, write_tensors

log = logging.getLogger(__name__)

_FRAME_NUMBER = re.compile(r"(\d+)\D*$")


@dataclass(frozen=True)
class Sequence:
    participant: str
    sequence: str
    frames: tuple[Path, ...]  # sorted by frame number
    emotion: int  # 0..6


@dataclass(frozen=True)
class Corpus:
    sequences: tuple[Sequence, ...]

    @property
    def participants(self) -> tuple[str, ...]:
        return tuple(sorted({s.participant for s in self.sequences}))


@dataclass
class ScanReport:
    labelled: int = 0
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        self.skipped += 1
        self.warnings.append(message)
        log.warning("%s", message)


def _frame_number(path: Path) -> int:
    match = _FRAME_NUMBER.search(path.stem)
    return int(match.group(1)) if match else -1


def scan_corpus(images_root, labels_root, report: ScanReport | None = None) -> Corpus:
    """Collect labelled sequences, sorted by (participant, sequence)."""
    images_root, labels_root = Path(images_root), Path(labels_root)
    if not images_root.is_dir():
        raise IoError(f"images root {images_root} is not a directory")
    if not labels_root.is_dir():
        raise IoError(f"labels root {labels_root} is not a directory")
    report = report if report is not None else ScanReport()

    sequences: list[Sequence] = []
    for part_dir in sorted(p for p in images_root.iterdir() if p.is_dir()):
        for seq_dir in sorted(p for p in part_dir.iterdir() if p.is_dir()):
            frames = sorted(
                (f for f in seq_dir.iterdir() if f.suffix.lower() in (".png", ".jpg", ".jpeg")),
                key=_frame_number,
            )
            if not frames:
                continue
            label_dir = labels_root / part_dir.name / seq_dir.name
            if not label_dir.is_dir():
                continue
            label_files = sorted(label_dir.glob("*emotion*"))
            if not label_files:
                continue
            try:
                code = int(float(label_files[0].read_text().strip()))
            except (OSError, ValueError) as exc:
                report.warn(f"{part_dir.name}/{seq_dir.name}: unreadable label ({exc})")
                continue
            if not 1 <= code <= 7:
                report.warn(f"{part_dir.name}/{seq_dir.name}: emotion code {code} outside 1..7")
                continue
            sequences.append(
                Sequence(part_dir.name, seq_dir.name, tuple(frames), code - 1)
            )
            report.labelled += 1
    return Corpus(tuple(sequences))


def peak_frame(seq: Sequence) -> ImagePlane:
    """The last frame of the sequence shows the fully formed expression."""
    if not seq.frames:
        raise IoError(f"{seq.participant}/{seq.sequence}: empty sequence")
    return load_image(seq.frames[-1])


@dataclass(frozen=True)
class DesignMatrix:
    features: np.ndarray  # (n, dim) float32
    labels: np.ndarray  # (n,) int
    participants: tuple[str, ...]  # one id per row
    dropped: tuple[str, ...] = ()  # "participant/sequence: reason"


def _cache_key(frame: Path, tap: LayerTap, face_detection: bool, cascade_hash: str) -> str:
    ident = f"{frame}|{tap.name}|{face_detection}|{cascade_hash}"
    return hashlib.sha1(ident.encode()).hexdigest()


def cascade_fingerprint(cascade: Cascade | None) -> str:
    if cascade is None:
        return "none"
    payload = repr((cascade.base_width, cascade.base_height, cascade.features, cascade.stages))
    return hashlib.sha1(payload.encode()).hexdigest()[:16]


def build_design_matrix(
    corpus: Corpus,
    bundle: WeightBundle,
    tap: LayerTap,
    use_face_detection: bool = True,
    cascade: Cascade | None = None,
    params: DetectParams | None = None,
    cache_path=None,
) -> DesignMatrix:
    """Extract one feature row per labelled sequence (peak frame, grayscaled,
    optionally cropped to the largest detected face; full frame otherwise).

    With `cache_path` set, rows are reused from the NTC1 cache keyed by
    (frame path, tap, face-detection flag, cascade fingerprint); a second
    call returns bit-identical features without touching the images.
    """
    if use_face_detection and cascade is None:
        raise IoError("face detection requested but no cascade given")
    params = params or DetectParams()
    fingerprint = cascade_fingerprint(cascade if use_face_detection else None)

    cached: dict[str, Tensor] = {}
    if cache_path is not None and Path(cache_path).exists():
        cached = read_tensors(cache_path)

    rows: list[np.ndarray] = []
    labels: list[int] = []
    participants: list[str] = []
    dropped: list[str] = []
    dirty = False
    for seq in corpus.sequences:
        key = _cache_key(seq.frames[-1], tap, use_face_detection, fingerprint)
        if key in cached:
            rows.append(cached[key].data)
            labels.append(seq.emotion)
            participants.append(seq.participant)
            continue
        try:
            frame = grayscale(peak_frame(seq))
            if use_face_detection:
                face = crop_largest_face(frame, cascade, params)
                if face is None:
                    log.warning(
                        "%s/%s: no face detected, falling back to the full frame",
                        seq.participant, seq.sequence,
                    )
                    face = frame
            else:
                face = frame
            vec = extract_features(face, bundle, tap).values
        except Exception as exc:  # noqa: BLE001 - per-sequence isolation
            dropped.append(f"{seq.participant}/{seq.sequence}: {exc}")
            log.warning("%s/%s: extraction failed: %s", seq.participant, seq.sequence, exc)
            continue
        cached[key] = Tensor(key, vec)
        dirty = True
        rows.append(vec)
        labels.append(seq.emotion)
        participants.append(seq.participant)

    if cache_path is not None and dirty:
        write_tensors(cached, cache_path)

    features = np.vstack(rows) if rows else np.zeros((0, tap.dim), np.float32)
    return DesignMatrix(
        features, np.asarray(labels, np.int64), tuple(participants), tuple(dropped)
    )


def emotion_name(label: int) -> str:
    return EMOTIONS[label]
