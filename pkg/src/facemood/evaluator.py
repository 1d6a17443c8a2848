"""Leave-one-participant-out evaluation: fold planning, confusion matrices,
macro accuracy (the unweighted mean of per-emotion recall), and the
experiment grid over (layer tap, multiclass strategy, C, face detection)."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .convnet import LayerTap
from .errors import DegenerateDataError, IoError, UndefinedMetricError
from .svm import EMOTIONS, Strategy, SvmConfig, TrainingSet, predict, train_multiclass

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fold:
    participant: str
    train_rows: np.ndarray
    test_rows: np.ndarray


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]
    participants: tuple[str, ...]  # per-row ids the folds were built from


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[true][predicted] over the full label set."""

    counts: np.ndarray
    label_names: tuple[str, ...] = EMOTIONS

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.label_names)
        if counts.shape != (k, k):
            raise UndefinedMetricError(f"confusion matrix must be {k}x{k}")
        object.__setattr__(self, "counts", counts)

    def row_percentages(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(sums > 0, 100.0 * self.counts / sums, np.nan)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("true\\predicted," + ",".join(self.label_names) + "\n")
        for name, row in zip(self.label_names, self.counts):
            out.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
        return out.getvalue()


@dataclass(frozen=True)
class ExperimentSpec:
    tap: LayerTap
    strategy: Strategy
    c_values: tuple[float, ...]
    weighted: bool = True
    face_detection: bool = True

    def __post_init__(self):
        if not self.c_values or any(c <= 0 for c in self.c_values):
            raise DegenerateDataError("c_values must be non-empty and positive")


# C grid spanning both reported optima, lacking published sweep values.
DEFAULT_C_GRID = (1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def make_folds(participants: Sequence[str]) -> FoldPlan:
    """One fold per distinct participant, in sorted id order."""
    participants = list(participants)
    distinct = sorted(set(participants))
    if len(distinct) < 2:
        raise DegenerateDataError("leave-one-participant-out needs at least 2 participants")
    ids = np.asarray(participants)
    rows = np.arange(len(participants))
    folds = []
    for pid in distinct:
        mask = ids == pid
        folds.append(Fold(pid, rows[~mask], rows[mask]))
    return FoldPlan(tuple(folds), tuple(participants))


def macro_accuracy(cm: ConfusionMatrix) -> float:
    """Mean per-label recall x 100; every true-label row must be non-empty."""
    sums = cm.counts.sum(axis=1)
    empty = [cm.label_names[i] for i in np.nonzero(sums == 0)[0]]
    if empty:
        raise UndefinedMetricError(f"no test rows for labels: {', '.join(empty)}")
    recalls = cm.counts.diagonal() / sums
    return float(recalls.mean() * 100.0)


def per_label_recall(cm: ConfusionMatrix) -> dict[str, float]:
    sums = cm.counts.sum(axis=1)
    return {
        name: (float(cm.counts[i, i] / sums[i] * 100.0) if sums[i] else float("nan"))
        for i, name in enumerate(cm.label_names)
    }


@dataclass
class LosoReport:
    missing_labels: dict[str, tuple[int, ...]] = field(default_factory=dict)


def run_loso(
    features: np.ndarray,
    labels: np.ndarray,
    plan: FoldPlan,
    cfg: SvmConfig,
    label_names: tuple[str, ...] = EMOTIONS,
    report: LosoReport | None = None,
) -> ConfusionMatrix:
    """Train per fold, accumulate held-out predictions into one matrix."""
    features = np.asarray(features, np.float64)
    labels = np.asarray(labels, np.int64)
    if features.shape[0] != labels.shape[0]:
        raise DegenerateDataError("features and labels disagree on row count")
    k = len(label_names)
    counts = np.zeros((k, k), np.int64)
    ids = np.asarray(plan.participants)
    for fold in plan.folds:
        train_p = set(ids[fold.train_rows].tolist())
        test_p = set(ids[fold.test_rows].tolist())
        assert not train_p & test_p, "participant leaked across the fold boundary"
        ts = TrainingSet(features[fold.train_rows], labels[fold.train_rows], label_names)
        model = train_multiclass(ts, cfg)
        absent = sorted(set(labels.tolist()) - set(model.labels))
        if absent and report is not None:
            report.missing_labels[fold.participant] = tuple(absent)
        if absent:
            log.warning("fold %s: labels %s absent from training", fold.participant, absent)
        for row in fold.test_rows:
            pred, _ = predict(model, features[row])
            counts[labels[row], pred] += 1
    return ConfusionMatrix(counts, label_names)


GRID_CSV_HEADER = (
    "tap,strategy,c,face_detection,macro_accuracy,"
    + ",".join(f"recall_{name}" for name in EMOTIONS)
)


MatrixSource = Mapping[tuple[LayerTap, bool], tuple[np.ndarray, np.ndarray, Sequence[str]]]


def run_experiment_grid(specs: Sequence[ExperimentSpec], sources: MatrixSource) -> str:
    """One CSV row per (tap, strategy, C, face_detection) combination.

    `sources` maps (tap, face_detection) to a cached design matrix triple
    (features, labels, participant ids)."""
    lines = [GRID_CSV_HEADER]
    for spec in specs:
        key = (spec.tap, spec.face_detection)
        if key not in sources:
            raise IoError(
                f"no cached design matrix for tap={spec.tap.name} "
                f"face_detection={spec.face_detection}"
            )
        features, labels, participants = sources[key]
        labels = np.asarray(labels, np.int64)
        plan = make_folds(list(participants))
        # restrict the matrix to the labels the corpus actually contains so
        # macro accuracy stays defined on partial corpora
        present = sorted(set(labels.tolist()))
        names = tuple(EMOTIONS[l] for l in present)
        remap = {l: i for i, l in enumerate(present)}
        compact = np.array([remap[l] for l in labels.tolist()])
        for c in spec.c_values:
            cfg = SvmConfig(c=c, strategy=spec.strategy, weighted=spec.weighted)
            cm = run_loso(features, compact, plan, cfg, label_names=names)
            recalls = per_label_recall(cm)
            lines.append(
                f"{spec.tap.value},{spec.strategy.value},{c:g},"
                f"{str(spec.face_detection).lower()},{macro_accuracy(cm):.4f},"
                + ",".join(
                    f"{recalls[name]:.4f}" if name in recalls else "nan"
                    for name in EMOTIONS
                )
            )
    return "\n".join(lines) + "\n"
