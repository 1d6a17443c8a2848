"""Linear soft-margin SVM: dual coordinate descent binary trainer with
one-versus-one and one-versus-all multiclass ensembles.

The solver maximizes the L1-hinge dual with per-point box constraints
0 <= alpha_i <= C_i, sweeping coordinates in a seeded random permutation per
epoch; the bias rides along as a constant-1 feature so the dual stays
box-constrained. Class imbalance is countered by frequency weights
weight(l) = n_total / (k * n_l) multiplying each point's C.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateDataError, ShapeError
from .tensorio import Tensor, write_tensors, read_tensors

EMOTIONS = ("anger", "contempt", "disgust", "fear", "happiness", "sadness", "surprise")


class Strategy(Enum):
    ONE_VS_ONE = "ovo"
    ONE_VS_ALL = "ova"


@dataclass(frozen=True)
class TrainingSet:
    """Feature rows with integer emotion labels."""

    features: np.ndarray  # (n, dim)
    labels: np.ndarray  # (n,)
    label_names: tuple[str, ...] = EMOTIONS

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or labels.ndim != 1 or feats.shape[0] != labels.shape[0]:
            raise ShapeError("features must be (n, dim) with one label per row")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.label_names)):
            raise ShapeError("label id outside the label set")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1e-6
    strategy: Strategy = Strategy.ONE_VS_ONE
    weighted: bool = True
    tolerance: float = 1e-4
    max_iterations: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ShapeError("c must be > 0")
        if self.tolerance <= 0:
            raise ShapeError("tolerance must be > 0")


@dataclass(frozen=True)
class BinaryModel:
    w: np.ndarray
    b: float
    label_pos: int
    label_neg: int

    def decision(self, x: np.ndarray) -> float:
        return float(self.w @ x + self.b)


@dataclass(frozen=True)
class MulticlassModel:
    strategy: Strategy
    binaries: tuple[BinaryModel, ...]
    labels: tuple[int, ...]
    dim: int
    label_names: tuple[str, ...] = EMOTIONS


@dataclass(frozen=True)
class PredictionDetail:
    """Per-binary decision values plus per-label aggregate scores."""

    votes: dict[int, int] | None
    decisions: dict[tuple[int, int], float] | dict[int, float]
    label_scores: dict[int, float]


@dataclass
class SolverReport:
    epochs: int = 0
    dual_objective: list[float] = field(default_factory=list)
    alphas: np.ndarray | None = None
    bounds: np.ndarray | None = None


def label_weights(ts: TrainingSet) -> dict[int, float]:
    """weight(l) = n_total / (k * n_l) over the labels present in `ts`."""
    if ts.labels.size == 0:
        raise DegenerateDataError("empty training set")
    present, counts = np.unique(ts.labels, return_counts=True)
    k = present.size
    n = ts.labels.size
    return {int(l): n / (k * int(cnt)) for l, cnt in zip(present, counts)}


def train_binary(
    x: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float = 1e-4,
    max_iter: int = 10000,
    bounds: np.ndarray | None = None,
    seed: int = 0,
    label_pos: int = 1,
    label_neg: int = 0,
    report: SolverReport | None = None,
) -> BinaryModel:
    """Dual coordinate descent on the L1-hinge dual; bias via feature
    augmentation. `bounds` gives per-point upper limits C_i (default c)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if y.shape != (n,):
        raise ShapeError("y must have one sign per row")
    if not ((y > 0).any() and (y < 0).any()):
        raise DegenerateDataError("training data is one-sided")
    upper = np.full(n, c, dtype=np.float64) if bounds is None else np.asarray(bounds, np.float64)

    q = (x * x).sum(axis=1) + 1.0  # +1 for the augmented bias coordinate
    alpha = np.zeros(n)
    w = np.zeros(x.shape[1])
    b = 0.0
    rng = np.random.default_rng(seed)
    epochs = 0
    for epoch in range(max_iter):
        epochs = epoch + 1
        max_violation = 0.0
        for i in rng.permutation(n):
            g = y[i] * (x[i] @ w + b) - 1.0
            a = alpha[i]
            if a <= 0.0:
                pg = min(g, 0.0)
            elif a >= upper[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                max_violation = max(max_violation, abs(pg))
                new_a = min(max(a - g / q[i], 0.0), upper[i])
                d = new_a - a
                if d != 0.0:
                    step = d * y[i]
                    w += step * x[i]
                    b += step
                    alpha[i] = new_a
        if report is not None:
            report.dual_objective.append(alpha.sum() - 0.5 * (w @ w + b * b))
        if max_violation < tol:
            break
    if report is not None:
        report.epochs = epochs
        report.alphas = alpha
        report.bounds = upper
    return BinaryModel(w, float(b), label_pos, label_neg)


def train_multiclass(ts: TrainingSet, cfg: SvmConfig) -> MulticlassModel:
    present = [int(l) for l in np.unique(ts.labels)]
    if len(present) < 2:
        raise DegenerateDataError("need at least 2 labels to train a multiclass model")
    weights = label_weights(ts) if cfg.weighted else {l: 1.0 for l in present}
    per_point_c = cfg.c * np.array([weights[int(l)] for l in ts.labels])

    binaries: list[BinaryModel] = []
    if cfg.strategy is Strategy.ONE_VS_ONE:
        for ai in range(len(present)):
            for bi in range(ai + 1, len(present)):
                la, lb = present[ai], present[bi]
                mask = (ts.labels == la) | (ts.labels == lb)
                y = np.where(ts.labels[mask] == la, 1.0, -1.0)
                binaries.append(
                    train_binary(
                        ts.features[mask],
                        y,
                        cfg.c,
                        tol=cfg.tolerance,
                        max_iter=cfg.max_iterations,
                        bounds=per_point_c[mask],
                        seed=cfg.seed,
                        label_pos=la,
                        label_neg=lb,
                    )
                )
    else:
        for l in present:
            y = np.where(ts.labels == l, 1.0, -1.0)
            binaries.append(
                train_binary(
                    ts.features,
                    y,
                    cfg.c,
                    tol=cfg.tolerance,
                    max_iter=cfg.max_iterations,
                    bounds=per_point_c,
                    seed=cfg.seed,
                    label_pos=l,
                    label_neg=-1,
                )
            )
    return MulticlassModel(
        cfg.strategy, tuple(binaries), tuple(present), ts.features.shape[1], ts.label_names
    )


def predict(model: MulticlassModel, x: np.ndarray) -> tuple[int, PredictionDetail]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != model.dim:
        raise ShapeError(f"feature length {x.shape[0]} != model dim {model.dim}")

    if model.strategy is Strategy.ONE_VS_ONE:
        votes = {l: 0 for l in model.labels}
        sum_abs = {l: 0.0 for l in model.labels}
        decisions: dict[tuple[int, int], float] = {}
        for m in model.binaries:
            d = m.decision(x)
            decisions[(m.label_pos, m.label_neg)] = d
            votes[m.label_pos if d >= 0 else m.label_neg] += 1
            sum_abs[m.label_pos] += abs(d)
            sum_abs[m.label_neg] += abs(d)
        top = max(votes.values())
        tied = [l for l in model.labels if votes[l] == top]
        if len(tied) > 1:
            best_sum = max(sum_abs[l] for l in tied)
            tied = [l for l in tied if sum_abs[l] == best_sum]
        winner = min(tied)
        return winner, PredictionDetail(votes, decisions, {l: float(votes[l]) for l in model.labels})

    decisions_ova = {m.label_pos: m.decision(x) for m in model.binaries}
    best = max(decisions_ova.values())
    winner = min(l for l, d in decisions_ova.items() if d == best)
    return winner, PredictionDetail(None, decisions_ova, dict(decisions_ova))


def predict_batch(model: MulticlassModel, x: np.ndarray) -> np.ndarray:
    return np.array([predict(model, row)[0] for row in np.asarray(x, np.float64)])


# ---------------------------------------------------------------------------
# model serialization (NTC1 container)

_STRATEGY_CODE = {Strategy.ONE_VS_ONE: 0.0, Strategy.ONE_VS_ALL: 1.0}


def save_model(model: MulticlassModel, path) -> None:
    tensors = {
        "meta": Tensor(
            "meta",
            np.array([_STRATEGY_CODE[model.strategy], len(model.labels), model.dim], np.float32),
        ),
        "labels": Tensor("labels", np.array(model.labels, np.float32)),
    }
    for m in model.binaries:
        if model.strategy is Strategy.ONE_VS_ONE:
            stem = f"pair.{m.label_pos}.{m.label_neg}"
        else:
            stem = f"rest.{m.label_pos}"
        tensors[f"{stem}.w"] = Tensor(f"{stem}.w", m.w.astype(np.float32))
        tensors[f"{stem}.b"] = Tensor(f"{stem}.b", np.array([m.b], np.float32))
    write_tensors(tensors, path)


def load_model(path) -> MulticlassModel:
    tensors = read_tensors(path)
    meta = tensors["meta"].data
    strategy = Strategy.ONE_VS_ONE if meta[0] == 0.0 else Strategy.ONE_VS_ALL
    labels = tuple(int(v) for v in tensors["labels"].data)
    dim = int(meta[2])
    binaries = []
    if strategy is Strategy.ONE_VS_ONE:
        for ai in range(len(labels)):
            for bi in range(ai + 1, len(labels)):
                la, lb = labels[ai], labels[bi]
                w = tensors[f"pair.{la}.{lb}.w"].data.astype(np.float64)
                b = float(tensors[f"pair.{la}.{lb}.b"].data[0])
                binaries.append(BinaryModel(w, b, la, lb))
    else:
        for l in labels:
            w = tensors[f"rest.{l}.w"].data.astype(np.float64)
            b = float(tensors[f"rest.{l}.b"].data[0])
            binaries.append(BinaryModel(w, b, l, -1))
    return MulticlassModel(strategy, tuple(binaries), labels, dim)
