"""Evaluation protocol: subject-level OOB accuracy, confusion matrices, ROC AUC
and occlusion sweeps."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .confidence import triangle_confidence
from .data import Dataset, occlude_dataset
from .lep import TotalOcclusionError, argmax_label, field_from_votes, weighted_aggregate

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("variant", "region", "R", "accuracy", "n_evaluated", "n_excluded")


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class
    class_names: tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    @property
    def percentages(self) -> np.ndarray:
        """Row-normalized percentages; rows without samples stay zero."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.where(rows > 0, 100.0 * self.counts / np.where(rows > 0, rows, 1), 0.0)

    @classmethod
    def from_predictions(cls, truth, pred, n_classes: int, class_names=()) -> "ConfusionMatrix":
        C = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(C, (np.asarray(truth, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
        return cls(C, tuple(class_names))

    def to_text(self) -> str:
        names = list(self.class_names) or [str(i) for i in range(len(self.counts))]
        w = max(8, max(len(n) for n in names) + 1)
        lines = [" " * w + "".join(f"{n:>{w}}" for n in names)]
        for n, row in zip(names, self.percentages):
            lines.append(f"{n:<{w}}" + "".join(f"{v:>{w}.1f}" for v in row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RocResult:
    auc: float
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def auc(scores, labels) -> RocResult:
    """Area under the ROC curve from the Mann-Whitney rank statistic (ties at midrank)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and of equal length")
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both positive and negative samples")
    ranks = rankdata(s)  # average ranks for ties
    value = (ranks[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0)
    thr = np.unique(s)[::-1]
    tpr = np.concatenate([[0.0], [(s[y] >= t).sum() / n1 for t in thr]])
    fpr = np.concatenate([[0.0], [(s[~y] >= t).sum() / n0 for t in thr]])
    return RocResult(float(value), fpr, tpr, np.concatenate([[np.inf], thr]))


# -------------------------------------------------------------- OOB accuracy


@dataclass(frozen=True)
class OobResult:
    accuracy: float
    confusion: ConfusionMatrix
    predictions: np.ndarray  # -1 for excluded samples
    probabilities: np.ndarray  # NaN rows for excluded samples
    n_evaluated: int
    n_excluded: int
    n_fallback: int = 0  # WLS samples with zero total weight, scored unweighted


def sample_triangle_confidence(network, dataset: Dataset, mesh) -> np.ndarray:
    """Triangle confidences of every sample, (n, Nt)."""
    D = dataset.descriptors()
    return np.stack([triangle_confidence(network.point_confidence(network.point_errors(d)), mesh) for d in D])


def oob_evaluate(forest, dataset: Dataset, weighting: str = "none", network=None,
                 triangle_alpha=None) -> OobResult:
    """Accuracy where each sample hears only trees that never saw its subject.

    ``weighting`` is ``none`` (tree average) or ``confidence`` (triangle
    weights from ``network``, or precomputed ``triangle_alpha`` (n, Nt)).
    Samples with no out-of-bag tree are excluded and counted.
    """
    if weighting not in ("none", "confidence"):
        raise ValueError("weighting must be 'none' or 'confidence'")
    ctx = dataset.context(forest.mesh)
    labels = np.asarray(dataset.labels)
    ids = np.flatnonzero(labels >= 0)
    leaf = forest.predict_classes(ctx, ids)
    oob = forest.oob_matrix(dataset.subjects[ids])
    if weighting == "confidence" and triangle_alpha is None:
        if network is None:
            raise ValueError("confidence weighting needs a network or triangle confidences")
        triangle_alpha = sample_triangle_confidence(network, dataset.subset(ids), forest.mesh)
    elif triangle_alpha is not None:
        triangle_alpha = np.asarray(triangle_alpha)[ids]
    L = forest.n_classes
    eye = np.eye(L)
    M = forest.mask_matrix
    preds = np.full(len(labels), -1, dtype=np.int64)
    probs = np.full((len(labels), L), np.nan)
    fallback = 0
    for row, i in enumerate(ids):
        use = np.flatnonzero(oob[row])
        if len(use) == 0:
            continue
        votes = eye[leaf[row, use]]
        if weighting == "none":
            p = votes.mean(axis=0)
        else:
            field = field_from_votes(votes, M[use])
            try:
                p = weighted_aggregate(field, triangle_alpha[row]).probs
            except TotalOcclusionError:
                fallback += 1
                p = votes.mean(axis=0)
        probs[i] = p
        preds[i] = argmax_label(p)
    done = preds >= 0
    n_excl = int(len(ids) - done.sum())
    if n_excl:
        log.warning("%d samples have no out-of-bag tree and were excluded", n_excl)
    cm = ConfusionMatrix.from_predictions(labels[done], preds[done], L, forest.class_names)
    return OobResult(cm.accuracy, cm, preds, probs, int(done.sum()), n_excl, fallback)


# ------------------------------------------------------------------ sweeps


def occlusion_sweep(ls_forests: dict, dataset: Dataset, rs_forest=None, network=None,
                    regions=("none", "eyes", "mouth"), margin: float = 20, seed: int = 0,
                    jitter: bool = False) -> list[dict]:
    """Accuracy per (variant, region, R); ``ls_forests`` maps R to an LS-RF.

    Variants are RS-RF (when given; its row repeats for every R), LS-RF and
    WLS-RF (when ``network`` is given).
    """
    if not ls_forests or not regions:
        raise ValueError("sweep needs at least one R value and one region")
    rows = []
    for region in regions:
        occ = occlude_dataset(dataset, region, margin, seed, jitter)
        alpha = None
        rs_acc = oob_evaluate(rs_forest, occ) if rs_forest is not None else None
        for R, forest in sorted(ls_forests.items()):
            results = []
            if rs_acc is not None:
                results.append(("rs", rs_acc))
            results.append(("ls", oob_evaluate(forest, occ)))
            if network is not None:
                if alpha is None:
                    alpha = sample_triangle_confidence(network, occ, forest.mesh)
                results.append(("wls", oob_evaluate(forest, occ, "confidence", triangle_alpha=alpha)))
            for variant, r in results:
                rows.append(dict(variant=variant, region=region, R=float(R), accuracy=r.accuracy,
                                 n_evaluated=r.n_evaluated, n_excluded=r.n_excluded))
    return rows


def rows_to_csv(rows, columns=SWEEP_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
