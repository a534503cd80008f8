"""Local Expression Predictions: per-triangle votes and their aggregations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


TIE_TOL = 1e-12


class TotalOcclusionError(ValueError):
    """Every covered triangle has zero confidence; nothing left to vote."""


def argmax_label(probs) -> int:
    """Index of the largest probability; near-ties (within 1e-12) go to the lowest index.

    The tolerance keeps exact vote ties from being decided by round-off in
    the weighted path.
    """
    p = np.asarray(probs, dtype=np.float64)
    return int(np.flatnonzero(p >= p.max() - TIE_TOL)[0])


@dataclass(frozen=True)
class LepField:
    probs: np.ndarray  # (Nt, L); rows of uncovered triangles are zero
    z: np.ndarray  # (Nt,) normalizers
    covered: np.ndarray  # (Nt,) bool

    @property
    def n_triangles(self) -> int:
        return len(self.z)

    def features(self) -> np.ndarray:
        """Rows with the uniform prior substituted for uncovered triangles, (Nt, L)."""
        L = self.probs.shape[1]
        return np.where(self.covered[:, None], self.probs, 1.0 / L)

    def to_text(self, class_names=None) -> str:
        L = self.probs.shape[1]
        names = list(class_names) if class_names is not None else [f"p{l}" for l in range(L)]
        lines = ["triangle " + " ".join(names) + " Z"]
        for t in range(self.n_triangles):
            vals = " ".join(f"{v:.17g}" for v in self.probs[t])
            lines.append(f"{t} {vals} {self.z[t]:.17g}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ExpressionPrediction:
    probs: np.ndarray

    @property
    def label(self) -> int:
        return argmax_label(self.probs)


def field_from_votes(votes: np.ndarray, mask_matrix: np.ndarray) -> LepField:
    """LEP field from per-tree one-hot votes (T, L) and tree masks (T, Nt)."""
    votes = np.asarray(votes, dtype=np.float64)
    M = np.asarray(mask_matrix, dtype=np.float64)
    sizes = M.sum(axis=1)
    mass = M.T @ (votes / np.where(sizes > 0, sizes, 1.0)[:, None])  # (Nt, L)
    z = mass.sum(axis=1)
    covered = z > 0
    probs = np.where(covered[:, None], mass / np.where(covered, z, 1.0)[:, None], 0.0)
    return LepField(probs, z, covered)


def lep_field(forest, ctx, sample: int = 0, tree_ids=None) -> LepField:
    votes = forest.votes(ctx, sample, tree_ids)
    M = forest.mask_matrix if tree_ids is None else forest.mask_matrix[np.asarray(tree_ids)]
    return field_from_votes(votes, M)


def average_votes(votes: np.ndarray) -> ExpressionPrediction:
    votes = np.asarray(votes, dtype=np.float64)
    if len(votes) == 0:
        raise ValueError("no trees to aggregate")
    return ExpressionPrediction(votes.mean(axis=0))


def aggregate(forest, ctx, sample: int = 0, tree_ids=None) -> ExpressionPrediction:
    """Plain forest average of the tree one-hot outputs."""
    return average_votes(forest.votes(ctx, sample, tree_ids))


def field_to_global(field: LepField, n_trees: int) -> np.ndarray:
    """``(1/T) sum_tau Z_tau p(l | tau)``; equals the tree average for a local forest."""
    return (field.z[:, None] * field.probs).sum(axis=0) / n_trees


def weighted_aggregate(field: LepField, weights) -> ExpressionPrediction:
    """Confidence-weighted combination of LEPs (WLS-RF)."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != field.z.shape:
        raise ValueError(f"expected {field.z.shape[0]} triangle weights, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("triangle weights must be finite and non-negative")
    wz = w * field.z
    total = wz.sum()
    if total <= 0:
        raise TotalOcclusionError("all covered triangles carry zero weight")
    return ExpressionPrediction((wz[:, None] * field.probs).sum(axis=0) / total)
