"""Action-unit detection from LEP features.

A second layer of binary forests, one per AU, splits only on LEP
components ``p(l | tau)`` of one or more first-layer expression forests.
Root-split statistics give AU heat maps over the mesh and the weights of
the AU-specific confidence.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import container
from .features import AU_COUNTS, DEFAULT_THRESHOLDS, LEAF, PHI0, FeatureContext, ThresholdRanges, sample_lep_candidates
from .forest import (
    DecisionTree,
    FacialMask,
    PackedTrees,
    TrainConfig,
    TrainingError,
    _pack_tree_arrays,
    _unpack_tree_arrays,
    grow_tree,
    run_parallel,
    subject_bootstrap,
)
from .lep import field_from_votes

log = logging.getLogger(__name__)

AU_MODEL_KIND = "au-forest"
UNKNOWN = -1


class SchemeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class AuTrainConfig:
    n_trees: int = 50
    n_candidates: int = AU_COUNTS[0]
    n_thresholds: int = DEFAULT_THRESHOLDS
    subject_fraction: float = 0.632
    max_depth: int = 30
    min_samples_leaf: int = 1
    max_resample: int = 50

    def __post_init__(self):
        if self.n_trees < 1 or self.n_candidates < 1 or self.n_thresholds < 1:
            raise ValueError("AU forests need at least one tree, candidate and threshold")

    def tree_config(self) -> TrainConfig:
        return TrainConfig(n_trees=self.n_trees, subject_fraction=self.subject_fraction,
                           counts=(self.n_candidates, 0, 0, 0), n_thresholds=self.n_thresholds,
                           max_depth=self.max_depth, min_samples_leaf=self.min_samples_leaf,
                           max_resample=self.max_resample)


# ------------------------------------------------------------ LEP features


def check_compatible(models) -> None:
    models = list(models)
    if not models:
        raise ValueError("need at least one LEP model")
    first = models[0]
    for m in models[1:]:
        if m.scheme != first.scheme or not np.array_equal(m.mesh.triangles, first.mesh.triangles):
            raise SchemeMismatchError("LEP models must share the landmark scheme and mesh")
        if m.n_classes != first.n_classes:
            raise SchemeMismatchError("LEP models must share the number of expression labels")


def lep_block(forest, ctx: FeatureContext, sample_ids=None, subjects=None) -> np.ndarray:
    """LEP fields with the uniform prior on uncovered triangles, (n, Nt, L).

    When ``subjects`` is given, a sample only hears trees whose out-of-bag
    set holds its subject (subjects unknown to the forest hear every tree).
    """
    if sample_ids is None:
        sample_ids = np.arange(ctx.n_samples)
    sample_ids = np.asarray(sample_ids)
    leaf = forest.predict_classes(ctx, sample_ids)  # (n, T)
    M = forest.mask_matrix
    L = forest.n_classes
    use = None if subjects is None else _usable_matrix(forest, subjects)
    out = np.empty((len(sample_ids), forest.mesh.n_triangles, L))
    eye = np.eye(L)
    for i in range(len(sample_ids)):
        votes = eye[leaf[i]]
        if use is not None:
            votes = votes * use[i][:, None]
        out[i] = field_from_votes(votes, M).features()
    return out


def _usable_matrix(forest, subjects) -> np.ndarray:
    subjects = [str(s) for s in subjects]
    known = set(forest.subjects)
    oob = forest.oob_matrix(subjects)
    unknown = np.array([s not in known for s in subjects])
    oob[unknown] = True
    return oob


def lep_feature_array(models, ctx: FeatureContext, subjects=None) -> np.ndarray:
    """Per-model LEP blocks stacked model-first, (n, n_models, Nt, L)."""
    models = list(models)
    check_compatible(models)
    return np.stack([lep_block(m, ctx, None, subjects) for m in models], axis=1)


def extract_lep_features(models, ctx: FeatureContext, sample: int = 0) -> np.ndarray:
    """Flat LEP feature vector of one sample: L * Nt values per model, model order."""
    models = list(models)
    check_compatible(models)
    return np.concatenate([lep_block(m, ctx, [sample])[0].ravel() for m in models])


def lep_context(features: np.ndarray, triangles) -> FeatureContext:
    """A context carrying only LEP features; geometry fields are placeholders."""
    n = len(features)
    return FeatureContext(np.zeros((n, 1, 2)), np.ones(n), np.asarray(triangles), lep=np.asarray(features))


# ----------------------------------------------------------------- forest


@dataclass
class AuForest:
    au_names: tuple[str, ...]
    trees: dict[str, list[DecisionTree]]
    census: np.ndarray  # (n_aus, L, Nt) root-split counts
    n_models: int
    n_labels: int
    triangles: np.ndarray
    scheme: str
    source_models: tuple[str, ...] = ()
    subjects: tuple[str, ...] = ()
    skipped: tuple[str, ...] = ()
    config: AuTrainConfig = field(default_factory=AuTrainConfig)
    seed: int = 0

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def feature_length(self) -> int:
        return self.n_models * self.n_triangles * self.n_labels

    @cached_property
    def _packed(self) -> dict:
        return {a: PackedTrees.pack(self.trees[a]) for a in self.au_names}

    def _as_context(self, features) -> FeatureContext:
        F = np.asarray(features, dtype=np.float64)
        shape = (self.n_models, self.n_triangles, self.n_labels)
        if F.ndim == 1 or F.ndim == 2:
            if F.shape[-1] != self.feature_length:
                raise ValueError(f"expected {self.feature_length} LEP features, got {F.shape[-1]}")
            F = F.reshape((-1,) + shape)
        elif F.shape[1:] != shape:
            raise ValueError(f"expected LEP features of shape (n, {shape}), got {F.shape}")
        return lep_context(F, self.triangles)

    def votes(self, features) -> np.ndarray:
        """Binary tree outputs, (n, n_aus, T2)."""
        ctx = self._as_context(features)
        ids = np.arange(ctx.n_samples)
        return np.stack([self._packed[a].route(ctx, ids) for a in self.au_names], axis=1)

    def predict(self, features) -> np.ndarray:
        """Fraction of trees voting "active", (n, n_aus)."""
        v = self.votes(features)
        return v.mean(axis=2)

    def oob_scores(self, features, subjects) -> np.ndarray:
        """Scores from out-of-bag trees only; NaN where a sample has none, (n, n_aus)."""
        v = self.votes(features).astype(np.float64)
        out = np.full(v.shape[:2], np.nan)
        subjects = [str(s) for s in subjects]
        for j, a in enumerate(self.au_names):
            oob = np.array([[s in t.oob_subjects for t in self.trees[a]] for s in subjects], dtype=bool)
            cnt = oob.sum(axis=1)
            ok = cnt > 0
            out[ok, j] = (v[ok, j] * oob[ok]).sum(axis=1) / cnt[ok]
        return out

    def confidences(self, triangle_alpha) -> np.ndarray:
        """AU-specific confidences; NaN for AUs whose census is empty."""
        out = np.full(len(self.au_names), np.nan)
        for j in range(len(self.au_names)):
            if self.census[j].sum() > 0:
                out[j] = au_confidence(self.census[j], triangle_alpha)
        return out

    # ------------------------------------------------------------ storage

    def to_bytes(self) -> bytes:
        arrays = {"census": self.census.astype(np.float64), "triangles": np.asarray(self.triangles, np.int64)}
        subj_index = {s: i for i, s in enumerate(self.subjects)}
        for j, a in enumerate(self.au_names):
            trees = self.trees[a]
            for k, v in _pack_tree_arrays(trees).items():
                arrays[f"au{j:03d}_{k}"] = v
            oob = [np.array([subj_index[s] for s in t.oob_subjects], dtype=np.int64) for t in trees]
            arrays[f"au{j:03d}_oob_index"] = np.concatenate(oob)
            arrays[f"au{j:03d}_oob_sizes"] = np.array([len(o) for o in oob], dtype=np.int64)
        meta = {
            "au_names": list(self.au_names),
            "n_models": self.n_models,
            "n_labels": self.n_labels,
            "scheme": self.scheme,
            "source_models": list(self.source_models),
            "subjects": list(self.subjects),
            "skipped": list(self.skipped),
            "config": asdict(self.config),
            "seed": int(self.seed),
        }
        return container.dumps(AU_MODEL_KIND, meta, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "AuForest":
        _, meta, a = container.loads(data, AU_MODEL_KIND)
        subjects = tuple(meta["subjects"])
        trees = {}
        for j, name in enumerate(meta["au_names"]):
            sub = {k[len(f"au{j:03d}_"):]: v for k, v in a.items() if k.startswith(f"au{j:03d}_")}
            ts = _unpack_tree_arrays(sub)
            offs = np.concatenate([[0], np.cumsum(sub["oob_sizes"])])
            for t, tree in enumerate(ts):
                tree.oob_subjects = tuple(subjects[i] for i in sub["oob_index"][offs[t] : offs[t + 1]])
            trees[name] = ts
        return cls(tuple(meta["au_names"]), trees, a["census"], int(meta["n_models"]), int(meta["n_labels"]),
                   a["triangles"], meta["scheme"], tuple(meta["source_models"]), subjects,
                   tuple(meta["skipped"]), AuTrainConfig(**meta["config"]), int(meta["seed"]))

    def save(self, path) -> bytes:
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return data

    @classmethod
    def load(cls, path) -> "AuForest":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def model_id(self) -> str:
        return container.digest(self.to_bytes())


def root_census(trees, n_labels: int, n_triangles: int) -> np.ndarray:
    """Counts ``N[l, tau]`` of root splits on LEP component ``(l, tau)``, summed over models."""
    N = np.zeros((n_labels, n_triangles))
    for t in trees:
        if t.kind[0] == PHI0:
            N[t.iparams[0, 0], t.iparams[0, 1]] += 1
    return N


def _grow_au(ctx, y, subjects, names, n_labels, n_models, tcfg, seed, m, tree_ids):
    nt = len(ctx.triangles)
    ranges = ThresholdRanges(np.zeros(4), np.ones(4))
    out = []
    for t in tree_ids:
        rng = np.random.default_rng([int(seed), 3, int(m), int(t)])
        ids, inbag, oob = subject_bootstrap(subjects, y, tcfg.subject_fraction, rng, tcfg.max_resample,
                                            classes=np.arange(2))
        sampler = lambda r: sample_lep_candidates(tcfg.counts[0], n_labels, nt, n_models, r)  # noqa: E731
        tree = grow_tree(ctx, ids, y, 2, sampler, ranges, tcfg, rng, mask=FacialMask(np.zeros(0, np.int64), 0.0))
        tree.oob_subjects = tuple(names[i] for i in oob)
        tree.inbag_subjects = tuple(names[i] for i in inbag)
        out.append(tree)
    return out


def train_au_forest(features: np.ndarray, au_labels: np.ndarray, au_names, subjects, triangles,
                    cfg: AuTrainConfig = AuTrainConfig(), seed: int = 0, jobs: int = 1,
                    scheme: str = "ls49", source_models=()) -> AuForest:
    """One binary forest per AU over LEP features ``(n, n_models, Nt, L)``.

    ``au_labels`` holds 1, 0 or -1 (unknown, sample excluded for that AU).
    AUs whose known labels are all one class are skipped with a warning.
    """
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 4:
        raise ValueError("LEP features must have shape (n, n_models, Nt, L)")
    n, n_models, nt, L = F.shape
    Y = np.asarray(au_labels).reshape(n, -1)
    names, codes = np.unique(np.asarray(subjects, dtype=str), return_inverse=True)
    names = tuple(str(s) for s in names)
    ctx = lep_context(F, triangles)
    tcfg = cfg.tree_config()
    kept, skipped, trees = [], [], {}
    for m, au in enumerate(au_names):
        y = Y[:, m].astype(np.int64)
        known = y[y != UNKNOWN]
        if len(np.unique(known)) < 2:
            warnings.warn(f"AU {au}: labels are single-class; skipped", stacklevel=2)
            skipped.append(str(au))
            continue
        log.info("AU %s: growing %d trees on %d samples", au, cfg.n_trees, len(known))
        try:
            trees[str(au)] = run_parallel(_grow_au, range(cfg.n_trees), jobs, ctx, y, codes, names, L, n_models,
                                          tcfg, int(seed), m)
        except TrainingError as exc:
            raise TrainingError(f"AU {au}: {exc}") from exc
        kept.append(str(au))
    census = np.stack([root_census(trees[a], L, nt) for a in kept]) if kept else np.zeros((0, L, nt))
    return AuForest(tuple(kept), trees, census, n_models, L, np.asarray(triangles), scheme,
                    tuple(source_models), names, tuple(skipped), cfg, int(seed))


def predict_au(forest: AuForest, features) -> np.ndarray:
    """Per-AU activation scores of one flat LEP feature vector, (n_aus,)."""
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 1:
        raise ValueError("predict_au takes one flat feature vector")
    return forest.predict(F)[0]


def au_confidence(census, triangle_alpha) -> float:
    """Census-weighted mean of triangle confidences; the census is summed over labels."""
    N = np.asarray(census, dtype=np.float64)
    w = N.sum(axis=0) if N.ndim == 2 else N
    total = w.sum()
    if total <= 0:
        raise ValueError("AU confidence is undefined for an empty census")
    return float(w @ np.asarray(triangle_alpha, dtype=np.float64) / total)


def heatmap(census, per_label: bool = False) -> np.ndarray:
    """Share of root splits per triangle (or per label and triangle)."""
    N = np.asarray(census, dtype=np.float64)
    total = N.sum(axis=(-2, -1), keepdims=True)
    if np.any(total <= 0):
        raise ValueError("heat map is undefined for an empty census")
    if per_label:
        return N / total
    return N.sum(axis=-2) / total[..., 0]


def heatmap_table(forest: AuForest) -> str:
    lines = ["au,triangle,proportion"]
    for j, a in enumerate(forest.au_names):
        if forest.census[j].sum() == 0:
            continue
        h = heatmap(forest.census[j])
        lines += [f"{a},{t},{h[t]:.6f}" for t in range(len(h))]
    return "\n".join(lines) + "\n"


def leaf_only_trees(forest: AuForest) -> dict:
    """Number of trees per AU that never split (contribute nothing to the census)."""
    return {a: sum(t.kind[0] == LEAF for t in forest.trees[a]) for a in forest.au_names}
