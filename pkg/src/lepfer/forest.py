"""Local-subspace and random-subspace random forests.

Each tree is grown on a subject-level, class-balanced bootstrap and on the
candidate features that live inside its facial mask: a connected patch of
mesh triangles covering at least a fraction ``R`` of the mean-face surface.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import container
from .features import (
    DEFAULT_COUNTS,
    DEFAULT_THRESHOLDS,
    LEAF,
    PHI0,
    PHI3,
    CandidateSet,
    FeatureContext,
    ThresholdRanges,
    candidate_matrix,
    candidate_thresholds,
    estimate_ranges,
    feature_values,
    sample_candidates,
)
from .mesh import FacialMesh, _adjacency

log = logging.getLogger(__name__)

MODEL_KIND = "lep-forest"


class TrainingError(RuntimeError):
    pass


class BootstrapError(TrainingError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 1000
    locality: float = 0.1
    subject_fraction: float = 0.632
    counts: tuple[int, int, int, int] = DEFAULT_COUNTS
    n_thresholds: int = DEFAULT_THRESHOLDS
    max_depth: int = 30
    min_samples_leaf: int = 1
    max_resample: int = 50
    range_fraction: float = 0.1

    def __post_init__(self):
        if not 0 < self.locality <= 1:
            raise ValueError("locality R must lie in (0, 1]")
        if self.n_trees < 1:
            raise ValueError("need at least one tree")
        if not 0 < self.subject_fraction <= 1:
            raise ValueError("subject fraction must lie in (0, 1]")
        if self.n_thresholds < 1 or self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ValueError("invalid tree-growth settings")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))


@dataclass(frozen=True)
class FacialMask:
    triangles: np.ndarray  # sorted triangle indices
    coverage: float

    def __len__(self) -> int:
        return len(self.triangles)


@dataclass
class DecisionTree:
    kind: np.ndarray  # template id per node, LEAF for leaves
    iparams: np.ndarray
    fparams: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray  # class index at leaves, -1 at split nodes
    mask: FacialMask
    oob_subjects: tuple[str, ...] = ()
    inbag_subjects: tuple[str, ...] = ()

    @property
    def n_nodes(self) -> int:
        return len(self.kind)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            n, d = stack.pop()
            if self.kind[n] == LEAF:
                best = max(best, d)
            else:
                stack += [(self.left[n], d + 1), (self.right[n], d + 1)]
        return best


# ------------------------------------------------------------------ masks


def generate_mask(mesh: FacialMesh, R: float, rng: np.random.Generator) -> FacialMask:
    """Grow a connected triangle patch from a random seed until it covers ``R``."""
    if not 0 < R <= 1:
        raise ValueError("locality R must lie in (0, 1]")
    surf = mesh.surfaces
    start = int(rng.integers(mesh.n_triangles))
    chosen = {start}
    r = float(surf[start])
    frontier = set(mesh.adjacency[start])
    while r < R - 1e-12 and frontier:
        cand = sorted(frontier)
        j = cand[int(rng.integers(len(cand)))]
        chosen.add(j)
        frontier.discard(j)
        frontier.update(n for n in mesh.adjacency[j] if n not in chosen)
        r += float(surf[j])
    return FacialMask(np.array(sorted(chosen), dtype=np.int64), r)


def full_mask(mesh: FacialMesh) -> FacialMask:
    return FacialMask(np.arange(mesh.n_triangles, dtype=np.int64), float(mesh.surfaces.sum()))


def is_connected(mesh: FacialMesh, triangles) -> bool:
    tri = set(int(t) for t in triangles)
    if not tri:
        return False
    seen, todo = set(), [next(iter(tri))]
    while todo:
        t = todo.pop()
        if t in seen:
            continue
        seen.add(t)
        todo.extend(n for n in mesh.adjacency[t] if n in tri and n not in seen)
    return seen == tri


# -------------------------------------------------------------- bootstrap


def subject_bootstrap(subjects, labels, fraction: float, rng: np.random.Generator,
                      max_retries: int = 50, classes=None):
    """Subject-level bag with per-class downsampling to the minority count.

    ``subjects`` and ``labels`` are per-sample arrays (labels < 0 are ignored).
    Returns ``(inbag_sample_ids, inbag_subjects, oob_subjects)``.
    """
    subjects = np.asarray(subjects)
    labels = np.asarray(labels)
    usable = labels >= 0
    if classes is None:
        classes = np.unique(labels[usable])
    uniq = np.unique(subjects)
    k = max(1, math.ceil(fraction * len(uniq) - 1e-9))
    for _ in range(max_retries):
        chosen = np.sort(rng.choice(uniq, size=k, replace=False))
        sel = usable & np.isin(subjects, chosen)
        per_class = [np.flatnonzero(sel & (labels == c)) for c in classes]
        sizes = [len(p) for p in per_class]
        if min(sizes) == 0:
            continue
        m = min(sizes)
        ids = np.concatenate([p if len(p) == m else rng.choice(p, size=m, replace=False) for p in per_class])
        oob = np.setdiff1d(uniq, chosen)
        return np.sort(ids), chosen, oob
    raise BootstrapError(f"no subject draw covered every class after {max_retries} attempts")


# ---------------------------------------------------------------- growing


def gini_split_scores(values: np.ndarray, thresholds: np.ndarray, y: np.ndarray,
                      n_classes: int, min_leaf: int = 1) -> np.ndarray:
    """Weighted child Gini impurity for each (candidate, threshold); (C, K).

    Splits leaving a child with fewer than ``min_leaf`` samples score ``inf``.
    """
    C, n = values.shape
    K = thresholds.shape[1]
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    goes_left = values[:, None, :] <= thresholds[:, :, None]
    lc = goes_left.reshape(C * K, n).astype(np.float64) @ onehot
    rc = onehot.sum(axis=0) - lc
    nl = lc.sum(axis=1)
    nr = n - nl
    with np.errstate(invalid="ignore", divide="ignore"):
        gl = 1.0 - np.where(nl > 0, ((lc / nl[:, None]) ** 2).sum(axis=1), 1.0)
        gr = 1.0 - np.where(nr > 0, ((rc / nr[:, None]) ** 2).sum(axis=1), 1.0)
    score = (nl * gl + nr * gr) / n
    score[(nl < min_leaf) | (nr < min_leaf)] = np.inf
    return score.reshape(C, K)


def grow_tree(ctx: FeatureContext, sample_ids, labels, n_classes: int, sampler,
              ranges: ThresholdRanges, cfg: TrainConfig, rng: np.random.Generator,
              mask: FacialMask | None = None, audit: list | None = None) -> DecisionTree:
    """Greedy Gini tree grown until purity (or the depth/size rails).

    ``sampler(rng)`` returns the node's :class:`CandidateSet`; ``labels`` is
    indexed by context sample id.  When ``audit`` is a list, one
    ``(node, chosen_score, best_score_seen)`` tuple is appended per split.
    """
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    if len(sample_ids) == 0:
        raise TrainingError("cannot grow a tree on an empty sample set")
    labels = np.asarray(labels)
    kind, ip, fp, thr, left, right, leaf = [], [], [], [], [], [], []

    def new_node():
        kind.append(LEAF)
        ip.append((0, 0, 0, 0))
        fp.append((0.0, 0.0, 0.0, 0.0))
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf.append(-1)
        return len(kind) - 1

    stack = [(new_node(), sample_ids, 0)]
    while stack:
        node, idx, depth = stack.pop()
        y = labels[idx]
        counts = np.bincount(y, minlength=n_classes)
        majority = int(np.argmax(counts))
        if np.count_nonzero(counts) <= 1 or depth >= cfg.max_depth or len(idx) < 2 * cfg.min_samples_leaf:
            leaf[node] = majority
            continue
        cands = sampler(rng)
        thresholds = candidate_thresholds(cands, ranges, cfg.n_thresholds, rng)
        values = candidate_matrix(ctx, idx, cands)
        scores = gini_split_scores(values, thresholds, y, n_classes, cfg.min_samples_leaf)
        best = int(np.argmin(scores))  # first minimum: earliest-sampled candidate wins ties
        c, k = divmod(best, cfg.n_thresholds)
        if not np.isfinite(scores[c, k]):
            leaf[node] = majority
            continue
        if audit is not None:
            audit.append((node, float(scores[c, k]), float(scores.min())))
        t = float(thresholds[c, k])
        go_left = values[c] <= t
        kind[node] = int(cands.kinds[c])
        ip[node] = tuple(int(v) for v in cands.iparams[c])
        fp[node] = tuple(float(v) for v in cands.fparams[c])
        thr[node] = t
        ln, rn = new_node(), new_node()
        left[node], right[node] = ln, rn
        stack.append((rn, idx[~go_left], depth + 1))
        stack.append((ln, idx[go_left], depth + 1))

    return DecisionTree(
        kind=np.array(kind, dtype=np.int8),
        iparams=np.array(ip, dtype=np.int32).reshape(-1, 4),
        fparams=np.array(fp, dtype=np.float64).reshape(-1, 4),
        threshold=np.array(thr, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        leaf_class=np.array(leaf, dtype=np.int16),
        mask=mask if mask is not None else FacialMask(np.zeros(0, np.int64), 0.0),
    )


def predict_tree(tree: DecisionTree, ctx: FeatureContext, sample: int = 0, n_classes: int | None = None):
    """Route one sample to a leaf; returns the leaf's one-hot vector."""
    n = 0
    s = np.array([sample])
    while tree.kind[n] != LEAF:
        v = feature_values(ctx, s, tree.kind[n : n + 1], tree.iparams[n : n + 1].astype(np.int64),
                           tree.fparams[n : n + 1])[0]
        n = tree.left[n] if v <= tree.threshold[n] else tree.right[n]
    L = n_classes if n_classes is not None else int(tree.leaf_class.max()) + 1
    out = np.zeros(L)
    out[tree.leaf_class[n]] = 1.0
    return out


# ----------------------------------------------------------------- forest


@dataclass(frozen=True)
class PackedTrees:
    """All trees' nodes in flat arrays with global child indices."""

    kind: np.ndarray
    iparams: np.ndarray
    fparams: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray
    roots: np.ndarray

    @classmethod
    def pack(cls, trees) -> "PackedTrees":
        sizes = np.array([t.n_nodes for t in trees], dtype=np.int64)
        roots = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        shift = np.repeat(roots, sizes)
        cat = lambda name: np.concatenate([getattr(t, name) for t in trees])  # noqa: E731
        kind = cat("kind").astype(np.int64)
        left = cat("left").astype(np.int64)
        right = cat("right").astype(np.int64)
        split = kind != LEAF
        left = np.where(split, left + shift, -1)
        right = np.where(split, right + shift, -1)
        return cls(kind, cat("iparams").astype(np.int64), cat("fparams"), cat("threshold"),
                   left, right, cat("leaf_class").astype(np.int64), roots)

    def route(self, ctx: FeatureContext, sample_ids, tree_ids=None, chunk: int = 200_000) -> np.ndarray:
        """Leaf class of every (sample, tree) pair, shape (n, T)."""
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        roots = self.roots if tree_ids is None else self.roots[np.asarray(tree_ids)]
        T = len(roots)
        out = np.empty((len(sample_ids), T), dtype=np.int64)
        step = max(1, chunk // max(T, 1))
        for lo in range(0, len(sample_ids), step):
            ids = sample_ids[lo : lo + step]
            flat = np.tile(roots, len(ids))
            sid = np.repeat(ids, T)
            active = np.flatnonzero(self.kind[flat] != LEAF)
            while active.size:
                nd = flat[active]
                v = feature_values(ctx, sid[active], self.kind[nd], self.iparams[nd], self.fparams[nd])
                flat[active] = np.where(v <= self.threshold[nd], self.left[nd], self.right[nd])
                active = active[self.kind[flat[active]] != LEAF]
            out[lo : lo + len(ids)] = self.leaf_class[flat].reshape(len(ids), T)
        return out


@dataclass
class LocalForest:
    trees: list[DecisionTree]
    class_names: tuple[str, ...]
    scheme: str
    mesh: FacialMesh
    mean_shape: np.ndarray
    config: TrainConfig
    ranges: ThresholdRanges
    kind: str = "ls"  # "ls" (local subspaces) or "rs" (random subspaces)
    subjects: tuple[str, ...] = ()
    seed: int = 0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @cached_property
    def packed(self) -> PackedTrees:
        return PackedTrees.pack(self.trees)

    @cached_property
    def mask_matrix(self) -> np.ndarray:
        M = np.zeros((self.n_trees, self.mesh.n_triangles), dtype=bool)
        for i, t in enumerate(self.trees):
            M[i, t.mask.triangles] = True
        return M

    @property
    def mask_sizes(self) -> np.ndarray:
        return np.array([len(t.mask) for t in self.trees], dtype=np.int64)

    def predict_classes(self, ctx: FeatureContext, sample_ids=None, tree_ids=None) -> np.ndarray:
        if sample_ids is None:
            sample_ids = np.arange(ctx.n_samples)
        return self.packed.route(ctx, sample_ids, tree_ids)

    def votes(self, ctx: FeatureContext, sample: int = 0, tree_ids=None) -> np.ndarray:
        """One-hot tree outputs for one sample, (T, L)."""
        cls = self.predict_classes(ctx, [sample], tree_ids)[0]
        return np.eye(self.n_classes)[cls]

    def oob_matrix(self, subjects) -> np.ndarray:
        """``[i, t]`` is True when sample subject ``subjects[i]`` is out-of-bag for tree ``t``."""
        subjects = [str(s) for s in subjects]
        table = {s: i for i, s in enumerate(sorted(set(subjects)))}
        M = np.zeros((len(table), self.n_trees), dtype=bool)
        for t, tree in enumerate(self.trees):
            for s in tree.oob_subjects:
                if s in table:
                    M[table[s], t] = True
        return M[[table[s] for s in subjects]]

    def usable_trees(self, subject) -> np.ndarray:
        """Trees that may score a sample of ``subject`` without leakage."""
        subject = str(subject)
        if subject not in self.subjects:
            return np.arange(self.n_trees)
        return np.array([t for t, tree in enumerate(self.trees) if subject in tree.oob_subjects], dtype=np.int64)

    def root_census(self) -> np.ndarray:
        """Share of root-split features falling on each triangle; sums to 1.

        Appearance features count for their triangle; point features split
        their unit weight evenly over the mask triangles incident to the
        referenced landmarks.
        """
        census = np.zeros(self.mesh.n_triangles)
        tris = self.mesh.triangles
        n_rooted = 0
        for tree in self.trees:
            k = tree.kind[0]
            if k == LEAF:
                continue
            n_rooted += 1
            if k == PHI3:
                census[tree.iparams[0, 0]] += 1.0
                continue
            pts = tree.iparams[0, :2] if k == 1 else tree.iparams[0, :3]
            pts = np.unique(pts)
            w = 1.0 / len(pts)
            for p in pts:
                inc = [t for t in tree.mask.triangles if p in tris[t]]
                for t in inc:
                    census[t] += w / len(inc)
        return census / n_rooted if n_rooted else census

    # ------------------------------------------------------------ storage

    def to_bytes(self) -> bytes:
        trees = self.trees
        subj_index = {s: i for i, s in enumerate(self.subjects)}
        oob = [np.array([subj_index[s] for s in t.oob_subjects], dtype=np.int64) for t in trees]
        inb = [np.array([subj_index[s] for s in t.inbag_subjects], dtype=np.int64) for t in trees]
        arrays = _pack_tree_arrays(trees)
        arrays.update(
            oob_index=np.concatenate(oob) if oob else np.zeros(0, np.int64),
            oob_sizes=np.array([len(o) for o in oob], dtype=np.int64),
            inbag_index=np.concatenate(inb) if inb else np.zeros(0, np.int64),
            inbag_sizes=np.array([len(o) for o in inb], dtype=np.int64),
            mesh_triangles=np.asarray(self.mesh.triangles, dtype=np.int64),
            mesh_surfaces=np.asarray(self.mesh.surfaces, dtype=np.float64),
            mean_shape=np.asarray(self.mean_shape, dtype=np.float64),
            range_lo=self.ranges.lo,
            range_hi=self.ranges.hi,
        )
        meta = {
            "class_names": list(self.class_names),
            "scheme": self.scheme,
            "n_points": self.mesh.n_points,
            "config": _config_meta(self.config),
            "forest_kind": self.kind,
            "subjects": list(self.subjects),
            "seed": int(self.seed),
            "tie_break": "lowest class index",
        }
        return container.dumps(MODEL_KIND, meta, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LocalForest":
        _, meta, a = container.loads(data, MODEL_KIND)
        tri = a["mesh_triangles"]
        tri.setflags(write=False)
        surf = a["mesh_surfaces"]
        surf.setflags(write=False)
        mesh = FacialMesh(tri, _adjacency(tri), surf, int(meta["n_points"]))
        subjects = tuple(meta["subjects"])
        oob = _split(a["oob_index"], a["oob_sizes"])
        inb = _split(a["inbag_index"], a["inbag_sizes"])
        trees = _unpack_tree_arrays(a)
        for t, o, i in zip(trees, oob, inb):
            t.oob_subjects = tuple(subjects[j] for j in o)
            t.inbag_subjects = tuple(subjects[j] for j in i)
        cfg = meta["config"]
        cfg["counts"] = tuple(cfg["counts"])
        return cls(
            trees=trees,
            class_names=tuple(meta["class_names"]),
            scheme=meta["scheme"],
            mesh=mesh,
            mean_shape=a["mean_shape"],
            config=TrainConfig(**cfg),
            ranges=ThresholdRanges(a["range_lo"], a["range_hi"]),
            kind=meta["forest_kind"],
            subjects=subjects,
            seed=int(meta["seed"]),
        )

    def save(self, path) -> bytes:
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return data

    @classmethod
    def load(cls, path) -> "LocalForest":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def model_id(self) -> str:
        return container.digest(self.to_bytes())


def _config_meta(cfg) -> dict:
    d = asdict(cfg)
    if "counts" in d:
        d["counts"] = list(d["counts"])
    return d


def _split(flat, sizes):
    offs = np.concatenate([[0], np.cumsum(sizes)])
    return [flat[offs[i] : offs[i + 1]] for i in range(len(sizes))]


def _pack_tree_arrays(trees) -> dict:
    cat = lambda name, dt: (  # noqa: E731
        np.concatenate([getattr(t, name) for t in trees]).astype(dt) if trees else np.zeros(0, dt)
    )
    return dict(
        node_kind=cat("kind", np.int8),
        node_iparams=cat("iparams", np.int32).reshape(-1, 4),
        node_fparams=cat("fparams", np.float64).reshape(-1, 4),
        node_threshold=cat("threshold", np.float64),
        node_left=cat("left", np.int32),
        node_right=cat("right", np.int32),
        node_leaf=cat("leaf_class", np.int16),
        tree_sizes=np.array([t.n_nodes for t in trees], dtype=np.int64),
        mask_index=np.concatenate([t.mask.triangles for t in trees]).astype(np.int64)
        if trees else np.zeros(0, np.int64),
        mask_sizes=np.array([len(t.mask) for t in trees], dtype=np.int64),
        mask_coverage=np.array([t.mask.coverage for t in trees], dtype=np.float64),
    )


def _unpack_tree_arrays(a) -> list[DecisionTree]:
    sizes = a["tree_sizes"]
    parts = {k: _split(a[k], sizes) for k in
             ("node_kind", "node_iparams", "node_fparams", "node_threshold", "node_left", "node_right", "node_leaf")}
    masks = _split(a["mask_index"], a["mask_sizes"])
    trees = []
    for i in range(len(sizes)):
        trees.append(DecisionTree(
            kind=parts["node_kind"][i], iparams=parts["node_iparams"][i], fparams=parts["node_fparams"][i],
            threshold=parts["node_threshold"][i], left=parts["node_left"][i], right=parts["node_right"][i],
            leaf_class=parts["node_leaf"][i], mask=FacialMask(masks[i], float(a["mask_coverage"][i])),
        ))
    return trees


# --------------------------------------------------------------- training


def tree_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 1, int(t)])


def _grow_many(ctx, labels, subjects, subject_names, n_classes, mesh, cfg, ranges, kind, seed, tree_ids):
    trees = []
    all_tris = np.arange(mesh.n_triangles)
    for t in tree_ids:
        rng = tree_rng(seed, t)
        mask = full_mask(mesh) if kind == "rs" else generate_mask(mesh, cfg.locality, rng)
        ids, inbag, oob = subject_bootstrap(subjects, labels, cfg.subject_fraction, rng, cfg.max_resample,
                                            classes=np.arange(n_classes))
        tris = all_tris if kind == "rs" else mask.triangles
        sampler = lambda r, tris=tris: sample_candidates(tris, mesh.triangles, cfg.counts, r)  # noqa: E731
        tree = grow_tree(ctx, ids, labels, n_classes, sampler, ranges, cfg, rng, mask=mask)
        tree.oob_subjects = tuple(subject_names[i] for i in oob)
        tree.inbag_subjects = tuple(subject_names[i] for i in inbag)
        trees.append(tree)
    return trees


def run_parallel(fn, tree_ids, jobs: int, *args):
    """Apply ``fn(*args, chunk)`` over chunks of ``tree_ids`` and flatten in order."""
    tree_ids = list(tree_ids)
    if jobs is None or jobs <= 0:
        import os

        jobs = os.cpu_count() or 1
    if jobs == 1 or len(tree_ids) <= 1:
        return fn(*args, tree_ids)
    from joblib import Parallel, delayed

    n_chunks = min(len(tree_ids), 4 * jobs)
    chunks = [c.tolist() for c in np.array_split(np.array(tree_ids), n_chunks) if len(c)]
    results = Parallel(n_jobs=jobs)(delayed(fn)(*args, c) for c in chunks)
    return [t for part in results for t in part]


def _expression_training_inputs(dataset, mesh):
    labels = np.asarray(dataset.labels, dtype=np.int64)
    names, codes = np.unique(np.asarray(dataset.subjects, dtype=str), return_inverse=True)
    if len(names) < 2:
        raise TrainingError("need at least two subjects")
    present = np.unique(labels[labels >= 0])
    if len(present) < 2:
        raise TrainingError("need at least two expression classes")
    return labels, codes, tuple(str(n) for n in names)


def _train(dataset, cfg: TrainConfig, seed: int, kind: str, jobs: int = 1, mesh=None) -> LocalForest:
    from .mesh import compute_mean_shape, triangulate

    mean = compute_mean_shape(dataset.shapes)
    if mesh is None:
        mesh = triangulate(mean)
    labels, codes, names = _expression_training_inputs(dataset, mesh)
    ctx = dataset.context(mesh)
    n_classes = len(dataset.class_names)
    usable = np.flatnonzero(labels >= 0)
    ranges = estimate_ranges(ctx, usable, np.arange(mesh.n_triangles), cfg.counts,
                             np.random.default_rng([int(seed), 0]), cfg.range_fraction)
    log.info("growing %d %s trees on %d samples", cfg.n_trees, kind.upper(), len(usable))
    trees = run_parallel(_grow_many, range(cfg.n_trees), jobs, ctx, labels, codes, names, n_classes,
                         mesh, cfg, ranges, kind, int(seed))
    return LocalForest(trees, tuple(dataset.class_names), dataset.scheme, mesh, mean.points, cfg, ranges,
                       kind, names, int(seed))


def train_ls_rf(dataset, cfg: TrainConfig = TrainConfig(), seed: int = 0, jobs: int = 1, mesh=None) -> LocalForest:
    """Local-subspace forest: each tree restricted to a random connected facial mask."""
    return _train(dataset, cfg, seed, "ls", jobs, mesh)


def train_rs_rf(dataset, cfg: TrainConfig = TrainConfig(), seed: int = 0, jobs: int = 1, mesh=None) -> LocalForest:
    """Classical random-subspace baseline: every tree sees the whole mesh."""
    return _train(dataset, cfg, seed, "rs", jobs, mesh)
