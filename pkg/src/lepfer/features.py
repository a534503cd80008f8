"""Binary split-candidate templates and their vectorized evaluation.

Templates
---------
PHI0  LEP component ``p(l | I, tau)`` of a first-layer model (AU trees only)
PHI1  landmark distance divided by the inter-ocular distance
PHI2  cosine or sine of the angle at a landmark between two others
PHI3  normalized integral histogram of one channel at a barycentric point

Candidates are held as parallel arrays (``kinds``, ``iparams``, ``fparams``)
rather than objects so that a whole node's worth of candidates, or a whole
forest's worth of nodes, is evaluated by one numpy call per template.

========  ===========================  =====================
template  iparams                      fparams
========  ===========================  =====================
PHI0      (label, triangle, model, 0)  unused
PHI1      (a, b, 0, 0)                 unused
PHI2      (a, b, c, lambda)            unused
PHI3      (triangle, channel, 0, 0)    (size, alpha, beta, gamma)
========  ===========================  =====================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import EPS_PER_PIXEL, IntegralChannels, stack_channels, window_bounds
from .mesh import FacialMesh, Shape, get_scheme

LEAF = -1
PHI0, PHI1, PHI2, PHI3 = 0, 1, 2, 3
N_TEMPLATES = 4
DEFAULT_COUNTS = (0, 40, 40, 160)
AU_COUNTS = (100, 0, 0, 0)
DEFAULT_THRESHOLDS = 25
SIZE_RANGE = (0.05, 0.5)


@dataclass
class FeatureContext:
    """Everything the evaluators read for a batch of ``n`` samples."""

    shapes: np.ndarray  # (n, Np, 2)
    iod: np.ndarray  # (n,)
    triangles: np.ndarray  # (Nt, 3)
    channels: np.ndarray | None = None  # (n, 9, H+1, W+1)
    widths: np.ndarray | None = None
    heights: np.ndarray | None = None
    lep: np.ndarray | None = None  # (n, n_models, Nt, L)

    @property
    def n_samples(self) -> int:
        return len(self.shapes)

    @classmethod
    def build(cls, shapes, mesh: FacialMesh, channels=None, lep=None) -> "FeatureContext":
        shapes = list(shapes)
        sch = get_scheme(shapes[0].scheme)
        pts = np.stack([s.points for s in shapes]).astype(np.float64)
        le = pts[:, list(sch.left_eye)].mean(axis=1)
        re = pts[:, list(sch.right_eye)].mean(axis=1)
        iod = np.hypot(*(le - re).T)
        stack = widths = heights = None
        if channels is not None:
            stack, widths, heights = stack_channels(list(channels))
        return cls(pts, iod, np.asarray(mesh.triangles), stack, widths, heights, lep)

    @classmethod
    def single(cls, shape: Shape, mesh: FacialMesh, channels: IntegralChannels | None = None, lep=None):
        chans = None if channels is None else [channels]
        lep_arr = None if lep is None else np.asarray(lep)[None]
        return cls.build([shape], mesh, chans, lep_arr)

    def subset(self, idx) -> "FeatureContext":
        idx = np.asarray(idx)
        take = lambda a: None if a is None else a[idx]  # noqa: E731
        return FeatureContext(
            self.shapes[idx], self.iod[idx], self.triangles, take(self.channels),
            take(self.widths), take(self.heights), take(self.lep),
        )


@dataclass(frozen=True)
class FeatureCandidate:
    template: int
    iparams: tuple[int, int, int, int]
    fparams: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    threshold: float = 0.0


@dataclass
class CandidateSet:
    kinds: np.ndarray
    iparams: np.ndarray
    fparams: np.ndarray

    def __len__(self) -> int:
        return len(self.kinds)

    @classmethod
    def empty(cls) -> "CandidateSet":
        return cls(np.zeros(0, np.int64), np.zeros((0, 4), np.int64), np.zeros((0, 4)))

    @classmethod
    def concat(cls, parts) -> "CandidateSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.kinds for p in parts]),
            np.concatenate([p.iparams for p in parts]),
            np.concatenate([p.fparams for p in parts]),
        )

    def to_list(self, thresholds=None) -> list[FeatureCandidate]:
        thr = np.zeros(len(self)) if thresholds is None else np.asarray(thresholds, float)
        return [
            FeatureCandidate(int(k), tuple(int(v) for v in ip), tuple(float(v) for v in fp), float(t))
            for k, ip, fp, t in zip(self.kinds, self.iparams, self.fparams, thr)
        ]


@dataclass(frozen=True)
class ThresholdRanges:
    """Per-template (min, max) threshold bounds."""

    lo: np.ndarray = field(default_factory=lambda: np.zeros(N_TEMPLATES))
    hi: np.ndarray = field(default_factory=lambda: np.ones(N_TEMPLATES))

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != (N_TEMPLATES,) or hi.shape != (N_TEMPLATES,):
            raise ValueError("threshold ranges need one (min, max) per template")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi)):
            raise ValueError("threshold range must be finite with min <= max")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


# ---------------------------------------------------------------- evaluators


def _phi1(ctx: FeatureContext, s, ip):
    P = ctx.shapes
    d = P[s, ip[:, 0]] - P[s, ip[:, 1]]
    return np.hypot(d[:, 0], d[:, 1]) / ctx.iod[s]


def _phi2(ctx: FeatureContext, s, ip):
    P = ctx.shapes
    fb = P[s, ip[:, 1]]
    u = P[s, ip[:, 0]] - fb
    v = P[s, ip[:, 2]] - fb
    nu = np.hypot(u[:, 0], u[:, 1])
    nv = np.hypot(v[:, 0], v[:, 1])
    denom = nu * nv
    ok = denom > 0
    safe = np.where(ok, denom, 1.0)
    cos = (u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]) / safe
    sin = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]) / safe
    out = np.where(ip[:, 3] == 1, cos, sin)
    return np.where(ok, out, 0.0)


def _phi3(ctx: FeatureContext, s, ip, fp):
    if ctx.channels is None:
        raise ValueError("appearance features need integral channels in the context")
    tri = ctx.triangles[ip[:, 0]]
    P = ctx.shapes
    pt = (
        fp[:, 1:2] * P[s, tri[:, 0]]
        + fp[:, 2:3] * P[s, tri[:, 1]]
        + fp[:, 3:4] * P[s, tri[:, 2]]
    )
    side = fp[:, 0] * ctx.iod[s]
    x0, y0, x1, y1, _ = window_bounds(pt[:, 0], pt[:, 1], side, ctx.widths[s], ctx.heights[s])
    S = ctx.channels
    ch = ip[:, 1]

    def box(c):
        return S[s, c, y1, x1] - S[s, c, y0, x1] - S[s, c, y1, x0] + S[s, c, y0, x0]

    area = np.maximum(x1 - x0, 0) * np.maximum(y1 - y0, 0)
    hist = box(ch)
    mag = box(np.zeros_like(ch))
    val = hist / (mag + EPS_PER_PIXEL * np.maximum(area, 1))
    return np.where(area > 0, val, 0.0)


def _phi0(ctx: FeatureContext, s, ip):
    if ctx.lep is None:
        raise ValueError("LEP features need a lep array in the context")
    return ctx.lep[s, ip[:, 2], ip[:, 1], ip[:, 0]]


def feature_values(ctx: FeatureContext, sample_ids, kinds, iparams, fparams) -> np.ndarray:
    """Element-wise evaluation: value ``e`` is candidate ``e`` on sample ``sample_ids[e]``."""
    s = np.asarray(sample_ids, dtype=np.int64)
    kinds = np.asarray(kinds)
    out = np.empty(len(s))
    for k in np.unique(kinds):
        sel = np.flatnonzero(kinds == k)
        ip, ss = iparams[sel], s[sel]
        if k == PHI1:
            out[sel] = _phi1(ctx, ss, ip)
        elif k == PHI2:
            out[sel] = _phi2(ctx, ss, ip)
        elif k == PHI3:
            out[sel] = _phi3(ctx, ss, ip, fparams[sel])
        elif k == PHI0:
            out[sel] = _phi0(ctx, ss, ip)
        else:
            raise ValueError(f"unknown feature template {k}")
    return out


def candidate_matrix(ctx: FeatureContext, sample_ids, cands: CandidateSet) -> np.ndarray:
    """Values of every candidate on every sample, shape (C, n)."""
    n, C = len(sample_ids), len(cands)
    vals = feature_values(
        ctx,
        np.tile(np.asarray(sample_ids), C),
        np.repeat(cands.kinds, n),
        np.repeat(cands.iparams, n, axis=0),
        np.repeat(cands.fparams, n, axis=0),
    )
    return vals.reshape(C, n)


# ----------------------------------------------------------- scalar helpers


def phi1(shape: Shape, a: int, b: int) -> float:
    ctx = FeatureContext.build([shape], _NO_MESH)
    return float(_phi1(ctx, np.zeros(1, np.int64), np.array([[a, b, 0, 0]]))[0])


def phi2(shape: Shape, a: int, b: int, c: int, lam: int) -> float:
    """cos (lam=1) or sin (lam=0) of the angle at ``b``; 0 for a zero-length ray."""
    if lam not in (0, 1):
        raise ValueError("lambda must be 0 or 1")
    ctx = FeatureContext.build([shape], _NO_MESH)
    return float(_phi2(ctx, np.zeros(1, np.int64), np.array([[a, b, c, lam]]))[0])


def phi3(ch: IntegralChannels, shape: Shape, mesh: FacialMesh, t: int, chan: int, sz: float,
         a: float, b: float, g: float) -> float:
    if sz <= 0:
        raise ValueError("window size must be positive")
    w = np.array([a, b, g])
    if np.any(w < -1e-12) or abs(w.sum() - 1) > 1e-9:
        raise ValueError("barycentric weights must lie on the simplex")
    ctx = FeatureContext.single(shape, mesh, ch)
    return float(_phi3(ctx, np.zeros(1, np.int64), np.array([[t, chan, 0, 0]]), np.array([[sz, a, b, g]]))[0])


def phi0(lep, label: int, t: int) -> float:
    """LEP component for ``(label, t)``; uncovered triangles read the uniform prior."""
    if not lep.covered[t]:
        return 1.0 / lep.probs.shape[1]
    return float(lep.probs[t, label])


class _NoMesh:
    triangles = np.zeros((0, 3), np.int64)


_NO_MESH = _NoMesh()


# ---------------------------------------------------------------- sampling


def mask_vertices(triangles: np.ndarray, mask) -> np.ndarray:
    return np.unique(np.asarray(triangles)[np.asarray(mask)].ravel())


def sample_candidates(mask, triangles, counts, rng: np.random.Generator) -> CandidateSet:
    """Draw geometric/appearance candidates restricted to ``mask`` triangles.

    ``counts`` gives the number of PHI0..PHI3 candidates; PHI0 must be zero
    here (see :func:`sample_lep_candidates`).
    """
    mask = np.asarray(mask, dtype=np.int64)
    if len(mask) == 0:
        raise ValueError("facial mask is empty")
    verts = mask_vertices(triangles, mask)
    nv = len(verts)
    if nv < 2:
        raise ValueError("facial mask has fewer than 2 distinct vertices")
    n0, n1, n2, n3 = counts
    if n0:
        raise ValueError("LEP candidates are sampled by sample_lep_candidates")
    parts = []
    if n1:
        pick = np.argsort(rng.random((n1, nv)), axis=1)[:, :2]
        ip = np.zeros((n1, 4), np.int64)
        ip[:, :2] = verts[pick]
        parts.append(CandidateSet(np.full(n1, PHI1), ip, np.zeros((n1, 4))))
    if n2:
        k = min(3, nv)
        pick = np.argsort(rng.random((n2, nv)), axis=1)[:, :k]
        ip = np.zeros((n2, 4), np.int64)
        # with only two vertices a and c coincide; b stays distinct from both
        ip[:, 0] = verts[pick[:, 0]]
        ip[:, 1] = verts[pick[:, 1]]
        ip[:, 2] = verts[pick[:, k - 1 if k == 3 else 0]]
        ip[:, 3] = rng.integers(0, 2, n2)
        parts.append(CandidateSet(np.full(n2, PHI2), ip, np.zeros((n2, 4))))
    if n3:
        ip = np.zeros((n3, 4), np.int64)
        ip[:, 0] = mask[rng.integers(0, len(mask), n3)]
        ip[:, 1] = rng.integers(0, 9, n3)
        fp = np.empty((n3, 4))
        fp[:, 0] = rng.uniform(*SIZE_RANGE, n3)
        fp[:, 1:] = rng.dirichlet(np.ones(3), n3)
        parts.append(CandidateSet(np.full(n3, PHI3), ip, fp))
    return CandidateSet.concat(parts)


def sample_lep_candidates(n: int, n_labels: int, n_triangles: int, n_models: int,
                          rng: np.random.Generator) -> CandidateSet:
    ip = np.zeros((n, 4), np.int64)
    ip[:, 0] = rng.integers(0, n_labels, n)
    ip[:, 1] = rng.integers(0, n_triangles, n)
    ip[:, 2] = rng.integers(0, n_models, n)
    return CandidateSet(np.full(n, PHI0), ip, np.zeros((n, 4)))


def sample_thresholds(lo: float, hi: float, n: int = DEFAULT_THRESHOLDS,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng()
    if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
        raise ValueError("invalid threshold range")
    return lo + (hi - lo) * rng.random(n)


def candidate_thresholds(cands: CandidateSet, ranges: ThresholdRanges, n: int,
                         rng: np.random.Generator) -> np.ndarray:
    """``n`` uniform thresholds per candidate within its template's range, (C, n)."""
    lo = ranges.lo[cands.kinds][:, None]
    hi = ranges.hi[cands.kinds][:, None]
    return lo + (hi - lo) * rng.random((len(cands), n))


def estimate_ranges(ctx: FeatureContext, sample_ids, triangles_all, counts,
                    rng: np.random.Generator, fraction: float = 0.1,
                    n_probe: int = 200) -> ThresholdRanges:
    """Per-template (min, max) of candidate values on a subsample of the data.

    PHI0 keeps the fixed [0, 1] range of a probability.
    """
    ids = np.asarray(sample_ids)
    m = max(1, int(round(fraction * len(ids))))
    sub = np.sort(rng.choice(ids, size=m, replace=False))
    lo, hi = np.zeros(N_TEMPLATES), np.ones(N_TEMPLATES)
    for k in (PHI1, PHI2, PHI3):
        if not counts[k]:
            continue
        probe = [0, 0, 0, 0]
        probe[k] = n_probe
        cands = sample_candidates(triangles_all, ctx.triangles, probe, rng)
        vals = candidate_matrix(ctx, sub, cands)
        lo[k], hi[k] = float(vals.min()), float(vals.max())
    return ThresholdRanges(lo, hi)
