"""Hierarchical tied-weight denoising autoencoder and local confidences.

Layer L1 holds one autoencoder per landmark (225 -> 125 on HOG descriptors);
layer L2 holds one per face subpart, fed with the concatenated L1 codes of
the subpart's landmarks (125 N -> 65 N).  A landmark's reconstruction error
runs the full stack h1, h2, g2, g1; it is turned into a confidence in (0, 1]
with ``exp(-error / sigma0)`` where ``sigma0`` is the median clean error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dger

from . import container
from .channels import HOG_DIM
from .mesh import GROUP_NAMES, FacialMesh, SubpartGrouping

log = logging.getLogger(__name__)

NETWORK_KIND = "confidence-network"
L1_HIDDEN = 125
L2_UNITS_PER_POINT = 65


class DivergenceError(RuntimeError):
    pass


class UncalibratedError(RuntimeError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class AeTrainConfig:
    updates: int = 15000
    learning_rate: float = 0.01
    weight_decay: float = 0.001
    noise: float = 0.25
    alternate_classes: bool = True

    def __post_init__(self):
        if self.updates < 0 or self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("training settings must be non-negative")
        if not 0 <= self.noise < 1:
            raise ValueError("masking-noise fraction must lie in [0, 1)")


@dataclass
class AutoencoderLayer:
    w: np.ndarray  # (hidden, input)
    b: np.ndarray  # (hidden,)
    c: np.ndarray  # (input,)

    @property
    def n_input(self) -> int:
        return self.w.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w.shape[0]

    @classmethod
    def init(cls, n_input: int, n_hidden: int, rng: np.random.Generator) -> "AutoencoderLayer":
        bound = 1.0 / np.sqrt(n_input)
        return cls(rng.uniform(-bound, bound, (n_hidden, n_input)), np.zeros(n_hidden), np.zeros(n_input))

    def encode(self, x):
        return sigmoid(x @ self.w.T + self.b)

    def decode(self, y):
        return y @ self.w + self.c

    def reconstruct(self, x):
        return self.decode(self.encode(x))

    def objective(self, x_in, target, weight_decay: float = 0.0) -> float:
        r = self.reconstruct(x_in)
        return float(0.5 * np.sum((r - target) ** 2) + 0.5 * weight_decay * np.sum(self.w ** 2))

    def gradients(self, x_in, target, weight_decay: float = 0.0):
        """Loss and gradients of ``1/2 ||g(h(x_in)) - target||^2 + wd/2 ||w||^2``."""
        y = sigmoid(self.w @ x_in + self.b)
        r = self.w.T @ y + self.c
        d_r = r - target
        d_y = self.w @ d_r
        d_a = d_y * y * (1.0 - y)
        gw = np.outer(y, d_r) + np.outer(d_a, x_in) + weight_decay * self.w
        loss = 0.5 * float(d_r @ d_r)
        return loss, gw, d_a, d_r

    def copy(self) -> "AutoencoderLayer":
        return AutoencoderLayer(self.w.copy(), self.b.copy(), self.c.copy())


def _sample_order(n: int, updates: int, labels, alternate: bool, rng) -> np.ndarray:
    if labels is None or not alternate:
        return rng.integers(0, n, updates)
    labels = np.asarray(labels)
    classes = [np.flatnonzero(labels == c) for c in np.unique(labels[labels >= 0])]
    classes = [c for c in classes if len(c)]
    if not classes:
        return rng.integers(0, n, updates)
    order = np.empty(updates, dtype=np.int64)
    for u in range(updates):
        pool = classes[u % len(classes)]
        order[u] = pool[rng.integers(len(pool))]
    return order


def train_layer(inputs, n_hidden: int, cfg: AeTrainConfig, rng: np.random.Generator,
                labels=None, layer: AutoencoderLayer | None = None,
                loss_trace: list | None = None) -> AutoencoderLayer:
    """Plain SGD, one presentation per update, masking noise on the input.

    The objective is half the squared error against the clean input plus
    weight decay; the half keeps the decoder's rank-1 steps below the
    oscillation limit at the default learning rate.  ``labels`` (optional)
    enables class-alternating sampling.
    """
    X = np.asarray(inputs, dtype=np.float64)
    n, d = X.shape
    layer = layer.copy() if layer is not None else AutoencoderLayer.init(d, n_hidden, rng)
    layer.w = np.ascontiguousarray(layer.w, dtype=np.float64)
    if layer.n_input != d:
        raise ValueError(f"layer expects {layer.n_input}-d inputs, got {d}")
    order = _sample_order(n, cfg.updates, labels, cfg.alternate_classes, rng)
    keep = rng.random((cfg.updates, d)) >= cfg.noise
    lr, wd = cfg.learning_rate, cfg.weight_decay
    w, b, c = layer.w, layer.b, layer.c
    wt = w.T
    for u in range(cfg.updates):
        x = X[order[u]]
        xn = x * keep[u]
        y = sigmoid(w @ xn + b)
        r = w.T @ y + c
        d_r = r - x
        d_a = (w @ d_r) * y * (1.0 - y)
        loss = 0.5 * float(d_r @ d_r)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at update {u} (lr={lr}, input norm={np.linalg.norm(x):.3g})")
        if loss_trace is not None:
            loss_trace.append(loss)
        # in-place rank-1 updates on w.T (Fortran-ordered view of w)
        w *= 1.0 - lr * wd
        dger(-lr, d_r, y, a=wt, overwrite_a=True)
        dger(-lr, xn, d_a, a=wt, overwrite_a=True)
        b -= lr * d_a
        c -= lr * d_r
    return layer


@dataclass
class ConfidenceNetwork:
    l1: list[AutoencoderLayer]
    l2: list[AutoencoderLayer]
    grouping: SubpartGrouping
    sigma0: np.ndarray | None = None
    scheme: str = "ls49"
    config: AeTrainConfig = field(default_factory=AeTrainConfig)
    center: np.ndarray | None = None  # (Np, d) input standardization
    scale: np.ndarray | None = None

    @property
    def n_points(self) -> int:
        return len(self.l1)

    @classmethod
    def init(cls, n_points: int, grouping: SubpartGrouping, rng, scheme="ls49",
             n_input: int = HOG_DIM, l1_hidden: int = L1_HIDDEN, l2_per_point: int = L2_UNITS_PER_POINT):
        grouping.validate(n_points)
        l1 = [AutoencoderLayer.init(n_input, l1_hidden, rng) for _ in range(n_points)]
        l2 = [AutoencoderLayer.init(l1_hidden * len(g), l2_per_point * len(g), rng)
              for g in grouping.groups.values()]
        return cls(l1, l2, grouping, None, scheme)

    def standardize(self, descriptors) -> np.ndarray:
        """Map raw descriptors to the network's input space, (..., Np, d)."""
        X = np.asarray(descriptors, dtype=np.float64)
        if X.shape[-2:] != (self.n_points, self.l1[0].n_input):
            raise ValueError(f"expected descriptors of shape {(self.n_points, self.l1[0].n_input)}, got {X.shape}")
        if self.center is None:
            return X
        return (X - self.center) / self.scale

    def reconstruct(self, inputs) -> np.ndarray:
        """Full-stack reconstructions of one face's standardized inputs, (Np, d).

        A landmark in several subparts gets the mean of its reconstructions;
        one in none falls back to its L1 autoencoder alone.
        """
        X = np.asarray(inputs, dtype=np.float64)
        if X.shape != (self.n_points, self.l1[0].n_input):
            raise ValueError(f"expected inputs of shape {(self.n_points, self.l1[0].n_input)}, got {X.shape}")
        codes = [layer.encode(x) for layer, x in zip(self.l1, X)]
        acc = np.zeros_like(X)
        hits = np.zeros(self.n_points)
        for layer2, idx in zip(self.l2, self.grouping.groups.values()):
            xi = np.concatenate([codes[k] for k in idx])
            xi_rec = layer2.reconstruct(xi)
            for j, k in enumerate(idx):
                h = self.l1[k].n_hidden
                acc[k] += self.l1[k].decode(xi_rec[j * h : (j + 1) * h])
                hits[k] += 1
        for k in np.flatnonzero(hits == 0):
            acc[k] = self.l1[k].decode(codes[k])
            hits[k] = 1
        return acc / hits[:, None]

    def point_errors(self, descriptors) -> np.ndarray:
        """Squared reconstruction error per landmark of one face's raw descriptors."""
        X = self.standardize(descriptors)
        return np.sum((X - self.reconstruct(X)) ** 2, axis=1)

    def point_confidence(self, errors) -> np.ndarray:
        if self.sigma0 is None:
            raise UncalibratedError("network has no sigma0; run calibrate() first")
        return np.exp(-np.asarray(errors, dtype=float) / self.sigma0)

    # ------------------------------------------------------------ storage

    def to_bytes(self) -> bytes:
        arrays = {}
        for k, layer in enumerate(self.l1):
            arrays[f"l1_{k:03d}_w"], arrays[f"l1_{k:03d}_b"], arrays[f"l1_{k:03d}_c"] = layer.w, layer.b, layer.c
        for m, layer in enumerate(self.l2):
            arrays[f"l2_{m}_w"], arrays[f"l2_{m}_b"], arrays[f"l2_{m}_c"] = layer.w, layer.b, layer.c
        if self.sigma0 is not None:
            arrays["sigma0"] = self.sigma0
        if self.center is not None:
            arrays["center"], arrays["scale"] = self.center, self.scale
        meta = {
            "n_points": self.n_points,
            "groups": {k: list(v) for k, v in self.grouping.groups.items()},
            "scheme": self.scheme,
            "config": {k: getattr(self.config, k) for k in AeTrainConfig.__dataclass_fields__},
        }
        return container.dumps(NETWORK_KIND, meta, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ConfidenceNetwork":
        _, meta, a = container.loads(data, NETWORK_KIND)
        grouping = SubpartGrouping({g: tuple(meta["groups"][g]) for g in GROUP_NAMES})
        l1 = [AutoencoderLayer(a[f"l1_{k:03d}_w"], a[f"l1_{k:03d}_b"], a[f"l1_{k:03d}_c"])
              for k in range(meta["n_points"])]
        l2 = [AutoencoderLayer(a[f"l2_{m}_w"], a[f"l2_{m}_b"], a[f"l2_{m}_c"]) for m in range(len(GROUP_NAMES))]
        return cls(l1, l2, grouping, a.get("sigma0"), meta["scheme"], AeTrainConfig(**meta["config"]),
                   a.get("center"), a.get("scale"))

    def save(self, path) -> bytes:
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return data

    @classmethod
    def load(cls, path) -> "ConfidenceNetwork":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def encode_decode(net: ConfidenceNetwork, descriptors) -> np.ndarray:
    """Reconstruction of one face's descriptors, in the network's standardized space."""
    return net.reconstruct(net.standardize(descriptors))


def point_error(net: ConfidenceNetwork, descriptors, k: int) -> float:
    return float(net.point_errors(descriptors)[k])


def point_confidence(net: ConfidenceNetwork, error, k: int | None = None):
    """``exp(-e / sigma0[k])``; with ``k=None`` ``error`` is a per-landmark vector."""
    if net.sigma0 is None:
        raise UncalibratedError("network has no sigma0; run calibrate() first")
    s = net.sigma0 if k is None else net.sigma0[k]
    return np.exp(-np.asarray(error, dtype=float) / s)


def calibrate(net: ConfidenceNetwork, descriptors, min_images: int = 30) -> np.ndarray:
    """Set ``sigma0`` to the per-landmark median error on clean validation faces."""
    D = np.asarray(descriptors, dtype=np.float64)
    if D.ndim != 3 or len(D) == 0:
        raise ValueError("calibration needs a non-empty (n, Np, d) descriptor array")
    if len(D) < min_images:
        log.warning("calibrating on %d images (fewer than %d)", len(D), min_images)
    errors = np.stack([net.point_errors(x) for x in D])
    sigma0 = np.median(errors, axis=0)
    if np.any(sigma0 <= 0):
        raise ValueError("median clean error is zero for some landmark; cannot calibrate")
    net.sigma0 = sigma0
    return sigma0


def triangle_confidence(alpha, mesh: FacialMesh) -> np.ndarray:
    """Each triangle takes the least confident of its three vertices."""
    a = np.asarray(alpha, dtype=float)
    return a[np.asarray(mesh.triangles)].min(axis=1)


def standardization(descriptors, floor: float = 0.1):
    """Per-landmark, per-dimension mean and spread of training descriptors.

    Raw HOG entries are histogram shares of order 1/225; unit-scale inputs
    keep the sigmoid units in their working range.  Spreads are floored at
    ``floor`` times the landmark's median spread so near-constant bins do
    not dominate the error.
    """
    D = np.asarray(descriptors, dtype=np.float64)
    center = D.mean(axis=0)
    spread = D.std(axis=0)
    lo = floor * np.median(spread, axis=1, keepdims=True)
    return center, np.maximum(spread, np.where(lo > 0, lo, 1.0))


def train_network(descriptors, grouping: SubpartGrouping, cfg: AeTrainConfig = AeTrainConfig(),
                  seed: int = 0, labels=None, validation=None, scheme: str = "ls49",
                  jobs: int = 1) -> ConfidenceNetwork:
    """Layer-wise training: every L1 autoencoder, then every L2 on L1 codes.

    ``descriptors`` is (n, Np, 225) of clean faces; ``validation`` (same
    layout) calibrates sigma0 and defaults to the training descriptors.
    """
    raw = np.asarray(descriptors, dtype=np.float64)
    n, n_points, d = raw.shape
    grouping.validate(n_points)
    rng_init = np.random.default_rng([int(seed), 0])
    net = ConfidenceNetwork.init(n_points, grouping, rng_init, scheme, n_input=d)
    net.config = cfg
    net.center, net.scale = standardization(raw)
    D = net.standardize(raw)

    def fit_l1(ks):
        return [train_layer(D[:, k], net.l1[k].n_hidden, cfg, np.random.default_rng([int(seed), 1, k]),
                            labels, net.l1[k]) for k in ks]

    from .forest import run_parallel

    net.l1 = run_parallel(fit_l1, range(n_points), jobs)
    codes = [net.l1[k].encode(D[:, k]) for k in range(n_points)]  # each (n, h)
    for m, idx in enumerate(grouping.groups.values()):
        xi = np.concatenate([codes[k] for k in idx], axis=1)
        net.l2[m] = train_layer(xi, net.l2[m].n_hidden, cfg, np.random.default_rng([int(seed), 2, m]),
                                labels, net.l2[m])
    calibrate(net, raw if validation is None else validation)
    return net
