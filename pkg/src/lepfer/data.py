"""Datasets: manifest ingestion, a synthetic face generator and occlusions.

Manifest format (CSV, UTF-8)::

    # dataset: ckplus
    # classes: neutral,happy,sad,surprise,anger,disgust,fear
    # aus: 1,2,4,12
    # scheme: ls49
    image,subject,expression,landmarks,aus
    img/0001.pgm,s01,happy,lm/0001.txt,1:0;2:0;4:?;12:1

Optional ``# key: value`` lines precede the header.  Paths are relative to
the manifest's directory.  ``expression`` may be ``-`` (unlabelled) and
``aus`` may be empty; every AU value is ``0``, ``1`` or ``?``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from .channels import compute_channels, hog_descriptors, stack_channels
from .features import FeatureContext
from .mesh import DEFAULT_SCHEME, Shape, get_scheme, interocular_distance, read_landmarks, write_landmarks

log = logging.getLogger(__name__)

DEFAULT_CLASSES = ("neutral", "happy", "sad", "surprise", "anger", "disgust", "fear")
HEADER = ["image", "subject", "expression", "landmarks", "aus"]
UNKNOWN = -1


class DataError(ValueError):
    pass


# ------------------------------------------------------------------- images


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_pgm(path, image) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


# ------------------------------------------------------------------ dataset


@dataclass
class Dataset:
    images: list
    shapes: list
    labels: np.ndarray
    subjects: np.ndarray
    class_names: tuple[str, ...] = DEFAULT_CLASSES
    au_names: tuple[str, ...] = ()
    au_labels: np.ndarray | None = None  # (n, n_aus) with 1, 0 or UNKNOWN
    scheme: str = DEFAULT_SCHEME
    dataset_id: str = "dataset"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subjects = np.asarray(self.subjects, dtype=str)
        if self.au_labels is None:
            self.au_labels = np.full((len(self.labels), len(self.au_names)), UNKNOWN, dtype=np.int8)
        if not (len(self.images) == len(self.shapes) == len(self.labels) == len(self.subjects)):
            raise DataError("images, shapes, labels and subjects must have equal lengths")

    def __len__(self) -> int:
        return len(self.labels)

    @cached_property
    def channels(self) -> list:
        return [compute_channels(im) for im in self.images]

    @cached_property
    def _stack(self):
        return stack_channels(self.channels)

    def context(self, mesh) -> FeatureContext:
        ctx = FeatureContext.build(self.shapes, mesh)
        ctx.channels, ctx.widths, ctx.heights = self._stack
        return ctx

    def descriptors(self) -> np.ndarray:
        """HOG descriptors at every landmark, (n, Np, 225)."""
        return np.stack([
            hog_descriptors(ch, s.points, interocular_distance(s)) for ch, s in zip(self.channels, self.shapes)
        ])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            [self.images[i] for i in idx], [self.shapes[i] for i in idx], self.labels[idx],
            self.subjects[idx], self.class_names, self.au_names, self.au_labels[idx], self.scheme,
            self.dataset_id,
        )

    def with_images(self, images, shapes=None) -> "Dataset":
        return Dataset(list(images), list(shapes if shapes is not None else self.shapes), self.labels,
                       self.subjects, self.class_names, self.au_names, self.au_labels, self.scheme,
                       self.dataset_id)


def merge_datasets(datasets, dataset_id: str = "merged") -> Dataset:
    """Union of expression datasets sharing a scheme and class list."""
    datasets = list(datasets)
    first = datasets[0]
    for d in datasets[1:]:
        if d.scheme != first.scheme or tuple(d.class_names) != tuple(first.class_names):
            raise DataError("datasets to merge must share landmark scheme and classes")
    return Dataset(
        [im for d in datasets for im in d.images],
        [s for d in datasets for s in d.shapes],
        np.concatenate([d.labels for d in datasets]),
        np.concatenate([[f"{d.dataset_id}/{s}" for s in d.subjects] for d in datasets]),
        first.class_names, (), None, first.scheme, dataset_id,
    )


# ----------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestRecord:
    image: str
    subject: str
    expression: str
    landmarks: str
    aus: tuple[tuple[str, int], ...] = ()  # (name, 1 | 0 | UNKNOWN)


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)
    dataset_id: str = "dataset"
    class_names: tuple[str, ...] = DEFAULT_CLASSES
    au_names: tuple[str, ...] = ()
    scheme: str = DEFAULT_SCHEME
    root: Path = Path(".")

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"# dataset: {self.dataset_id}\n")
        buf.write(f"# classes: {','.join(self.class_names)}\n")
        if self.au_names:
            buf.write(f"# aus: {','.join(self.au_names)}\n")
        buf.write(f"# scheme: {self.scheme}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.records:
            aus = ";".join(f"{n}:{'?' if v == UNKNOWN else v}" for n, v in r.aus)
            w.writerow([r.image, r.subject, r.expression, r.landmarks, aus])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    def load_dataset(self) -> Dataset:
        images, shapes, labels, subjects = [], [], [], []
        au_idx = {n: i for i, n in enumerate(self.au_names)}
        au = np.full((len(self.records), len(self.au_names)), UNKNOWN, dtype=np.int8)
        for i, r in enumerate(self.records):
            img_path, lm_path = self.root / r.image, self.root / r.landmarks
            for p in (img_path, lm_path):
                if not p.exists():
                    raise DataError(f"record {i + 1}: missing file {p}")
            images.append(read_image(img_path))
            try:
                shapes.append(read_landmarks(lm_path, self.scheme))
            except ValueError as exc:
                raise DataError(f"record {i + 1}: {exc}") from exc
            labels.append(UNKNOWN if r.expression == "-" else self.class_names.index(r.expression))
            subjects.append(r.subject)
            for name, v in r.aus:
                au[i, au_idx[name]] = v
        return Dataset(images, shapes, np.array(labels, dtype=np.int64), np.array(subjects, dtype=str),
                       self.class_names, self.au_names, au, self.scheme, self.dataset_id)


def _au_sort_key(name: str):
    return (0, int(name), "") if name.isdigit() else (1, 0, name)


def parse_au_field(text: str, lineno: int, allowed=None) -> tuple[tuple[str, int], ...]:
    text = text.strip()
    if not text:
        return ()
    out, seen = [], set()
    for item in text.split(";"):
        name, sep, val = item.strip().partition(":")
        name, val = name.strip(), val.strip()
        if not sep or not name or val not in ("0", "1", "?"):
            raise DataError(f"line {lineno}: malformed AU entry {item!r} (expected NAME:0|1|?)")
        if allowed is not None and name not in allowed:
            raise DataError(f"line {lineno}: AU {name!r} is not in the configured AU list")
        if name in seen:
            raise DataError(f"line {lineno}: AU {name!r} listed twice")
        seen.add(name)
        out.append((name, UNKNOWN if val == "?" else int(val)))
    return tuple(out)


def parse_manifest(text: str, root=".") -> DatasetManifest:
    meta: dict[str, str] = {}
    lines = text.splitlines()
    lineno = 0
    while lineno < len(lines) and (lines[lineno].startswith("#") or not lines[lineno].strip()):
        line = lines[lineno].lstrip("#").strip()
        if line:
            key, sep, value = line.partition(":")
            if not sep:
                raise DataError(f"line {lineno + 1}: expected '# key: value'")
            meta[key.strip().lower()] = value.strip()
        lineno += 1
    if lineno >= len(lines):
        raise DataError("manifest has no header row")
    header = next(csv.reader([lines[lineno]]))
    if [h.strip() for h in header] != HEADER:
        raise DataError(f"line {lineno + 1}: header must be {','.join(HEADER)}")
    classes = tuple(c.strip() for c in meta["classes"].split(",")) if "classes" in meta else DEFAULT_CLASSES
    allowed = tuple(a.strip() for a in meta["aus"].split(",")) if meta.get("aus") else None
    scheme = meta.get("scheme", DEFAULT_SCHEME)
    try:
        get_scheme(scheme)
    except KeyError as exc:
        raise DataError(str(exc)) from None
    records, seen, found_aus = [], set(), []
    for offset, row in enumerate(csv.reader(lines[lineno + 1 :])):
        n = lineno + 2 + offset
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise DataError(f"line {n}: expected {len(HEADER)} fields, got {len(row)}")
        image, subject, expr, lm, aus = (c.strip() for c in row)
        if not subject:
            raise DataError(f"line {n}: empty subject id")
        if expr != "-" and expr not in classes:
            raise DataError(f"line {n}: unknown expression label {expr!r}")
        if (image, subject) in seen:
            raise DataError(f"line {n}: duplicate (image, subject) pair ({image}, {subject})")
        seen.add((image, subject))
        parsed = parse_au_field(aus, n, allowed)
        found_aus.extend(a for a, _ in parsed if a not in found_aus)
        records.append(ManifestRecord(image, subject, expr, lm, parsed))
    au_names = allowed if allowed is not None else tuple(sorted(found_aus, key=_au_sort_key))
    return DatasetManifest(records, meta.get("dataset", "dataset"), classes, au_names, scheme, Path(root))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    return parse_manifest(path.read_text(), path.parent)


def write_dataset(dataset: Dataset, directory) -> Path:
    """Write images (PGM), landmark files and a manifest; returns the manifest path."""
    out = Path(directory)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "landmarks").mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(len(dataset)):
        img = f"images/{i:05d}.pgm"
        lm = f"landmarks/{i:05d}.txt"
        write_pgm(out / img, dataset.images[i])
        write_landmarks(out / lm, dataset.shapes[i])
        lab = dataset.labels[i]
        expr = "-" if lab < 0 else dataset.class_names[lab]
        aus = tuple((n, int(v)) for n, v in zip(dataset.au_names, dataset.au_labels[i]))
        records.append(ManifestRecord(img, str(dataset.subjects[i]), expr, lm, aus))
    man = DatasetManifest(records, dataset.dataset_id, tuple(dataset.class_names), tuple(dataset.au_names),
                          dataset.scheme, out)
    path = out / "manifest.csv"
    man.write(path)
    return path


# ---------------------------------------------------------------- synthetic

# action vocabulary over a region's landmarks (template coordinates, iod units)
AU_ACTIONS: dict[str, tuple[str, str]] = {
    "1": ("brows", "inner_raise"),
    "2": ("brows", "outer_raise"),
    "4": ("brows", "lower_pinch"),
    "5": ("eyes", "open"),
    "6": ("eyes", "raise"),
    "7": ("eyes", "close"),
    "9": ("nose", "raise"),
    "10": ("mouth", "upper_raise"),
    "12": ("mouth", "corners_up"),
    "15": ("mouth", "corners_down"),
    "20": ("mouth", "widen"),
    "25": ("mouth", "open"),
}
DEFAULT_AUS = tuple(AU_ACTIONS)
EXPRESSION_AUS: dict[str, tuple[str, ...]] = {
    "neutral": (),
    "happy": ("6", "12"),
    "sad": ("1", "4", "15"),
    "surprise": ("1", "2", "5", "25"),
    "anger": ("4", "7"),
    "disgust": ("9", "10"),
    "fear": ("1", "2", "4", "5", "20", "25"),
}
REGION_ORDER = ("brows", "eyes", "nose", "mouth")
_STROKES_49 = [
    (tuple(range(0, 5)), False), (tuple(range(5, 10)), False), (tuple(range(10, 14)), False),
    (tuple(range(14, 19)), False), (tuple(range(19, 25)), True), (tuple(range(25, 31)), True),
    (tuple(range(31, 43)), True), (tuple(range(43, 49)), True),
]


def _action_field(template: np.ndarray, idx, action: str) -> np.ndarray:
    """Unit-amplitude displacement of ``idx`` landmarks, (len(idx), 2)."""
    p = template[list(idx)]
    d = np.zeros_like(p)
    if len(p) == 0:
        return d
    c = p.mean(axis=0)
    rel = p - c
    sx = np.abs(rel[:, 0]).max() or 1.0
    sy = np.abs(rel[:, 1]).max() or 1.0
    lateral = np.abs(p[:, 0]) / (np.abs(p[:, 0]).max() or 1.0)  # 0 at the face midline
    if action == "inner_raise":
        d[:, 1] = -(1.0 - lateral)
    elif action == "outer_raise":
        d[:, 1] = -lateral
    elif action == "lower_pinch":
        d[:, 1] = 0.8
        d[:, 0] = -0.5 * np.sign(p[:, 0]) * (1.0 - lateral)
    elif action == "open":
        d[:, 1] = rel[:, 1] / sy
    elif action == "close":
        d[:, 1] = -rel[:, 1] / sy
    elif action == "raise":
        d[:, 1] = -1.0
    elif action == "upper_raise":
        d[:, 1] = -np.clip(-rel[:, 1] / sy, 0, None) - 0.3
    elif action == "corners_up":
        d[:, 1] = -np.abs(rel[:, 0] / sx) ** 2
        d[:, 0] = 0.4 * rel[:, 0] / sx
    elif action == "corners_down":
        d[:, 1] = np.abs(rel[:, 0] / sx) ** 2
    elif action == "widen":
        d[:, 0] = rel[:, 0] / sx
    else:
        raise ValueError(f"unknown action {action!r}")
    return d


@dataclass(frozen=True)
class SyntheticConfig:
    """Procedural faces whose expression signal lives in chosen regions.

    ``signal`` maps a region (brows, eyes, nose, mouth) to a strength that
    scales both its landmark deformations and its class-specific grating;
    absent regions carry no expression information.  ``noise`` is the pixel
    noise standard deviation in grey levels; ``landmark_noise`` (iod units)
    perturbs the reported landmarks but not the rendered face.
    """

    n_subjects: int = 10
    samples_per_class: int = 10
    classes: tuple[str, ...] = DEFAULT_CLASSES
    scheme: str = DEFAULT_SCHEME
    image_size: int = 64
    iod_px: float = 24.0
    signal: dict = field(default_factory=lambda: {r: 1.0 for r in REGION_ORDER})
    deformation: float = 0.08
    texture: float = 40.0
    grating_period: float = 4.0
    noise: float = 0.0
    landmark_noise: float = 0.0
    subject_jitter: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if len(self.classes) < 2 or self.n_subjects < 2 or self.samples_per_class < 1:
            raise ValueError("synthetic data needs >= 2 classes, >= 2 subjects and >= 1 sample per class")


def _soft_box(xx, yy, x0, y0, x1, y1, edge):
    fx = np.clip(np.minimum(xx - x0, x1 - xx) / edge + 0.5, 0, 1)
    fy = np.clip(np.minimum(yy - y0, y1 - yy) / edge + 0.5, 0, 1)
    return fx * fy


def _stroke_mask(xx, yy, pts, closed, width):
    segs = list(zip(pts[:-1], pts[1:])) + ([(pts[-1], pts[0])] if closed else [])
    d2 = np.full(xx.shape, np.inf)
    for a, b in segs:
        ab = b - a
        L2 = float(ab @ ab) or 1e-12
        t = np.clip(((xx - a[0]) * ab[0] + (yy - a[1]) * ab[1]) / L2, 0, 1)
        px, py = a[0] + t * ab[0], a[1] + t * ab[1]
        d2 = np.minimum(d2, (xx - px) ** 2 + (yy - py) ** 2)
    return np.exp(-0.5 * d2 / width**2)


def render_face(points: np.ndarray, scheme: str, size: int, iod_px: float, tone: float,
                gratings, rng: np.random.Generator, noise: float = 0.0, period: float = 4.0) -> np.ndarray:
    """Draw one face; ``gratings`` is a list of (region indices, angle, amplitude)."""
    sch = get_scheme(scheme)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.full((size, size), 90.0)
    le = points[list(sch.left_eye)].mean(axis=0)
    re = points[list(sch.right_eye)].mean(axis=0)
    mid = 0.5 * (le + re)
    cx, cy = mid[0], mid[1] + 0.45 * iod_px
    r = np.hypot((xx - cx) / (1.15 * iod_px), (yy - cy) / (1.5 * iod_px))
    img += (60.0 + tone) * np.clip((1.0 - r) * 8.0, 0, 1)
    if scheme == "ls49":
        for idx, closed in _STROKES_49:
            img -= 55.0 * _stroke_mask(xx, yy, points[list(idx)], closed, 0.7)
    for p in points:
        img -= 25.0 * np.exp(-0.5 * ((xx - p[0]) ** 2 + (yy - p[1]) ** 2) / 1.2**2)
    for idx, angle, amp in gratings:
        if amp == 0 or len(idx) == 0:
            continue
        rp = points[list(idx)]
        pad = 0.18 * iod_px
        lo, hi = rp.min(axis=0) - pad, rp.max(axis=0) + pad
        win = _soft_box(xx, yy, lo[0], lo[1], hi[0], hi[1], 2.0)
        phase = rng.uniform(0, 2 * np.pi)
        # wave vector perpendicular to the stripes: gradients point along ``angle``
        img += amp * win * np.sin(2 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / period + phase)
    if noise > 0:
        img += rng.normal(0.0, noise, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def expression_shape(template: np.ndarray, scheme: str, expression: str, cfg: SyntheticConfig,
                     intensity: float = 1.0) -> tuple[np.ndarray, set]:
    """Template deformed by the expression's active actions; returns (points, active AUs)."""
    sch = get_scheme(scheme)
    pts = template.copy()
    active = set()
    for au in EXPRESSION_AUS.get(expression, ()):
        region, action = AU_ACTIONS[au]
        strength = float(cfg.signal.get(region, 0.0))
        idx = sch.regions.get(region, ())
        if strength <= 0 or len(idx) == 0:
            continue
        disp = _action_field(sch.template, idx, action)
        if not np.any(disp):
            continue
        pts[list(idx)] += cfg.deformation * strength * intensity * disp
        active.add(au)
    return pts, active


def synth_generate(cfg: SyntheticConfig = SyntheticConfig()) -> Dataset:
    """Deterministic procedural expression dataset with AU labels.

    With ``noise = 0`` every class is separable by construction: each class
    has a distinct grating orientation in every signal region.
    """
    rng = np.random.default_rng(cfg.seed)
    sch = get_scheme(cfg.scheme)
    L = len(cfg.classes)
    size, iod = cfg.image_size, cfg.iod_px
    centre = np.array([size / 2 - 0.5, 0.36 * size])
    images, shapes, labels, subjects, aus = [], [], [], [], []
    for s in range(cfg.n_subjects):
        base = sch.template + rng.normal(0.0, cfg.subject_jitter, sch.template.shape)
        scale = iod * rng.uniform(0.95, 1.05)
        shift = centre + rng.uniform(-1.5, 1.5, 2)
        tone = rng.uniform(-15, 15)
        for c, name in enumerate(cfg.classes):
            for _ in range(cfg.samples_per_class):
                intensity = rng.uniform(0.8, 1.0)
                pts, active = expression_shape(base, cfg.scheme, name, cfg, intensity)
                pix = pts * scale + shift
                gratings = []
                for k, region in enumerate(REGION_ORDER):
                    strength = float(cfg.signal.get(region, 0.0))
                    if strength > 0:
                        angle = np.pi * c / L + 0.5 * np.pi / L * k
                        gratings.append((sch.regions.get(region, ()), angle, cfg.texture * strength))
                images.append(render_face(pix, cfg.scheme, size, scale, tone, gratings, rng, cfg.noise,
                                          cfg.grating_period))
                if cfg.landmark_noise > 0:
                    # reported landmarks drift from the rendered face, like an imperfect aligner
                    pix = pix + rng.normal(0.0, cfg.landmark_noise * scale, pix.shape)
                shapes.append(Shape(pix, cfg.scheme))
                labels.append(c)
                subjects.append(f"s{s:02d}")
                aus.append([1 if a in active else 0 for a in DEFAULT_AUS])
    return Dataset(images, shapes, np.array(labels), np.array(subjects), tuple(cfg.classes), DEFAULT_AUS,
                   np.array(aus, dtype=np.int8).reshape(len(labels), len(DEFAULT_AUS)), cfg.scheme,
                   f"synthetic-{cfg.seed}")


# ---------------------------------------------------------------- occlusion


class Occlusion(NamedTuple):
    image: np.ndarray
    box: tuple[int, int, int, int]  # inclusive pixel bounds x0, y0, x1, y1
    shape: Shape


def occlusion_box(shape: Shape, region: str, margin: float, width: int, height: int):
    sch = get_scheme(shape.scheme)
    if region == "eyes":
        idx = tuple(sch.regions.get("eyes", ())) + tuple(sch.regions.get("brows", ()))
    elif region == "mouth":
        idx = tuple(sch.regions.get("mouth", ()))
    else:
        raise ValueError(f"unknown occlusion region {region!r} (expected eyes or mouth)")
    if not idx:
        raise DataError(f"scheme {shape.scheme} has no landmarks for region {region!r}")
    p = shape.points[list(idx)]
    x0 = int(np.floor(p[:, 0].min() - margin + 0.5))
    y0 = int(np.floor(p[:, 1].min() - margin + 0.5))
    x1 = int(np.floor(p[:, 0].max() + margin + 0.5))
    y1 = int(np.floor(p[:, 1].max() + margin + 0.5))
    if x1 < 0 or y1 < 0 or x0 >= width or y0 >= height:
        raise DataError("occlusion box lies entirely outside the image")
    return max(x0, 0), max(y0, 0), min(x1, width - 1), min(y1, height - 1)


def occlude(image, shape: Shape, region: str, margin: float = 20, rng: np.random.Generator | None = None,
            jitter: bool = False) -> Occlusion:
    """Overlay uniform noise on the region's bounding box grown by ``margin`` pixels.

    With ``jitter`` the landmarks inside the box move by N(0, (0.1 iod)^2),
    standing in for an aligner that drifts on occluded faces.
    """
    rng = rng if rng is not None else np.random.default_rng()
    img = np.array(image, copy=True)
    h, w = img.shape
    x0, y0, x1, y1 = occlusion_box(shape, region, margin, w, h)
    patch = rng.integers(0, 256, (y1 - y0 + 1, x1 - x0 + 1))
    img[y0 : y1 + 1, x0 : x1 + 1] = patch.astype(img.dtype) if img.dtype == np.uint8 else patch
    out_shape = shape
    if jitter:
        pts = np.array(shape.points)
        inside = (pts[:, 0] >= x0 - 0.5) & (pts[:, 0] <= x1 + 0.5) & (pts[:, 1] >= y0 - 0.5) & (pts[:, 1] <= y1 + 0.5)
        sigma = 0.1 * interocular_distance(shape)
        pts[inside] += rng.normal(0.0, sigma, (int(inside.sum()), 2))
        out_shape = Shape(pts, shape.scheme)
    return Occlusion(img, (x0, y0, x1, y1), out_shape)


def occlude_dataset(dataset: Dataset, region: str, margin: float = 20, seed: int = 0,
                    jitter: bool = False) -> Dataset:
    if region == "none":
        return dataset
    rng = np.random.default_rng([int(seed), 7])
    imgs, shapes = [], []
    for im, sh in zip(dataset.images, dataset.shapes):
        o = occlude(im, sh, region, margin, rng, jitter)
        imgs.append(o.image)
        shapes.append(o.shape)
    return dataset.with_images(imgs, shapes)
