"""Landmark schemes, shapes, the mean-shape triangulation and its geometry."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

GROUP_NAMES = ("left-eye", "right-eye", "nose", "left-mouth", "right-mouth")


class DegenerateShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LandmarkScheme:
    """Point-ordering convention for one landmark layout.

    ``template`` is a canonical frontal face in inter-ocular units (eye
    centres at (-0.5, 0) and (0.5, 0)); the synthetic generator draws from it.
    ``regions`` maps ``brows``/``eyes``/``nose``/``mouth`` to landmark indices.
    """

    name: str
    left_eye: tuple[int, ...]
    right_eye: tuple[int, ...]
    regions: dict[str, tuple[int, ...]]
    template: np.ndarray
    groups: dict[str, tuple[int, ...]]

    @property
    def n_points(self) -> int:
        return len(self.template)


def _ellipse(cx, cy, rx, ry, angles):
    a = np.asarray(angles, dtype=float)
    return np.stack([cx + rx * np.cos(a), cy + ry * np.sin(a)], axis=1)


def _template_49() -> np.ndarray:
    # image coordinates: x to the right, y downwards
    bx = np.linspace(-0.85, -0.15, 5)
    left_brow = np.stack([bx, -0.38 - 0.08 * np.sin(np.linspace(0.3, np.pi - 0.3, 5))], axis=1)
    right_brow = left_brow[::-1] * [-1, 1]
    bridge = np.array([[0.0, 0.02], [0.0, 0.17], [0.0, 0.32], [0.0, 0.46]])
    base = np.array([[-0.2, 0.56], [-0.1, 0.6], [0.0, 0.63], [0.1, 0.6], [0.2, 0.56]])
    eye_angles = np.pi + np.arange(6) * np.pi / 3  # outer corner first, clockwise on screen
    left_eye = _ellipse(-0.5, 0.0, 0.17, 0.07, eye_angles)
    right_eye = _ellipse(0.5, 0.0, 0.17, 0.07, -eye_angles)
    outer = _ellipse(0.0, 0.98, 0.4, 0.15, np.pi + np.arange(12) * np.pi / 6)
    inner = _ellipse(0.0, 0.98, 0.24, 0.05, np.pi + np.array([0, 1, 2, 3, 4, 5]) * np.pi / 3)
    pts = np.concatenate([left_brow, right_brow, bridge, base, left_eye, right_eye, outer, inner])
    # exact symmetry keeps the eye centres at (+-0.5, 0)
    return np.round(pts, 12)


def _template_toy5() -> np.ndarray:
    return np.array([[-0.5, 0.0], [0.5, 0.0], [0.0, 0.55], [-0.35, 0.95], [0.35, 0.95]])


_SCHEMES: dict[str, LandmarkScheme] = {}


def register_scheme(scheme: LandmarkScheme) -> LandmarkScheme:
    _SCHEMES[scheme.name] = scheme
    return scheme


def get_scheme(name: str) -> LandmarkScheme:
    try:
        return _SCHEMES[name]
    except KeyError:
        raise KeyError(f"unknown landmark scheme {name!r}; known: {sorted(_SCHEMES)}") from None


register_scheme(
    LandmarkScheme(
        name="ls49",
        left_eye=tuple(range(19, 25)),
        right_eye=tuple(range(25, 31)),
        regions={
            "brows": tuple(range(0, 10)),
            "nose": tuple(range(10, 19)),
            "eyes": tuple(range(19, 31)),
            "mouth": tuple(range(31, 49)),
        },
        template=_template_49(),
        groups={
            "left-eye": (0, 1, 2, 3, 4, 19, 20, 21, 22, 23, 24, 10),
            "right-eye": (5, 6, 7, 8, 9, 25, 26, 27, 28, 29, 30, 10),
            "nose": tuple(range(11, 19)),
            "left-mouth": (31, 32, 33, 34, 40, 41, 42, 43, 44, 48, 45),
            "right-mouth": (34, 35, 36, 37, 38, 39, 40, 45, 46, 47, 48),
        },
    )
)
register_scheme(
    LandmarkScheme(
        name="toy5",
        left_eye=(0,),
        right_eye=(1,),
        regions={"brows": (), "eyes": (0, 1), "nose": (2,), "mouth": (3, 4)},
        template=_template_toy5(),
        groups={
            "left-eye": (0,),
            "right-eye": (1,),
            "nose": (2,),
            "left-mouth": (3,),
            "right-mouth": (4,),
        },
    )
)

DEFAULT_SCHEME = "ls49"


def _iod(points: np.ndarray, scheme: LandmarkScheme) -> float:
    le = points[list(scheme.left_eye)].mean(axis=0)
    re = points[list(scheme.right_eye)].mean(axis=0)
    return float(np.hypot(*(le - re)))


@dataclass(frozen=True)
class Shape:
    points: np.ndarray
    scheme: str = DEFAULT_SCHEME

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"shape points must be (N, 2), got {pts.shape}")
        sch = get_scheme(self.scheme)
        if len(pts) != sch.n_points:
            raise ValueError(f"scheme {self.scheme} expects {sch.n_points} points, got {len(pts)}")
        if len(pts) < 3:
            raise ValueError("a shape needs at least 3 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite landmark coordinate")
        if _iod(pts, sch) <= 0:
            raise DegenerateShapeError("inter-ocular distance is zero")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class MeanShape:
    points: np.ndarray
    source_count: int
    scheme: str = DEFAULT_SCHEME


@dataclass(frozen=True)
class SubpartGrouping:
    groups: dict[str, tuple[int, ...]]

    def __post_init__(self):
        if tuple(self.groups) != GROUP_NAMES:
            missing = set(GROUP_NAMES) ^ set(self.groups)
            if missing:
                raise ValueError(f"grouping must define exactly {GROUP_NAMES}, mismatch on {sorted(missing)}")
            object.__setattr__(self, "groups", {g: self.groups[g] for g in GROUP_NAMES})
        for name, idx in self.groups.items():
            if len(idx) == 0:
                raise ValueError(f"group {name!r} is empty")

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.groups.values())

    def validate(self, n_points: int) -> None:
        for name, idx in self.groups.items():
            if any(i < 0 or i >= n_points for i in idx):
                raise ValueError(f"group {name!r} references a landmark outside 0..{n_points - 1}")

    @classmethod
    def for_scheme(cls, scheme: str) -> "SubpartGrouping":
        return cls(dict(get_scheme(scheme).groups))

    @classmethod
    def parse(cls, text: str) -> "SubpartGrouping":
        groups = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, *rest = line.split()
            try:
                groups[name] = tuple(int(v) for v in rest)
            except ValueError:
                raise ValueError(f"line {lineno}: non-integer landmark index") from None
        return cls(groups)

    @classmethod
    def read(cls, path) -> "SubpartGrouping":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        return "".join(f"{k} {' '.join(map(str, v))}\n" for k, v in self.groups.items())


@dataclass(frozen=True)
class FacialMesh:
    triangles: np.ndarray  # (n_tri, 3) vertex indices
    adjacency: tuple[tuple[int, ...], ...]
    surfaces: np.ndarray  # normalized areas on the mean shape
    n_points: int = field(default=0)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def vertex_triangles(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_points)]
        for t, tri in enumerate(self.triangles):
            for v in tri:
                out[v].append(int(t))
        return out

    def triangles_touching(self, points) -> np.ndarray:
        """Indices of triangles with at least one vertex in ``points``."""
        sel = np.zeros(self.n_points, bool)
        sel[list(points)] = True
        return np.flatnonzero(sel[self.triangles].any(axis=1))


def interocular_distance(shape: Shape) -> float:
    return _iod(shape.points, get_scheme(shape.scheme))


def normalize_shape(shape: Shape) -> np.ndarray:
    """Centroid at the origin, scaled to unit inter-ocular distance."""
    pts = shape.points
    return (pts - pts.mean(axis=0)) / interocular_distance(shape)


def compute_mean_shape(shapes) -> MeanShape:
    shapes = list(shapes)
    if not shapes:
        raise ValueError("cannot average an empty list of shapes")
    scheme, n = shapes[0].scheme, shapes[0].n_points
    for s in shapes:
        if s.scheme != scheme or s.n_points != n:
            raise ValueError("all shapes must share the landmark scheme and point count")
    acc = np.zeros((n, 2))
    for s in shapes:
        acc += normalize_shape(s)
    return MeanShape(acc / len(shapes), len(shapes), scheme)


def _areas(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (points[triangles[:, i]] for i in range(3))
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _adjacency(triangles: np.ndarray) -> tuple[tuple[int, ...], ...]:
    edge_owner: dict[tuple[int, int], list[int]] = {}
    for t, tri in enumerate(triangles):
        for i in range(3):
            a, b = sorted((int(tri[i]), int(tri[(i + 1) % 3])))
            edge_owner.setdefault((a, b), []).append(t)
    nbrs: list[set[int]] = [set() for _ in range(len(triangles))]
    for owners in edge_owner.values():
        for t in owners:
            nbrs[t].update(o for o in owners if o != t)
    return tuple(tuple(sorted(s)) for s in nbrs)


def triangulate(mean: MeanShape, rel_tol: float = 1e-9) -> FacialMesh:
    pts = np.asarray(mean.points, dtype=np.float64)
    if len(pts) < 3:
        raise ValueError("need at least 3 points to triangulate")
    centred = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centred, tol=1e-12 * max(1.0, np.abs(centred).max())) < 2:
        raise ValueError("all points are collinear")
    tri = Delaunay(pts).simplices.astype(np.int64)
    # canonical, input-order-independent layout: sorted vertices, sorted rows
    tri = np.sort(tri, axis=1)
    tri = tri[np.lexsort(tri.T[::-1])]
    areas = _areas(pts, tri)
    keep = areas > rel_tol * areas.max()
    tri, areas = tri[keep], areas[keep]
    surfaces = areas / areas.sum()
    tri.setflags(write=False)
    surfaces.setflags(write=False)
    return FacialMesh(tri, _adjacency(tri), surfaces, len(pts))


def triangle_surface(mesh: FacialMesh, shape, t: int) -> float:
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    areas = _areas(np.asarray(shape.points, dtype=float), mesh.triangles)
    return float(areas[t] / areas.sum())


def barycentric_point(shape, mesh: FacialMesh, t: int, a: float, b: float, g: float) -> np.ndarray:
    w = np.array([a, b, g], dtype=float)
    if np.any(w < -1e-12) or np.any(w > 1 + 1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"barycentric weights {tuple(w)} are not on the simplex")
    verts = np.asarray(shape.points, dtype=float)[mesh.triangles[t]]
    return w @ verts


def read_landmarks(path, scheme: str = DEFAULT_SCHEME) -> Shape:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'x y'")
        rows.append([float(parts[0]), float(parts[1])])
    return Shape(np.array(rows), scheme)


def write_landmarks(path, shape: Shape) -> None:
    Path(path).write_text("".join(f"{float(x)!r} {float(y)!r}\n" for x, y in shape.points))
