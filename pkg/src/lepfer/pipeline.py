"""Single-image inference: channels, confidences, LEPs, aggregation and AUs."""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .au import AuForest, check_compatible
from .channels import compute_channels, hog_descriptors
from .confidence import ConfidenceNetwork, triangle_confidence
from .features import FeatureContext
from .forest import LocalForest
from .lep import ExpressionPrediction, LepField, TotalOcclusionError, field_from_votes, weighted_aggregate
from .mesh import Shape, interocular_distance


class CompatibilityError(ValueError):
    """Artifacts disagree on landmark scheme, mesh or provenance."""


@dataclass
class Prediction:
    class_names: tuple[str, ...]
    ls: ExpressionPrediction
    field: LepField
    wls: ExpressionPrediction | None = None
    point_alpha: np.ndarray | None = None
    triangle_alpha: np.ndarray | None = None
    au_names: tuple[str, ...] = ()
    au_scores: np.ndarray | None = None
    au_alpha: np.ndarray | None = None
    timings: dict[str, float] = field(default_factory=dict)  # seconds per stage

    @property
    def label(self) -> str:
        best = self.wls if self.wls is not None else self.ls
        return self.class_names[best.label]

    def report(self) -> str:
        """Plain-text CSV sections; timings are deliberately left out so reports replay bit-exactly."""
        out = io.StringIO()
        out.write(f"# prediction: {self.label}\n")
        out.write("class,ls" + (",wls" if self.wls is not None else "") + "\n")
        for i, name in enumerate(self.class_names):
            row = f"{name},{self.ls.probs[i]:.17g}"
            if self.wls is not None:
                row += f",{self.wls.probs[i]:.17g}"
            out.write(row + "\n")
        out.write("\n# local expression predictions\n")
        cols = ["triangle", *self.class_names, "Z"] + (["alpha"] if self.triangle_alpha is not None else [])
        out.write(",".join(cols) + "\n")
        for t in range(self.field.n_triangles):
            vals = [str(t), *(f"{v:.17g}" for v in self.field.probs[t]), f"{self.field.z[t]:.17g}"]
            if self.triangle_alpha is not None:
                vals.append(f"{self.triangle_alpha[t]:.17g}")
            out.write(",".join(vals) + "\n")
        if self.point_alpha is not None:
            out.write("\n# landmark confidences\nlandmark,alpha\n")
            out.writelines(f"{k},{a:.17g}\n" for k, a in enumerate(self.point_alpha))
        if self.au_scores is not None:
            out.write("\n# action units\nau,score" + (",alpha" if self.au_alpha is not None else "") + "\n")
            for j, name in enumerate(self.au_names):
                row = f"{name},{self.au_scores[j]:.17g}"
                if self.au_alpha is not None:
                    row += f",{self.au_alpha[j]:.17g}"
                out.write(row + "\n")
        return out.getvalue()

    def timing_table(self) -> str:
        w = max(len(k) for k in self.timings) if self.timings else 5
        lines = [f"{k:<{w}}  {1000 * v:8.2f} ms" for k, v in self.timings.items()]
        lines.append(f"{'total':<{w}}  {1000 * sum(self.timings.values()):8.2f} ms")
        return "\n".join(lines) + "\n"


@dataclass
class Predictor:
    """Loaded artifacts for repeated single-image prediction.

    ``au_sources`` are the LEP models the AU forest was trained on, in
    order; they default to ``[forest]``.
    """

    forest: LocalForest
    network: ConfidenceNetwork | None = None
    au: AuForest | None = None
    au_sources: list[LocalForest] | None = None

    def __post_init__(self):
        scheme = self.forest.scheme
        if self.network is not None:
            if self.network.scheme != scheme or self.network.n_points != self.forest.mesh.n_points:
                raise CompatibilityError(
                    f"network scheme {self.network.scheme} does not match model scheme {scheme}")
        if self.au is not None:
            sources = self.au_sources if self.au_sources is not None else [self.forest]
            check_compatible(sources)
            if self.au.scheme != scheme or len(sources) != self.au.n_models:
                raise CompatibilityError("AU model does not match the supplied LEP models")
            if not np.array_equal(self.au.triangles, self.forest.mesh.triangles):
                raise CompatibilityError("AU model was trained on a different mesh")
            if self.au.source_models:
                ids = tuple(m.model_id() for m in sources)
                if ids != tuple(self.au.source_models):
                    raise CompatibilityError("AU model was trained on different LEP models")
            self.au_sources = sources

    def predict(self, image, shape: Shape) -> Prediction:
        if shape.scheme != self.forest.scheme:
            raise CompatibilityError(f"landmarks use scheme {shape.scheme}, model expects {self.forest.scheme}")
        timings = {}
        t0 = time.perf_counter()
        ch = compute_channels(image)
        timings["channels"] = time.perf_counter() - t0

        point_alpha = tri_alpha = None
        if self.network is not None:
            t0 = time.perf_counter()
            desc = hog_descriptors(ch, shape.points, interocular_distance(shape))
            point_alpha = self.network.point_confidence(self.network.point_errors(desc))
            tri_alpha = triangle_confidence(point_alpha, self.forest.mesh)
            timings["confidence"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        ctx = FeatureContext.single(shape, self.forest.mesh, ch)
        leaf = self.forest.predict_classes(ctx, [0])[0]
        L = self.forest.n_classes
        votes = np.eye(L)[leaf]
        field_ = field_from_votes(votes, self.forest.mask_matrix)
        timings["lep"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        ls = ExpressionPrediction(votes.mean(axis=0))
        wls = None
        if tri_alpha is not None:
            try:
                wls = weighted_aggregate(field_, tri_alpha)
            except TotalOcclusionError:
                wls = ExpressionPrediction(np.full(L, np.nan))
        timings["aggregation"] = time.perf_counter() - t0

        pred = Prediction(tuple(self.forest.class_names), ls, field_, wls, point_alpha, tri_alpha)
        if self.au is not None:
            t0 = time.perf_counter()
            blocks = []
            for m in self.au_sources:
                if m is self.forest:
                    blocks.append(field_.features())
                else:
                    v = np.eye(m.n_classes)[m.predict_classes(ctx, [0])[0]]
                    blocks.append(field_from_votes(v, m.mask_matrix).features())
            feats = np.stack(blocks)[None]
            pred.au_names = self.au.au_names
            pred.au_scores = self.au.predict(feats)[0]
            if tri_alpha is not None:
                pred.au_alpha = self.au.confidences(tri_alpha)
            timings["au"] = time.perf_counter() - t0
        pred.timings = timings
        return pred
