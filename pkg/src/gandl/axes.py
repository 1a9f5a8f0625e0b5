"""On/Off-perturbation frames, efficacy scores and dose-response curves.

A frame is built from a linear SVM separating two conditions: the
hyperplane normal is the On-perturbation direction and everything inside
the hyperplane is Off-perturbation variation.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import svm
from .screen.io import Group, format_conc
from .validation import check_embeddings


class FrameKind(str, Enum):
    EFFECTIVENESS = "EFFECTIVENESS"
    CELL_LINE = "CELL_LINE"


@dataclass(frozen=True)
class PerturbationFrame:
    u: np.ndarray
    b: float
    on_min: float
    on_max: float
    off_mean: float
    kind: FrameKind = FrameKind.EFFECTIVENESS

    def to_dict(self):
        return {"u": self.u.tolist(), "b": self.b, "on_min": self.on_min,
                "on_max": self.on_max, "off_mean": self.off_mean, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["u"], dtype=np.float64), float(d["b"]), float(d["on_min"]),
                   float(d["on_max"]), float(d["off_mean"]), FrameKind(d["kind"]))


@dataclass(frozen=True)
class EfficacyNormalization:
    cell_line: str
    mean_neg: float
    mean_pos: float


@dataclass
class DoseResponseCurve:
    compound: str
    cell_line: str
    points: list = field(default_factory=list)  # (concentration_um, mean_efficacy, n)
    effective_at: float | None = None

    @property
    def concentrations(self):
        return np.array([p[0] for p in self.points])

    @property
    def scores(self):
        return np.array([p[1] for p in self.points])


def frame_from_hyperplane(w, bias, X, kind=FrameKind.EFFECTIVENESS):
    w = np.asarray(w, dtype=np.float64)
    scale = np.linalg.norm(w)
    if scale == 0 or not np.isfinite(scale):
        raise ValueError("degenerate hyperplane: the SVM normal is zero")
    u = w / scale
    b = float(bias) / scale
    on, off = _project(u, b, X)
    if not on.max() > on.min():
        raise ValueError("fitting set has no spread along the On-perturbation axis")
    return PerturbationFrame(u, b, float(on.min()), float(on.max()), float(off.mean()),
                             FrameKind(kind))


def fit_frame(embeddings, binary_labels, kind=FrameKind.EFFECTIVENESS, svm_cfg=None):
    """Frame from an SVM on labels in {-1, +1}; +1 ends up on the positive On side."""
    X = check_embeddings(embeddings)
    model = svm.fit(X, binary_labels, svm_cfg)
    return frame_from_hyperplane(model.w, model.b, X, kind)


def _project(u, b, X):
    X = np.asarray(X, dtype=np.float64)
    along = X @ u
    residual = X - along[..., None] * u
    return along + b, np.linalg.norm(residual, axis=-1)


def project(frame, embedding):
    """Raw (on, off) coordinates of one embedding or a batch."""
    x = np.asarray(embedding, dtype=np.float64)
    if x.shape[-1] != frame.u.shape[0]:
        raise ValueError(f"embedding has {x.shape[-1]} features, frame expects {frame.u.shape[0]}")
    on, off = _project(frame.u, frame.b, x)
    if x.ndim == 1:
        return float(on), float(off)
    return on, off


def to_plot_coords(frame, on_raw, off_raw):
    """Min-max scale On to [-1, 1] over the fitting set; zero-centre Off."""
    on = 2.0 * (np.asarray(on_raw, dtype=np.float64) - frame.on_min) / (frame.on_max - frame.on_min) - 1.0
    off = np.asarray(off_raw, dtype=np.float64) - frame.off_mean
    if on.ndim == 0:
        return float(on), float(off)
    return on, off


def fit_efficacy_normalization(frame, control_embeddings, groups, cell_line):
    """Raw-On means of the negative and positive controls of one cell line."""
    X = check_embeddings(control_embeddings)
    groups = [Group(g) for g in groups]
    if len(groups) != X.shape[0]:
        raise ValueError("one group label per control embedding is required")
    on, _ = _project(frame.u, frame.b, X)
    pos = [o for o, g in zip(on, groups) if g is Group.POS_CTRL]
    neg = [o for o, g in zip(on, groups) if g is Group.NEG_CTRL]
    if not pos or not neg:
        raise ValueError(f"cell line {cell_line}: need both positive and negative controls")
    norm = EfficacyNormalization(cell_line, float(np.mean(neg)), float(np.mean(pos)))
    if norm.mean_pos == norm.mean_neg:
        raise ValueError(f"cell line {cell_line}: control means coincide")
    return norm


def efficacy_score(norm, on_raw):
    """Affine map sending the negative-control mean to -1 and the positive one to +1."""
    score = 2.0 * (np.asarray(on_raw, dtype=np.float64) - norm.mean_neg) / (norm.mean_pos - norm.mean_neg) - 1.0
    return float(score) if score.ndim == 0 else score


def fit_normalizations(frame, embeddings, records):
    """Per-cell-line efficacy normalization from the control wells."""
    X = check_embeddings(embeddings)
    by_line = defaultdict(list)
    for i, r in enumerate(records):
        if r.is_control:
            by_line[r.cell_line].append(i)
    return {line: fit_efficacy_normalization(frame, X[idx], [records[i].group for i in idx], line)
            for line, idx in sorted(by_line.items())}


def dose_response(records, embeddings, frame, norms):
    """Mean efficacy per (cell line, compound, concentration) over treated wells."""
    X = check_embeddings(embeddings)
    if len(records) != X.shape[0]:
        raise ValueError("one embedding per record is required")
    on, _ = _project(frame.u, frame.b, X)
    cells = defaultdict(lambda: defaultdict(list))
    for r, o in zip(records, on):
        if r.group is not Group.TREATED:
            continue
        if r.cell_line not in norms:
            raise KeyError(f"no efficacy normalization for cell line {r.cell_line}")
        cells[(r.cell_line, r.compound)][r.concentration_um].append(efficacy_score(norms[r.cell_line], o))
    curves = []
    for (line, compound), by_conc in sorted(cells.items()):
        points = [(c, float(np.mean(s)), len(s)) for c, s in sorted(by_conc.items())]
        effective = next((c for c, m, _ in points if m > 0), None)
        curves.append(DoseResponseCurve(compound, line, points, effective))
    return curves


def curves_to_csv(curves):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["compound", "cell_line", "concentration_um", "mean_efficacy", "n"])
    for cv in curves:
        for c, m, n in cv.points:
            w.writerow([cv.compound, cv.cell_line, format_conc(c), repr(m), n])
    return buf.getvalue()


def curves_to_json(curves):
    return json.dumps([asdict(cv) for cv in curves], indent=1)


def points_to_csv(records, on, off):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["well_id", "cell_line", "group", "compound", "concentration_um", "on", "off"])
    for r, a, b in zip(records, on, off):
        w.writerow([r.well_id, r.cell_line, r.group.value, r.compound,
                    format_conc(r.concentration_um), repr(float(a)), repr(float(b))])
    return buf.getvalue()


class PerturbationAxes(TransformerMixin, BaseEstimator):
    """Fit an On/Off frame on two conditions; transform to plot coordinates.

    ``positive_label`` names the class that lands on the +1 end of the On
    axis (positive controls for the effectiveness space).
    """

    def __init__(self, positive_label=1, kind="EFFECTIVENESS", C=1.0, tol=1e-6,
                 max_iter=10_000, standardize=False, random_state=0):
        self.positive_label = positive_label
        self.kind = kind
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X = check_embeddings(X)
        y = np.asarray(y)
        labels = np.where(y == self.positive_label, 1.0, -1.0)
        cfg = svm.SvmConfig(c=self.C, tol=self.tol, max_iter=self.max_iter,
                            standardize=self.standardize, seed=self.random_state)
        self.frame_ = fit_frame(X, labels, FrameKind(self.kind), cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def project(self, X):
        check_is_fitted(self)
        return _project(self.frame_.u, self.frame_.b, check_embeddings(X, self.n_features_in_))

    def transform(self, X):
        on, off = to_plot_coords(self.frame_, *self.project(X))
        return np.column_stack([np.atleast_1d(on), np.atleast_1d(off)])
