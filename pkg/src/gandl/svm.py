"""Soft-margin linear SVM trained by dual coordinate descent.

The bias is handled by augmenting every sample with a constant feature of
1, so the solver minimizes

    0.5 * (||w||^2 + b^2) + C * sum_i max(0, 1 - y_i (<w, x_i> + b))

With ``standardize`` set, that problem is solved on z-scored features and
the hyperplane is mapped back, so the returned model always acts on raw
features.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1.0
    tol: float = 1e-6
    max_iter: int = 10_000
    seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    config: SvmConfig
    iters_run: int = 0
    converged: bool = False
    violation: float = float("nan")
    dual_objective: list = field(default_factory=list, repr=False)
    alpha: np.ndarray | None = field(default=None, repr=False)

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.w.shape[0]:
            raise ValueError(f"X has shape {X.shape}, model expects {self.w.shape[0]} features")
        return X @ self.w + self.b

    def to_json(self):
        return json.dumps({"w": self.w.tolist(), "b": self.b, "c": self.config.c,
                           "tol": self.config.tol, "standardize": self.config.standardize,
                           "iters_run": self.iters_run, "converged": self.converged})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.asarray(d["w"], dtype=np.float64), float(d["b"]),
                   SvmConfig(c=d["c"], tol=d["tol"], standardize=d.get("standardize", False)),
                   d["iters_run"], d["converged"])


def primal_objective(w, b, X, y, c):
    margins = y * (X @ w + b)
    return 0.5 * (w @ w + b * b) + c * np.maximum(0.0, 1.0 - margins).sum()


def _validate_binary(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X {X.shape} and y {y.shape} do not match")
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise ValueError("both classes must be present")
    return X, y


@numba.njit(cache=True)
def _epoch(Xa, y, q_diag, alpha, w, order, c):
    """One coordinate-descent sweep in ``order``; returns the largest projected gradient."""
    violation = 0.0
    d = Xa.shape[1]
    for i in order:
        g = 0.0
        for j in range(d):
            g += w[j] * Xa[i, j]
        g = y[i] * g - 1.0
        ai = alpha[i]
        if ai <= 0.0:
            pg = min(g, 0.0)
        elif ai >= c:
            pg = max(g, 0.0)
        else:
            pg = g
        if abs(pg) > violation:
            violation = abs(pg)
        if pg != 0.0 and q_diag[i] > 0.0:
            new = min(max(ai - g / q_diag[i], 0.0), c)
            if new != ai:
                step = (new - ai) * y[i]
                for j in range(d):
                    w[j] += step * Xa[i, j]
                alpha[i] = new
    return violation


def standardization(X):
    """Per-feature mean and scale; constant features keep scale 1."""
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def fit(X, y, cfg=None):
    """Fit a binary model on labels in {-1, +1}."""
    cfg = cfg or SvmConfig()
    X, y = _validate_binary(X, y)
    if cfg.standardize:
        mean, scale = standardization(X)
        model = _solve((X - mean) / scale, y, cfg)
        model.w = model.w / scale
        model.b = float(model.b - model.w @ mean)
        return model
    return _solve(X, y, cfg)


def _solve(X, y, cfg):
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    q_diag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    rng = np.random.default_rng(cfg.seed)
    c = cfg.c
    trace = []
    converged = False
    violation = np.inf
    epoch = 0
    for epoch in range(1, cfg.max_iter + 1):
        violation = _epoch(Xa, y, q_diag, alpha, w, rng.permutation(n), c)
        dual = alpha.sum() - 0.5 * (w @ w)
        if trace and dual < trace[-1] - 1e-9 * max(1.0, abs(trace[-1])):
            raise RuntimeError(f"dual objective decreased at epoch {epoch}: {trace[-1]} -> {dual}")
        trace.append(dual)
        if violation < cfg.tol:
            converged = True
            break
    if not converged:
        logger.warning("SVM did not converge in %d epochs (violation %.3g)", cfg.max_iter, violation)
    return LinearModel(w[:d].copy(), float(w[d]), cfg, epoch, converged, float(violation),
                       trace, alpha)


def predict(model, X):
    """Labels in {-1, +1}; points exactly on the hyperplane map to +1."""
    return np.where(model.decision_function(X) >= 0.0, 1, -1)


def confusion_matrix(y_true, y_pred, k_classes):
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} vs {y_pred.shape[0]}")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= k_classes):
            raise ValueError(f"{name} has labels outside 0..{k_classes - 1}")
    cm = np.zeros((k_classes, k_classes), dtype=np.int64)
    np.add.at(cm, (y_true.astype(np.int64), y_pred.astype(np.int64)), 1)
    return cm


def accuracy(y_true, y_pred):
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} vs {y_pred.shape[0]}")
    if y_true.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(y_true == y_pred))


def fit_multiclass(X, y, k_classes=None, cfg=None):
    """One-vs-rest models for labels 0..k-1."""
    y = np.asarray(y).ravel().astype(np.int64)
    k = int(k_classes if k_classes is not None else y.max() + 1)
    present = set(np.unique(y).tolist())
    missing = [c for c in range(k) if c not in present]
    if missing:
        raise ValueError(f"classes {missing} have no samples")
    return [fit(X, np.where(y == c, 1.0, -1.0), cfg) for c in range(k)]


def predict_multiclass(models, X):
    scores = np.column_stack([m.decision_function(X) for m in models])
    return np.argmax(scores, axis=1)  # first maximum wins ties


class MaxMarginClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper: binary fit for two classes, one-vs-rest otherwise."""

    def __init__(self, C=1.0, tol=1e-6, max_iter=10_000, standardize=False, random_state=0):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.standardize = standardize
        self.random_state = random_state

    def _config(self):
        return SvmConfig(c=self.C, tol=self.tol, max_iter=self.max_iter,
                         standardize=self.standardize, seed=self.random_state)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        codes = np.searchsorted(self.classes_, y)
        if len(self.classes_) == 2:
            self.models_ = [fit(X, np.where(codes == 1, 1.0, -1.0), self._config())]
        else:
            self.models_ = fit_multiclass(X, codes, len(self.classes_), self._config())
        self.coef_ = np.vstack([m.w for m in self.models_])
        self.intercept_ = np.array([m.b for m in self.models_])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        scores = X @ self.coef_.T + self.intercept_
        return scores[:, 0] if len(self.classes_) == 2 else scores

    def predict(self, X):
        scores = self.decision_function(X)
        if len(self.classes_) == 2:
            return self.classes_[(scores >= 0).astype(int)]
        return self.classes_[np.argmax(scores, axis=1)]
