"""Evaluation harnesses: linear probes on embeddings, baseline features and zero-shot transfer."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import svm
from .screen.channels import drop_channel
from .screen.io import Group, load_images, load_manifest
from .validation import check_embeddings, check_images

TEST_FRACTION = 0.2
BASELINE_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass
class EvalReport:
    task: str
    accuracy: float
    confusion: np.ndarray
    classes: list
    split: dict
    featurizer: dict = field(default_factory=dict)
    probe: dict = field(default_factory=dict)

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=np.int64)
        total = int(self.confusion.sum())
        if total and self.accuracy != np.trace(self.confusion) / total:
            raise ValueError("accuracy disagrees with the confusion matrix")

    def to_dict(self):
        return {"task": self.task, "accuracy": self.accuracy, "classes": list(self.classes),
                "confusion": self.confusion.tolist(), "split": self.split,
                "featurizer": self.featurizer, "probe": self.probe}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["task"], d["accuracy"], d["confusion"], d["classes"], d["split"],
                   d.get("featurizer", {}), d.get("probe", {}))

    def confusion_csv(self):
        """Rows are true classes, columns predicted classes."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred", *self.classes])
        for name, row in zip(self.classes, self.confusion):
            w.writerow([name, *row.tolist()])
        return buf.getvalue()


def stratified_split(labels, seed, test_fraction=TEST_FRACTION):
    """Per-class seeded shuffle; each class keeps at least one well on each side."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < 2:
            raise ValueError(f"class {cls!r} has {members.size} sample(s); "
                             "a train/test split needs at least 2")
        members = rng.permutation(members)
        k = min(max(int(round(test_fraction * members.size)), 1), members.size - 1)
        test.extend(members[:k].tolist())
        train.extend(members[k:].tolist())
    return np.sort(train), np.sort(test)


def classify(embeddings, labels, well_ids, split_seed, task, svm_cfg=None, featurizer=None):
    """Fit the linear probe on a stratified split and score the held-out wells."""
    X = check_embeddings(embeddings)
    labels = np.asarray(labels)
    if len(labels) != X.shape[0] or len(well_ids) != X.shape[0]:
        raise ValueError("embeddings, labels and well ids must have equal length")
    classes = sorted(np.unique(labels).tolist())
    if len(classes) < 2:
        raise ValueError(f"{task}: need at least two classes, found {classes}")
    codes = np.searchsorted(np.asarray(classes), labels)
    train, test = stratified_split(codes, split_seed)
    if len(classes) == 2:
        model = svm.fit(X[train], np.where(codes[train] == 1, 1.0, -1.0), svm_cfg)
        pred = (svm.predict(model, X[test]) > 0).astype(np.int64)
    else:
        models = svm.fit_multiclass(X[train], codes[train], len(classes), svm_cfg)
        pred = svm.predict_multiclass(models, X[test])
    cm = svm.confusion_matrix(codes[test], pred, len(classes))
    split = {"seed": int(split_seed), "test_fraction": TEST_FRACTION,
             "train_ids": [well_ids[i] for i in train], "test_ids": [well_ids[i] for i in test]}
    cfg = svm_cfg or svm.SvmConfig()
    probe = {"c": cfg.c, "standardize": cfg.standardize}
    return EvalReport(task, float(np.trace(cm) / cm.sum()), cm, classes, split, featurizer or {},
                      probe)


def controls_classification(embeddings, records, split_seed, cell_line=None, svm_cfg=None,
                            featurizer=None):
    """C+ vs C- probe on control wells, optionally restricted to one cell line."""
    X = check_embeddings(embeddings)
    if len(records) != X.shape[0]:
        raise ValueError("one embedding per record is required")
    keep = [i for i, r in enumerate(records)
            if r.is_control and (cell_line is None or r.cell_line == cell_line)]
    if not keep:
        raise ValueError(f"no control wells{'' if cell_line is None else ' for ' + cell_line}")
    task = "controls" if cell_line is None else f"controls[{cell_line}]"
    return classify(X[keep], [records[i].group.value for i in keep],
                    [records[i].well_id for i in keep], split_seed, task, svm_cfg, featurizer)


def cell_line_classification(embeddings, records, split_seed, svm_cfg=None, featurizer=None):
    """Cell-line probe over every well of the screen."""
    X = check_embeddings(embeddings)
    if len(records) != X.shape[0]:
        raise ValueError("one embedding per record is required")
    return classify(X, [r.cell_line for r in records], [r.well_id for r in records],
                    split_seed, "cell_line", svm_cfg, featurizer)


def image_statistics(images):
    """Per-channel mean, variance and quantiles, concatenated per image."""
    X = check_images(images)
    flat = X.reshape(X.shape[0], X.shape[1], -1)
    q = np.quantile(flat, BASELINE_QUANTILES, axis=2)  # (Q, N, C)
    return np.concatenate([flat.mean(axis=2), flat.var(axis=2),
                           q.transpose(1, 0, 2).reshape(X.shape[0], -1)], axis=1)


def baseline_projection(n_stats, feature_dim, seed):
    rng = np.random.default_rng([seed, 7])
    return rng.standard_normal((n_stats, feature_dim)) / np.sqrt(n_stats)


def baseline_featurizer(images, seed=0, feature_dim=64):
    """Hand-crafted statistics followed by a fixed seeded random projection.

    Accepts one (C, H, W) image or a batch; returns matching rank.
    """
    arr = np.asarray(images, dtype=np.float64)
    single = arr.ndim == 3
    stats = image_statistics(arr[None] if single else arr)
    proj = baseline_projection(stats.shape[1], feature_dim, seed)
    # row-wise reduction: an image's features must not depend on its batch mates
    out = np.einsum("ns,sd->nd", stats, proj, optimize=False)
    return out[0] if single else out


class BaselineFeaturizer(TransformerMixin, BaseEstimator):
    def __init__(self, feature_dim=64, random_state=0):
        self.feature_dim = feature_dim
        self.random_state = random_state

    def fit(self, X, y=None):
        self.n_channels_in_ = check_images(X).shape[1]
        return self

    def transform(self, X):
        return baseline_featurizer(X, self.random_state, self.feature_dim)


def prepare_foreign_images(images, dropped_channel, expected_channels):
    """Drop the foreign screen's extra channel and check the result fits the model."""
    X = check_images(images)
    if dropped_channel is not None:
        X = drop_channel(X, dropped_channel)
    if X.shape[1] != expected_channels:
        raise ValueError(f"foreign images have {X.shape[1]} channels after dropping, "
                         f"the featurizer expects {expected_channels}")
    return X


def zero_shot_eval(featurize, foreign, dropped_channel, k_classes, split_seed, expected_channels,
                   svm_cfg=None, featurizer=None):
    """Cell-type probe on a screen the featurizer never saw.

    ``featurize`` maps an image batch to embeddings and stays frozen.
    ``foreign`` is a manifest path or a ``(records, images)`` pair.
    """
    if isinstance(foreign, (str, Path)):
        records = load_manifest(foreign)
        images = load_images(foreign, records)
    else:
        records, images = foreign
    X = prepare_foreign_images(images, dropped_channel, expected_channels)
    lines = sorted({r.cell_line for r in records})
    if len(lines) != k_classes:
        raise ValueError(f"expected {k_classes} cell types, the foreign screen has {len(lines)}")
    emb = featurize(X)
    return classify(emb, [r.cell_line for r in records], [r.well_id for r in records],
                    split_seed, "zero_shot", svm_cfg, featurizer)


def control_labels(records):
    """+1 for positive controls, -1 for negative ones, 0 for treated wells."""
    return np.array([1 if r.group is Group.POS_CTRL else -1 if r.group is Group.NEG_CTRL else 0
                     for r in records])
