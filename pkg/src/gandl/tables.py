"""Embedding tables as CSV: ``well_id,f0,f1,...`` with round-trip exact floats."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


def embeddings_csv(well_ids, embeddings):
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(well_ids):
        raise ValueError(f"need one embedding row per well, got {X.shape} for {len(well_ids)} wells")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["well_id", *(f"f{j}" for j in range(X.shape[1]))])
    for wid, row in zip(well_ids, X):
        w.writerow([wid, *map(repr, row.tolist())])
    return buf.getvalue()


def read_embeddings(path):
    """Return ``(well_ids, embeddings)``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["well_id"]:
        raise ValueError(f"{path}: missing 'well_id' header")
    width = len(rows[0]) - 1
    ids, data = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width + 1:
            raise ValueError(f"{path}: row {lineno} has {len(row)} columns, expected {width + 1}")
        ids.append(row[0])
        try:
            data.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: row {lineno}: {exc}") from exc
    return ids, np.asarray(data, dtype=np.float64).reshape(len(ids), width)


def align(records, well_ids, embeddings):
    """Embeddings reordered to follow ``records``; every record must be present."""
    index = {w: i for i, w in enumerate(well_ids)}
    missing = [r.well_id for r in records if r.well_id not in index]
    if missing:
        raise ValueError(f"no embedding for wells {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return embeddings[[index[r.well_id] for r in records]]
