"""Manifest CSV and raw image-blob storage."""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

MANIFEST_HEADER = ("well_id", "cell_line", "group", "compound",
                   "concentration_um", "replicate", "image_path")
IMG_MAGIC = b"IMG1"
_IMG_HEADER = struct.Struct("<4s3i")


class ManifestError(ValueError):
    pass


class Group(str, Enum):
    POS_CTRL = "POS_CTRL"
    NEG_CTRL = "NEG_CTRL"
    TREATED = "TREATED"


@dataclass(frozen=True)
class WellRecord:
    well_id: str
    cell_line: str
    group: Group
    compound: str
    concentration_um: float
    replicate: int
    image_path: str

    @property
    def is_control(self):
        return self.group is not Group.TREATED

    def key(self):
        return (self.group.value, self.compound, format_conc(self.concentration_um),
                self.replicate, self.cell_line)


def format_conc(x):
    return f"{float(x):.6g}"


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_image(image):
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"image must be (C, H, W), got {image.shape}")
    c, h, w = image.shape
    return _IMG_HEADER.pack(IMG_MAGIC, c, h, w) + image.astype("<f4").tobytes()


def decode_image(data):
    if len(data) < _IMG_HEADER.size:
        raise ValueError("image blob shorter than its header")
    magic, c, h, w = _IMG_HEADER.unpack_from(data)
    if magic != IMG_MAGIC:
        raise ValueError(f"bad image magic {magic!r}")
    payload = data[_IMG_HEADER.size:]
    if len(payload) != 4 * c * h * w:
        raise ValueError(f"image payload has {len(payload)} bytes, expected {4 * c * h * w}")
    return np.frombuffer(payload, dtype="<f4").reshape(c, h, w).astype(np.float64)


def write_image(path, image):
    atomic_write_bytes(path, encode_image(image))


def read_image(path):
    return decode_image(Path(path).read_bytes())


def manifest_text(records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for r in records:
        writer.writerow([r.well_id, r.cell_line, r.group.value, r.compound,
                         format_conc(r.concentration_um), r.replicate, r.image_path])
    return buf.getvalue()


def write_manifest(path, records):
    atomic_write_bytes(path, manifest_text(records).encode("utf-8"))


def _parse_row(row, lineno):
    def fail(column, msg):
        raise ManifestError(f"row {lineno}, column {column}: {msg}")

    if len(row) != len(MANIFEST_HEADER):
        raise ManifestError(f"row {lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
    well_id, line, group, compound, conc, rep, image_path = row
    if not well_id:
        fail("well_id", "empty")
    if not line:
        fail("cell_line", "empty")
    try:
        group = Group(group)
    except ValueError:
        fail("group", f"unknown group {group!r}")
    try:
        conc = float(conc)
    except ValueError:
        fail("concentration_um", f"not a number: {conc!r}")
    if not np.isfinite(conc) or conc < 0:
        fail("concentration_um", f"must be finite and nonnegative, got {conc}")
    try:
        rep = int(rep)
    except ValueError:
        fail("replicate", f"not an integer: {rep!r}")
    if rep < 1:
        fail("replicate", f"must be positive, got {rep}")
    treated = group is Group.TREATED
    if treated and not (compound and conc > 0):
        fail("group", "TREATED wells need a compound and a positive concentration")
    if not treated and (compound or conc != 0):
        fail("group", "control wells take no compound and concentration 0")
    if not image_path:
        fail("image_path", "empty")
    return WellRecord(well_id, line, group, compound, conc, rep, image_path)


def parse_manifest(text, base_dir=None, check_images=True):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("manifest is empty (missing header)") from None
    if tuple(header) != MANIFEST_HEADER:
        raise ManifestError(f"row 1: header must be {','.join(MANIFEST_HEADER)}")
    records, keys, ids = [], {}, {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        rec = _parse_row(row, lineno)
        if rec.well_id in ids:
            raise ManifestError(f"row {lineno}, column well_id: duplicate of row {ids[rec.well_id]}")
        k = rec.key()
        if k in keys:
            raise ManifestError(f"row {lineno}: duplicate (compound, concentration_um, replicate, "
                                f"cell_line) of row {keys[k]}")
        if check_images and base_dir is not None and not (Path(base_dir) / rec.image_path).is_file():
            raise ManifestError(f"row {lineno}, column image_path: missing file {rec.image_path}")
        ids[rec.well_id] = keys[k] = lineno
        records.append(rec)
    return records


def load_manifest(path, check_images=True):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(text, base_dir=path.parent, check_images=check_images)


def load_images(manifest_path, records):
    base = Path(manifest_path).parent
    return np.stack([read_image(base / r.image_path) for r in records])
