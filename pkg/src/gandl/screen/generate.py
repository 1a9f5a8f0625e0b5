from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import SyntheticScreenConfig
from .io import Group, WellRecord, atomic_write_bytes, format_conc, manifest_text, write_image
from .render import compound_viability, draw_layout, render_well

_CONTROL_STREAM = 0
_TREATED_STREAM = 1
_NOISE_STREAM = 2


def plan_wells(cfg):
    """Well records with their latent viability and random-stream key, in manifest order.

    Replicate ``r`` of a compound on one cell line reuses the same cell
    field and pixel noise at every dose when ``cfg.paired_replicates`` is
    set, so a curve varies only through the compound's effect.
    """
    plan = []
    idx = 0
    for li, style in enumerate(cfg.styles):
        for group in map(Group, cfg.control_groups):
            v = 1.0 if group is Group.POS_CTRL else 0.0
            for rep in range(1, cfg.n_controls_per_group + 1):
                plan.append((idx, li, group, "", 0.0, rep, v, (idx,)))
                idx += 1
        for ci, prof in enumerate(cfg.compound_profiles):
            for conc in cfg.doses_um:
                v = float(compound_viability(prof, conc))
                for rep in range(1, cfg.replicates_per_dose + 1):
                    key = (li, ci, rep) if cfg.paired_replicates else (idx,)
                    plan.append((idx, li, Group.TREATED, prof.name, conc, rep, v, key))
                    idx += 1
    return plan


def _record(cfg, idx, li, group, compound, conc, rep):
    well_id = f"W{idx:05d}"
    return WellRecord(well_id, cfg.styles[li].name, group, compound, float(format_conc(conc)),
                      rep, f"images/{well_id}.img")


def render_screen(cfg):
    """Render every well in memory: (records, images (N, C, S, S), viabilities)."""
    records, images, viab = [], [], []
    for idx, li, group, compound, conc, rep, v, key in plan_wells(cfg):
        layout_stream = _TREATED_STREAM if len(key) == 3 else _CONTROL_STREAM
        layout = draw_layout(np.random.default_rng([cfg.seed, layout_stream, *key]), cfg.image_size)
        noise_rng = np.random.default_rng([cfg.seed, _NOISE_STREAM, layout_stream, *key])
        img = render_well(v, cfg.styles[li], layout, noise_rng, cfg.image_size,
                          cfg.channels, cfg.noise_sigma, cfg.unused_channels)
        # stored as float32 on disk; keep the in-memory copy identical
        images.append(img.astype(np.float32).astype(np.float64))
        records.append(_record(cfg, idx, li, group, compound, conc, rep))
        viab.append(v)
    shape = (0, cfg.channels, cfg.image_size, cfg.image_size)
    return records, (np.stack(images) if images else np.zeros(shape)), np.asarray(viab)


def generate_synthetic_screen(cfg, out_dir):
    """Write ``manifest.csv``, ``images/*.img`` and ``screen.json`` under ``out_dir``."""
    if not isinstance(cfg, SyntheticScreenConfig):
        raise TypeError("cfg must be a SyntheticScreenConfig")
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    records, images, viab = render_screen(cfg)
    for rec, img in zip(records, images):
        write_image(out / rec.image_path, img)
    truth = {"config": cfg.to_dict(),
             "viability": {r.well_id: float(v) for r, v in zip(records, viab)}}
    atomic_write_bytes(out / "screen.json", json.dumps(truth, indent=1, sort_keys=True).encode())
    atomic_write_bytes(out / "manifest.csv", manifest_text(records).encode("utf-8"))
    return records
