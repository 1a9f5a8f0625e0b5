"""Procedural rendering of synthetic high-content-screen wells.

Each well shows a handful of cells. Latent viability ``v`` (1 = healthy,
0 = dead) elongates the cytoplasm, moves puncta away from the nucleus
and slightly brightens the cytoplasm; the cell-line style sets the
elongation axis and aspect and where the RNA blob sits relative to the
nucleus.
"""

from __future__ import annotations

import numpy as np

HILL_EXPONENT = 2.0
N_CELL_SLOTS = 12
STAINS = ("nucleus", "cytoplasm", "membrane", "puncta", "rna", "mito")


def hill(conc_um, ec50_um, max_effect, exponent=HILL_EXPONENT):
    c = np.asarray(conc_um, dtype=np.float64)
    ch = c ** exponent
    return max_effect * ch / (ch + ec50_um ** exponent)


def compound_viability(profile, conc_um):
    """Ground-truth viability of a treated well."""
    if profile.inert:
        return np.zeros_like(np.asarray(conc_um, dtype=np.float64)) + 0.0
    v = hill(conc_um, profile.ec50_um, profile.max_effect)
    if profile.toxic_above_um is not None:
        t = profile.toxic_above_um
        excess = np.maximum(np.asarray(conc_um, dtype=np.float64) - t, 0.0) / t
        v = v * np.clip(1.0 - excess, 0.0, 1.0)
    return v


def _lerp(a, b, t):
    return a + (b - a) * t


def draw_layout(rng, size):
    """Random cell field shared by every rendering of one well template."""
    n = N_CELL_SLOTS
    return {
        "density": rng.uniform(0.45, 0.85),
        "gain": float(np.exp(rng.normal(0.0, 0.12))),
        "centre": rng.uniform(-1.0, size, size=(n, 2)),
        "tau": rng.uniform(0.0, 1.0, size=n),
        "scale": rng.uniform(0.85, 1.15, size=n),
        "jitter": rng.normal(0.0, 1.0, size=n),
        "phase": rng.uniform(0.0, 2 * np.pi, size=n),
        "amplitude": rng.uniform(0.75, 1.25, size=(n, 6)),
    }


def _gauss(dx, dy, sx, sy):
    return np.exp(-0.5 * ((dx / sx) ** 2 + (dy / sy) ** 2))


def render_stains(v, style, layout, size):
    """Noise-free stain layers (6, size, size) for viability ``v``.

    Shape changes keep each blob's covariance determinant fixed, so the
    per-channel intensity histograms barely move with viability; the
    cue lives in shape and in where the puncta sit.
    """
    v = float(np.clip(v, 0.0, 1.0))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = layout["centre"][:, 0][:, None, None]
    cx = layout["centre"][:, 1][:, None, None]
    dy, dx = yy[None] - cy, xx[None] - cx
    n = len(layout["tau"])

    presence = np.clip((layout["density"] - layout["tau"]) / 0.12 + 0.5, 0.0, 1.0)
    scale = layout["scale"][:, None, None]
    radius = 1.35 * scale
    phase = layout["phase"][:, None, None]

    # dying cells round up; healthy ones elongate along the line's axis
    aspect = np.sqrt(_lerp(1.0, style.aspect, v))
    angle = style.angle + style.angle_jitter * layout["jitter"][:, None, None]
    cos, sin = np.cos(angle), np.sin(angle)
    du = dx * cos + dy * sin
    dv = -dx * sin + dy * cos

    nucleus = _gauss(dx, dy, 0.7 * scale, 0.7 * scale)
    cytoplasm = _gauss(du, dv, radius * aspect, radius / aspect) * _lerp(0.55, 0.6, v)
    outer = _gauss(du, dv, 1.3 * radius * aspect, 1.3 * radius / aspect)
    membrane = np.clip(outer - _gauss(du, dv, radius * aspect, radius / aspect), 0.0, None) * 2.0

    # puncta collapse onto the nucleus in dying cells. Random phases cancel the
    # first-order effect of a small displacement in any pooled statistic, so
    # the reach grows with sqrt(v) to keep that response linear in v
    reach = 1.5 * np.sqrt(v) * radius
    puncta = _gauss(dx - reach * np.cos(phase), dy - reach * np.sin(phase), 0.55, 0.55) * 0.8
    # RNA blob placement relative to the nucleus is a cell-line trait
    off = style.rna_offset * radius
    rna = _gauss(dx + off * np.cos(phase), dy + off * np.sin(phase), 0.8 * scale, 0.8 * scale) * 0.6
    mito = _gauss(dx - off * np.sin(phase), dy + off * np.cos(phase), 0.6, 0.6) * 0.7

    layers = np.stack([nucleus, cytoplasm, membrane, puncta, rna, mito])  # (6, n, S, S)
    weights = (presence[:, None] * layout["amplitude"][:n]).T[:, :, None, None]
    return (layers * weights).sum(axis=1)


def render_well(v, style, layout, noise_rng, size, channels, noise_sigma, unused_channels=()):
    """Rendered well image in [0, 1] with shape (channels, size, size)."""
    if channels > len(STAINS):
        raise ValueError(f"at most {len(STAINS)} channels can be rendered")
    stains = render_stains(v, style, layout, size) * layout["gain"]
    used = [c for c in range(channels) if c not in set(unused_channels)]
    img = np.zeros((channels, size, size))
    img[used] = stains[:len(used)]
    img += noise_rng.normal(0.0, noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def viability_proxy(image):
    """One minus the nucleus-weighted mean puncta intensity.

    Puncta drift off the nuclei as viability rises, so averaged over wells
    this statistic grows with viability. Single wells are noisy.
    """
    image = np.asarray(image)
    nucleus, puncta = image[0], image[3]
    total = nucleus.sum()
    if total <= 0:
        return 1.0
    return float(1.0 - (nucleus * puncta).sum() / total)
