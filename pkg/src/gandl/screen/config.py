from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

HALF_LOG = math.sqrt(10.0)


@dataclass(frozen=True)
class CompoundProfile:
    """Ground truth of one synthetic compound.

    ``toxic_above_um`` switches on a toxicity tail: beyond that
    concentration the viability falls linearly, reaching zero at twice it.
    """

    name: str
    ec50_um: float = 1.0
    max_effect: float = 1.0
    inert: bool = False
    toxic_above_um: float | None = None

    def __post_init__(self):
        if self.inert and self.max_effect != 0:
            raise ValueError(f"compound {self.name}: inert compounds need max_effect == 0")
        if not 0.0 <= self.max_effect <= 1.0:
            raise ValueError(f"compound {self.name}: max_effect must lie in [0, 1]")
        if self.ec50_um <= 0:
            raise ValueError(f"compound {self.name}: ec50_um must be positive")
        if self.toxic_above_um is not None and self.toxic_above_um <= 0:
            raise ValueError(f"compound {self.name}: toxic_above_um must be positive")


@dataclass(frozen=True)
class CellStyle:
    """Rendering style of one cell line.

    ``angle`` orients healthy cells' cytoplasm (radians); ``aspect`` is its
    major/minor variance ratio when fully viable; ``rna_offset`` is the
    distance of the RNA blob from the nucleus, in cell radii.
    """

    name: str
    angle: float = 0.0
    aspect: float = 4.0
    rna_offset: float = 0.0
    angle_jitter: float = 0.15


DEFAULT_STYLES = (
    CellStyle("HRCE", angle=0.0, rna_offset=0.0),
    CellStyle("VERO", angle=math.pi / 2, rna_offset=1.6),
)

# unseen styles used for zero-shot transfer
FOREIGN_STYLES = (
    CellStyle("HEPG2", angle=math.pi / 4, rna_offset=0.0),
    CellStyle("HUVEC", angle=3 * math.pi / 4, rna_offset=0.0),
    CellStyle("RPE", angle=math.pi / 4, rna_offset=2.0),
    CellStyle("U2OS", angle=3 * math.pi / 4, rna_offset=2.0),
)


def half_log_doses(n, lowest_um=0.01):
    return tuple(float(f"{lowest_um * HALF_LOG ** k:.6g}") for k in range(n))


def default_profiles(n_compounds, doses_um):
    """One inert compound followed by effective ones with spread-out EC50s."""
    if n_compounds == 0:
        return ()
    profiles = [CompoundProfile("CPD000", max_effect=0.0, inert=True)]
    n_active = n_compounds - 1
    lo, hi = math.log10(doses_um[1]), math.log10(doses_um[-2])
    for i in range(n_active):
        frac = i / max(n_active - 1, 1)
        ec50 = 10 ** (lo + frac * (hi - lo))
        profiles.append(CompoundProfile(f"CPD{i + 1:03d}", ec50_um=float(f"{ec50:.6g}"),
                                        max_effect=1.0 - 0.1 * (i % 3)))
    return tuple(profiles)


@dataclass(frozen=True)
class SyntheticScreenConfig:
    n_cell_lines: int = 2
    n_compounds: int = 8
    n_doses: int = 6
    doses_um: tuple = ()
    replicates_per_dose: int = 6
    n_controls_per_group: int = 20
    image_size: int = 16
    channels: int = 5
    seed: int = 0
    compound_profiles: tuple = ()
    styles: tuple = ()
    noise_sigma: float = 0.05
    unused_channels: tuple = ()
    paired_replicates: bool = True
    control_groups: tuple = ("POS_CTRL", "NEG_CTRL")

    def __post_init__(self):
        if not self.doses_um:
            object.__setattr__(self, "doses_um", half_log_doses(self.n_doses))
        object.__setattr__(self, "doses_um", tuple(float(d) for d in self.doses_um))
        if not self.compound_profiles:
            object.__setattr__(self, "compound_profiles",
                               default_profiles(self.n_compounds, self.doses_um))
        object.__setattr__(self, "compound_profiles", tuple(
            p if isinstance(p, CompoundProfile) else CompoundProfile(**p)
            for p in self.compound_profiles))
        if not self.styles:
            pool = DEFAULT_STYLES if self.n_cell_lines <= len(DEFAULT_STYLES) else FOREIGN_STYLES
            if self.n_cell_lines > len(pool):
                raise ValueError(f"no default styles for {self.n_cell_lines} cell lines")
            object.__setattr__(self, "styles", tuple(pool[:self.n_cell_lines]))
        object.__setattr__(self, "styles", tuple(
            s if isinstance(s, CellStyle) else CellStyle(**s) for s in self.styles))
        object.__setattr__(self, "unused_channels", tuple(int(c) for c in self.unused_channels))
        object.__setattr__(self, "control_groups", tuple(self.control_groups))
        self.validate()

    def validate(self):
        if self.n_cell_lines < 1 or len(self.styles) != self.n_cell_lines:
            raise ValueError("need one style per cell line")
        if self.n_compounds < 0 or len(self.compound_profiles) != self.n_compounds:
            raise ValueError("need one compound profile per compound")
        if len(self.doses_um) != self.n_doses:
            raise ValueError("doses_um must have n_doses entries")
        for a, b in zip(self.doses_um, self.doses_um[1:]):
            if not b > a:
                raise ValueError("doses_um must be strictly increasing")
            if abs(b / a - HALF_LOG) > 1e-4 * HALF_LOG:
                raise ValueError("consecutive doses must differ by a factor sqrt(10)")
        if self.replicates_per_dose < 1 or self.n_controls_per_group < 0:
            raise ValueError("replicates_per_dose must be >= 1, n_controls_per_group >= 0")
        if self.image_size < 8:
            raise ValueError("image_size must be >= 8")
        n_used = self.channels - len(self.unused_channels)
        if n_used < 1 or any(not 0 <= c < self.channels for c in self.unused_channels):
            raise ValueError("unused_channels must index existing channels")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if not set(self.control_groups) <= {"POS_CTRL", "NEG_CTRL"} or \
                len(set(self.control_groups)) != len(self.control_groups):
            raise ValueError("control_groups must be distinct entries of POS_CTRL, NEG_CTRL")
        names = [p.name for p in self.compound_profiles]
        if len(set(names)) != len(names):
            raise ValueError("compound names must be unique")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SyntheticScreenConfig keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("doses_um", "compound_profiles", "styles", "unused_channels", "control_groups"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)
