from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class GanConfig:
    """Hyperparameters of the slimmed style-based GAN.

    ``style_dim`` defaults to 64 and ``image_size`` to 16 so the model
    trains on a single CPU core; the full-scale model used 512 and
    1024 respectively. ``feature_dim`` of 0 means "same as style_dim".
    """

    image_size: int = 16
    channels: int = 5
    style_dim: int = 64
    mapping_layers: int = 3
    feature_dim: int = 0
    fmaps: int = 32
    learning_rate: float = 1e-4
    adam_betas: tuple = (0.0, 0.99)
    adam_eps: float = 1e-8
    batch_size: int = 16
    r1_gamma: float = 10.0
    ppl_weight: float = 2.0
    ppl_decay: float = 0.01
    lipschitz_l1_weight: float = 0.1
    ema_beta: float = 0.999
    lazy_reg_interval: int = 4
    steps: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.feature_dim == 0:
            object.__setattr__(self, "feature_dim", self.style_dim)
        object.__setattr__(self, "adam_betas", tuple(float(b) for b in self.adam_betas))
        self.validate()

    def validate(self):
        s = self.image_size
        if s < 8 or s & (s - 1):
            raise ValueError(f"image_size must be a power of two >= 8, got {s}")
        for name in ("channels", "style_dim", "mapping_layers", "fmaps",
                     "batch_size", "lazy_reg_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if len(self.adam_betas) != 2 or not all(0.0 <= b < 1.0 for b in self.adam_betas):
            raise ValueError("adam_betas must be two reals in [0, 1)")
        for name in ("r1_gamma", "ppl_weight", "lipschitz_l1_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 < self.ppl_decay < 1.0:
            raise ValueError("ppl_decay must lie in (0, 1)")
        if not 0.0 <= self.ema_beta < 1.0:
            raise ValueError("ema_beta must lie in [0, 1)")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")

    @property
    def resolutions(self):
        res, r = [], 4
        while r <= self.image_size:
            res.append(r)
            r *= 2
        return res

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(d["adam_betas"])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown GanConfig keys: {sorted(unknown)}")
        return cls(**d)
