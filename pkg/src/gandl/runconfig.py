"""Run configuration document shared by every CLI command."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .gan.config import GanConfig
from .screen.config import SyntheticScreenConfig
from .svm import SvmConfig


@dataclass(frozen=True)
class EvalSettings:
    split_seed: int = 0
    baseline_seed: int = 0
    baseline_feature_dim: int = 64
    dropped_channel: int | None = None
    k_classes: int = 4


@dataclass(frozen=True)
class RunConfig:
    gan: GanConfig = field(default_factory=GanConfig)
    screen: SyntheticScreenConfig = field(default_factory=SyntheticScreenConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    paths: dict = field(default_factory=dict)

    def to_dict(self):
        return {"gan": self.gan.to_dict(), "screen": self.screen.to_dict(),
                "svm": dataclasses.asdict(self.svm), "eval": dataclasses.asdict(self.eval),
                "paths": dict(self.paths)}

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self):
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def seeds(self):
        return {"gan": self.gan.seed, "screen": self.screen.seed, "svm": self.svm.seed,
                "split": self.eval.split_seed, "baseline": self.eval.baseline_seed}


def _strict(cls, section, data):
    if not isinstance(data, dict):
        raise ValueError(f"config section '{section}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown keys in config section '{section}': {unknown}")
    return cls(**data)


def run_config_from_dict(d):
    sections = {"gan", "screen", "svm", "eval", "paths"}
    unknown = sorted(set(d) - sections)
    if unknown:
        raise ValueError(f"unknown config sections: {unknown}")
    try:
        paths = d.get("paths", {})
        if not isinstance(paths, dict) or not all(isinstance(v, str) for v in paths.values()):
            raise ValueError("config section 'paths' must map names to strings")
        return RunConfig(
            gan=GanConfig.from_dict(d.get("gan", {})),
            screen=SyntheticScreenConfig.from_dict(d.get("screen", {})),
            svm=_strict(SvmConfig, "svm", d.get("svm", {})),
            eval=_strict(EvalSettings, "eval", d.get("eval", {})),
            paths=paths)
    except TypeError as exc:
        raise ValueError(f"invalid config value: {exc}") from exc


def load_run_config(path):
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must be a JSON object")
    return run_config_from_dict(data)
