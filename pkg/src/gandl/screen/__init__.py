"""Synthetic screens, manifests, image blobs and channel utilities."""

from .config import CompoundProfile, SyntheticScreenConfig
from .generate import generate_synthetic_screen, render_screen
from .io import Group, WellRecord, load_images, load_manifest

__all__ = ["CompoundProfile", "Group", "SyntheticScreenConfig", "WellRecord",
           "generate_synthetic_screen", "load_images", "load_manifest", "render_screen"]
