"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


def check_images(X, channels=None, size=None, name="X"):
    """Validate an (N, C, H, W) float image batch and return it as float64."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ValueError(f"{name} must be an (N, C, H, W) image batch, got shape {X.shape}")
    if channels is not None and X.shape[1] != channels:
        raise ValueError(f"{name} has {X.shape[1]} channels, expected {channels}")
    if size is not None and X.shape[2:] != (size, size):
        raise ValueError(f"{name} images are {X.shape[2]}x{X.shape[3]}, expected {size}x{size}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_embeddings(X, n_features=None, name="X"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D (n_samples, n_features) array, got {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, expected {n_features}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X
