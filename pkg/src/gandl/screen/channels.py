from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .. import autograd as ag
from ..autograd import Tensor
from ..validation import check_images


def drop_channel(image, index):
    """Remove channel ``index`` from a (C, H, W) image or (N, C, H, W) batch."""
    image = np.asarray(image)
    axis = image.ndim - 3
    if image.ndim not in (3, 4):
        raise ValueError(f"expected (C, H, W) or (N, C, H, W), got {image.shape}")
    n_channels = image.shape[axis]
    if not 0 <= index < n_channels:
        raise IndexError(f"channel index {index} out of range for {n_channels} channels")
    return np.delete(image, index, axis=axis)


def channel_adapter(image, weights, bias=None):
    """Per-pixel linear map across channels (a 1x1 convolution).

    Works on numpy arrays or on Tensors; with Tensors the map is recorded
    so ``weights`` and ``bias`` can be trained.
    """
    x = ag.as_tensor(image)
    w = ag.as_tensor(weights)
    single = x.ndim == 3
    if single:
        x = ag.reshape(x, (1,) + x.shape)
    if w.ndim != 2 or x.ndim != 4 or w.shape[1] != x.shape[1]:
        raise ag.ShapeError(f"channel_adapter: weights {w.shape} do not map "
                            f"{x.shape[1] if x.ndim == 4 else '?'} input channels")
    out = ag.einsum("bchw,oc->bohw", x, w)
    if bias is not None:
        b = ag.as_tensor(bias)
        if b.shape != (w.shape[0],):
            raise ag.ShapeError(f"channel_adapter: bias shape {b.shape}, expected ({w.shape[0]},)")
        out = out + ag.reshape(b, (1, w.shape[0], 1, 1))
    out = out[0] if single else out
    if isinstance(image, Tensor) or isinstance(weights, Tensor) or isinstance(bias, Tensor):
        return out
    return out.data


class ChannelDropper(TransformerMixin, BaseEstimator):
    """Drop one channel from (N, C, H, W) image batches; ``None`` is a no-op."""

    def __init__(self, index=None):
        self.index = index

    def fit(self, X, y=None):
        X = check_images(X)
        self.n_channels_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_images(X)
        return X if self.index is None else drop_channel(X, self.index)


class ChannelAdapter(TransformerMixin, BaseEstimator):
    """Fixed 1x1 channel map; identity-initialized when weights are omitted."""

    def __init__(self, weights=None, bias=None):
        self.weights = weights
        self.bias = bias

    def fit(self, X, y=None):
        X = check_images(X)
        c = X.shape[1]
        self.weights_ = np.eye(c) if self.weights is None else np.asarray(self.weights, float)
        out = self.weights_.shape[0]
        self.bias_ = np.zeros(out) if self.bias is None else np.asarray(self.bias, float)
        return self

    def transform(self, X):
        return channel_adapter(check_images(X), self.weights_, self.bias_)
