"""Scikit-learn facing wrapper: train the GAN, then embed images with its critic."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .. import autograd as ag
from ..validation import check_images
from .checkpoint import load_checkpoint, save_checkpoint
from .config import GanConfig
from .networks import critic_features
from .training import to_model_range, train

EMBED_BATCH = 64


def critic_embeddings(state, images, batch_size=EMBED_BATCH):
    """Penultimate critic activations for images with pixel values in [0, 1]."""
    cfg = state.config
    X = check_images(images, cfg.channels, cfg.image_size, name="images")
    out = np.zeros((X.shape[0], cfg.feature_dim))
    with ag.no_grad():
        for start in range(0, X.shape[0], batch_size):
            chunk = to_model_range(X[start:start + batch_size])
            out[start:start + len(chunk)] = critic_features(chunk, state.critic).data
    return out


class GanFeaturizer(TransformerMixin, BaseEstimator):
    """Self-supervised featurizer.

    ``fit`` trains the adversarial pair on unlabeled images in [0, 1];
    ``transform`` returns the critic's penultimate-layer embedding.
    """

    def __init__(self, image_size=16, channels=5, style_dim=64, feature_dim=0, fmaps=32,
                 learning_rate=1e-4, batch_size=16, r1_gamma=10.0, ppl_weight=2.0,
                 lipschitz_l1_weight=0.1, ema_beta=0.999, lazy_reg_interval=4, steps=2000,
                 random_state=0):
        self.image_size = image_size
        self.channels = channels
        self.style_dim = style_dim
        self.feature_dim = feature_dim
        self.fmaps = fmaps
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.r1_gamma = r1_gamma
        self.ppl_weight = ppl_weight
        self.lipschitz_l1_weight = lipschitz_l1_weight
        self.ema_beta = ema_beta
        self.lazy_reg_interval = lazy_reg_interval
        self.steps = steps
        self.random_state = random_state

    def gan_config(self):
        return GanConfig(
            image_size=self.image_size, channels=self.channels, style_dim=self.style_dim,
            feature_dim=self.feature_dim, fmaps=self.fmaps, learning_rate=self.learning_rate,
            batch_size=self.batch_size, r1_gamma=self.r1_gamma, ppl_weight=self.ppl_weight,
            lipschitz_l1_weight=self.lipschitz_l1_weight, ema_beta=self.ema_beta,
            lazy_reg_interval=self.lazy_reg_interval, steps=self.steps, seed=self.random_state)

    def fit(self, X, y=None):
        cfg = self.gan_config()
        X = check_images(X, cfg.channels, cfg.image_size)
        self.state_, self.history_ = train(cfg, X, log_every=0)
        self.n_features_out_ = cfg.feature_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "state_")
        return critic_embeddings(self.state_, X)

    def save(self, path):
        check_is_fitted(self, "state_")
        save_checkpoint(self.state_, path)

    @classmethod
    def from_state(cls, state):
        c = state.config
        est = cls(image_size=c.image_size, channels=c.channels, style_dim=c.style_dim,
                  feature_dim=c.feature_dim, fmaps=c.fmaps, learning_rate=c.learning_rate,
                  batch_size=c.batch_size, r1_gamma=c.r1_gamma, ppl_weight=c.ppl_weight,
                  lipschitz_l1_weight=c.lipschitz_l1_weight, ema_beta=c.ema_beta,
                  lazy_reg_interval=c.lazy_reg_interval, steps=c.steps, random_state=c.seed)
        est.state_ = state
        est.history_ = []
        est.n_features_out_ = c.feature_dim
        return est

    @classmethod
    def load(cls, path):
        return cls.from_state(load_checkpoint(path))
