"""Adversarial losses and the four regularizers.

Regularizers take a ``critic`` or ``generator`` callable rather than
parameter dicts, so they apply equally to the real networks and to the
analytic stand-ins used in tests.
"""

from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor


def loss_critic(real_logits, fake_logits):
    """Non-saturating logistic critic loss."""
    return ag.mean(ag.softplus(fake_logits)) + ag.mean(ag.softplus(-ag.as_tensor(real_logits)))


def loss_generator(fake_logits):
    return ag.mean(ag.softplus(-ag.as_tensor(fake_logits)))


def input_gradients(critic, images, create_graph=True):
    """d critic(x_b) / d x_b for every image in the batch."""
    x = images if isinstance(images, Tensor) and images.requires_grad else \
        Tensor(ag.as_tensor(images).data, requires_grad=True)
    logits = critic(x)
    g = ag.grad(ag.sum(logits), x, create_graph=create_graph)
    return logits, g


def _per_sample_sq_norm(g):
    axes = tuple(range(1, g.ndim))
    return ag.sum(g * g, axis=axes)


def r1_from_gradients(g, gamma):
    return ag.mean(_per_sample_sq_norm(g)) * (gamma / 2.0)


def lipschitz_from_gradients(grads):
    norms = [ag.norm(g, axis=tuple(range(1, g.ndim))) for g in grads]
    dev = ag.abs(ag.concat(norms, axis=0) - 1.0)
    return ag.mean(dev)


def r1_penalty(critic, real_batch, gamma):
    """(gamma / 2) * mean_b ||grad_x critic(x_b)||^2 on real images."""
    _, g = input_gradients(critic, real_batch)
    return r1_from_gradients(g, gamma)


def lipschitz_l1_penalty(critic, real_batch, fake_batch):
    """Mean over both batches of | ||grad_x critic(x)|| - 1 |."""
    _, g_real = input_gradients(critic, real_batch)
    _, g_fake = input_gradients(critic, fake_batch)
    return lipschitz_from_gradients([g_real, g_fake])


def path_lengths(generator, w_batch, noise, create_graph=True):
    """Per-sample ||J_w^T y|| for the image-space probe ``noise``."""
    w = w_batch if isinstance(w_batch, Tensor) and w_batch.requires_grad else \
        Tensor(ag.as_tensor(w_batch).data, requires_grad=True)
    images = generator(w)
    probe = ag.sum(images * Tensor(noise))
    jt_y = ag.grad(probe, w, create_graph=create_graph)
    return ag.norm(jt_y, axis=tuple(range(1, jt_y.ndim)))


def ppl_noise(rng, shape):
    """Unit-variance image noise scaled by 1 / image_size."""
    return rng.standard_normal(shape) / np.sqrt(shape[-1] * shape[-2])


def ppl_penalty(generator, w_batch, running_mean, decay, noise):
    """Path-length penalty and the updated running mean of path lengths.

    The penalty is measured against the mean *before* this batch is folded
    into it.
    """
    lengths = path_lengths(generator, w_batch, noise)
    penalty = ag.mean((lengths - running_mean) ** 2)
    new_mean = running_mean + decay * (float(np.mean(lengths.data)) - running_mean)
    return penalty, new_mean
