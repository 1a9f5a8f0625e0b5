"""Alternating critic/generator updates with lazy regularization and EMA."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from . import losses
from .config import GanConfig
from .networks import critic_forward, generate, init_critic, init_generator, mapping_forward

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step, term, value):
        super().__init__(f"non-finite {term} ({value}) at step {step}")
        self.step = step
        self.term = term


@dataclass
class ModelState:
    config: GanConfig
    generator: dict
    critic: dict
    ema_generator: dict
    moments: dict = field(default_factory=dict)
    ppl_running_mean: float = 0.0
    step: int = 0

    def generator_forward(self, w, ema=False):
        params = self.ema_generator if ema else self.generator
        return generate(w, params, self.config)

    def sample(self, z, ema=True):
        params = self.ema_generator if ema else self.generator
        with ag.no_grad():
            return generate(mapping_forward(z, params), params, self.config).data


def init_state(config):
    rng = np.random.default_rng([config.seed, 0])
    g = init_generator(config, rng)
    d = init_critic(config, rng)
    ema = {k: Tensor(v.data.copy()) for k, v in g.items()}
    moments = {}
    for net, params in (("G", g), ("D", d)):
        for k, v in params.items():
            moments[f"{net}.m/{k}"] = np.zeros_like(v.data)
            moments[f"{net}.v/{k}"] = np.zeros_like(v.data)
    return ModelState(config, g, d, ema, moments)


def ema_update(params, ema_params, beta):
    """In-place ``ema <- beta * ema + (1 - beta) * params``; returns ``ema_params``."""
    for k, p in params.items():
        e = ema_params[k]
        src = p.data if isinstance(p, Tensor) else np.asarray(p)
        dst = e.data if isinstance(e, Tensor) else e
        if src.shape != dst.shape:
            raise ValueError(f"ema_update: shape mismatch for {k}: {src.shape} vs {dst.shape}")
        dst *= beta
        dst += (1.0 - beta) * src
    return ema_params


def adam_update(params, grads, moments, net, step, config):
    """One Adam step; ``step`` is the 1-based update count."""
    b1, b2 = config.adam_betas
    lr = config.learning_rate
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for (k, p), g in zip(params.items(), grads):
        m = moments[f"{net}.m/{k}"]
        v = moments[f"{net}.v/{k}"]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)


def _check_finite(step, metrics):
    for term, value in metrics.items():
        if not np.isfinite(value):
            raise TrainingDiverged(step, term, value)


def _critic(state):
    return lambda x: critic_forward(x, state.critic)


def _generator(state):
    return lambda w: generate(w, state.generator, state.config)


def step_rng(config, step):
    return np.random.default_rng([config.seed, 2, step])


def train_step(state, real_batch, config=None):
    """One critic update then one generator update; returns metrics.

    Regularizers run every ``lazy_reg_interval`` steps, scaled by the
    interval. ``real_batch`` must already be in the model's value range.
    """
    cfg = config or state.config
    rng = step_rng(cfg, state.step)
    t = state.step + 1
    interval = cfg.lazy_reg_interval
    do_reg = state.step % interval == 0
    n = real_batch.shape[0]
    metrics = {}

    # critic
    z = rng.standard_normal((n, cfg.style_dim))
    with ag.no_grad():
        fake = generate(mapping_forward(z, state.generator), state.generator, cfg).data
    d_params = list(state.critic.values())
    critic = _critic(state)
    use_r1 = do_reg and cfg.r1_gamma > 0
    use_lip = do_reg and cfg.lipschitz_l1_weight > 0
    real_t = Tensor(real_batch, requires_grad=use_r1 or use_lip)
    fake_t = Tensor(fake, requires_grad=use_lip)
    real_logits = critic(real_t)
    fake_logits = critic(fake_t)
    d_loss = losses.loss_critic(real_logits, fake_logits)
    metrics["loss_critic"] = d_loss.item()
    total = d_loss
    if use_r1 or use_lip:
        inputs = [real_t] + ([fake_t] if use_lip else [])
        summed = ag.sum(real_logits) + (ag.sum(fake_logits) if use_lip else 0.0)
        grads_x = ag.grad(summed, inputs, create_graph=True)
        if use_r1:
            r1 = losses.r1_from_gradients(grads_x[0], cfg.r1_gamma)
            metrics["r1"] = r1.item()
            total = total + r1 * float(interval)
        if use_lip:
            lip = losses.lipschitz_from_gradients(grads_x)
            metrics["lipschitz_l1"] = lip.item()
            total = total + lip * (cfg.lipschitz_l1_weight * interval)
    _check_finite(state.step, metrics)
    grads = ag.grad(total, d_params)
    adam_update(state.critic, [g.data for g in grads], state.moments, "D", t, cfg)

    # generator
    g_params = list(state.generator.values())
    z = rng.standard_normal((n, cfg.style_dim))
    fake_t = generate(mapping_forward(z, state.generator), state.generator, cfg)
    g_loss = losses.loss_generator(critic(fake_t))
    metrics["loss_generator"] = g_loss.item()
    total = g_loss
    if do_reg and cfg.ppl_weight > 0:
        z = rng.standard_normal((n, cfg.style_dim))
        w = mapping_forward(z, state.generator)
        noise = losses.ppl_noise(rng, (n, cfg.channels, cfg.image_size, cfg.image_size))
        ppl, new_mean = losses.ppl_penalty(_generator(state), w, state.ppl_running_mean,
                                           cfg.ppl_decay, noise)
        metrics["ppl"] = ppl.item()
        total = total + ppl * (cfg.ppl_weight * interval)
    _check_finite(state.step, metrics)
    grads = ag.grad(total, g_params)
    adam_update(state.generator, [g.data for g in grads], state.moments, "G", t, cfg)
    if do_reg and cfg.ppl_weight > 0:
        state.ppl_running_mean = new_mean

    ema_update(state.generator, state.ema_generator, cfg.ema_beta)
    state.step = t
    for net in (state.generator, state.critic):
        for p in net.values():
            if not np.all(np.isfinite(p.data)):
                raise TrainingDiverged(state.step, "parameters", float("nan"))
    return metrics


def to_model_range(images):
    """[0, 1] pixel values to the [-1, 1] range the networks see."""
    return np.asarray(images, dtype=np.float64) * 2.0 - 1.0


def batch_indices(n_images, batch_size, step, seed):
    """Indices of the ``step``-th batch under seeded per-epoch shuffling."""
    start = step * batch_size
    idx = []
    pos = start
    while len(idx) < batch_size:
        epoch, offset = divmod(pos, n_images)
        perm = np.random.default_rng([seed, 1, epoch]).permutation(n_images)
        take = min(batch_size - len(idx), n_images - offset)
        idx.extend(perm[offset:offset + take])
        pos += take
    return np.asarray(idx)


def train(config, dataset, state=None, steps=None, callback=None, log_every=100):
    """Run ``steps`` (default ``config.steps`` minus steps already done)."""
    images = to_model_range(dataset)
    if images.ndim != 4 or images.shape[1:] != (config.channels, config.image_size, config.image_size):
        raise ValueError(
            f"dataset images have shape {images.shape[1:]}, config expects "
            f"{(config.channels, config.image_size, config.image_size)}")
    if state is None:
        state = init_state(config)
    if steps is None:
        steps = max(config.steps - state.step, 0)
    history = []
    for _ in range(steps):
        idx = batch_indices(len(images), config.batch_size, state.step, config.seed)
        metrics = train_step(state, images[idx], config)
        history.append(metrics)
        if callback is not None:
            callback(state, metrics)
        if log_every and state.step % log_every == 0:
            logger.info("step %d %s", state.step,
                        " ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    return state, history
