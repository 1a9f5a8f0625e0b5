"""Generator (mapping + modulated synthesis) and residual critic.

Parameters are plain ``dict[str, Tensor]`` so they can be swapped,
zeroed, or serialized without any module machinery.
"""

from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor

DEMOD_EPS = 1e-8
POOL_EPS = 1e-8


def _param(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def n_feature_maps(config, res):
    """Channel width at resolution ``res``; halves above 8x8."""
    return max(min(config.fmaps, (config.fmaps * 8) // res), 1)


def init_generator(config, rng):
    sd = config.style_dim
    nf = n_feature_maps
    p = {}
    for i in range(config.mapping_layers):
        p[f"map{i}.weight"] = _param(rng.normal(size=(sd, sd)) / np.sqrt(sd))
        p[f"map{i}.bias"] = _param(np.zeros(sd))
    p["const"] = _param(rng.normal(size=(nf(config, 4), 4, 4)))

    def modconv(prefix, cin, cout, k):
        p[f"{prefix}.affine.weight"] = _param(rng.normal(size=(cin, sd)) / np.sqrt(sd))
        p[f"{prefix}.affine.bias"] = _param(np.ones(cin))
        p[f"{prefix}.weight"] = _param(rng.normal(size=(cout, cin, k, k)) / np.sqrt(cin * k * k))
        p[f"{prefix}.bias"] = _param(np.zeros(cout))

    for res in config.resolutions:
        c = nf(config, res)
        if res > 4:
            modconv(f"g{res}.conv0", nf(config, res // 2), c, 3)
        modconv(f"g{res}.conv1", c, c, 3)
        modconv(f"g{res}.torgb", c, config.channels, 1)
    return p


def pooled_width(config):
    """Width of the per-stage channel means and spreads feeding the embedding layer."""
    nf = n_feature_maps
    stages = [config.image_size] + [res // 2 for res in config.resolutions[1:]] + [4]
    return 2 * sum(nf(config, r) for r in stages)


def _pool(x):
    mean = ag.mean(x, axis=(2, 3))
    centred = x - ag.reshape(mean, mean.shape + (1, 1))
    return [mean, ag.sqrt(ag.mean(centred * centred, axis=(2, 3)) + POOL_EPS)]


def init_critic(config, rng):
    nf = n_feature_maps
    p = {}

    def conv(name, cin, cout, k, bias=True):
        p[f"{name}.weight"] = _param(rng.normal(size=(cout, cin, k, k)) / np.sqrt(cin * k * k))
        if bias:
            p[f"{name}.bias"] = _param(np.zeros(cout))

    conv("fromrgb", config.channels, nf(config, config.image_size), 1)
    for res in reversed(config.resolutions[1:]):
        cin, cout = nf(config, res), nf(config, res // 2)
        conv(f"d{res}.conv0", cin, cin, 3)
        conv(f"d{res}.conv1", cin, cout, 3)
        conv(f"d{res}.skip", cin, cout, 1, bias=False)
    c = nf(config, 4)
    conv("d4.conv", c, c, 3)
    fan_in = pooled_width(config)
    p["fc.weight"] = _param(rng.normal(size=(config.feature_dim, fan_in)) / np.sqrt(fan_in))
    p["fc.bias"] = _param(np.zeros(config.feature_dim))
    p["out.weight"] = _param(rng.normal(size=(1, config.feature_dim)) / np.sqrt(config.feature_dim))
    p["out.bias"] = _param(np.zeros(1))
    return p


# -- generator ------------------------------------------------------------------

def mapping_forward(z, params, n_layers=None):
    """Map latents ``z`` (B, style_dim) or (style_dim,) to style vectors."""
    z = ag.as_tensor(z)
    single = z.ndim == 1
    if single:
        z = ag.reshape(z, (1, z.shape[0]))
    if n_layers is None:
        n_layers = sum(1 for k in params if k.startswith("map") and k.endswith(".weight"))
    x = z
    for i in range(n_layers):
        w = params[f"map{i}.weight"]
        if x.shape[1] != w.shape[1]:
            raise ag.ShapeError(f"mapping_forward: latent length {x.shape[1]} != style_dim {w.shape[1]}")
        x = ag.leaky_relu(ag.linear(x, w, params[f"map{i}.bias"]))
    return ag.reshape(x, (x.shape[1],)) if single else x


def modulated_conv(x, w, params, prefix, demodulate=True):
    """Style-modulated convolution with optional demodulation.

    Equivalent to scaling the kernel per input channel by the style and
    renormalizing each output filter, but applied to activations so one
    shared kernel serves the whole batch.
    """
    weight = params[f"{prefix}.weight"]
    styles = ag.linear(w, params[f"{prefix}.affine.weight"], params[f"{prefix}.affine.bias"])
    b, cin = styles.shape
    x = x * ag.reshape(styles, (b, cin, 1, 1))
    y = ag.conv2d(x, weight)
    if demodulate:
        o, _, k, _ = weight.shape
        w2 = ag.reshape(weight * weight, (o, cin, k * k))
        energy = ag.einsum("ock,bc->bo", w2, styles * styles)
        y = y * ag.reshape(ag.power(energy + DEMOD_EPS, -0.5), (b, o, 1, 1))
    return y + ag.reshape(params[f"{prefix}.bias"], (1, weight.shape[0], 1, 1))


def synthesis_forward(w, params, resolutions):
    w = ag.as_tensor(w)
    single = w.ndim == 1
    if single:
        w = ag.reshape(w, (1, w.shape[0]))
    b = w.shape[0]
    const = params["const"]
    x = ag.broadcast_to(ag.reshape(const, (1,) + const.shape), (b,) + const.shape)
    img = None
    for res in resolutions:
        if res > 4:
            x = ag.upsample2x(x)
            x = ag.leaky_relu(modulated_conv(x, w, params, f"g{res}.conv0"))
        x = ag.leaky_relu(modulated_conv(x, w, params, f"g{res}.conv1"))
        rgb = modulated_conv(x, w, params, f"g{res}.torgb", demodulate=False)
        img = rgb if img is None else ag.upsample2x(img) + rgb
    return img[0] if single else img


def generate(w, params, config):
    """Render images from style vectors through the synthesis network."""
    return synthesis_forward(w, params, config.resolutions)


# -- critic ---------------------------------------------------------------------

def _resolutions_of(params):
    res = sorted(int(k[1:].split(".")[0]) for k in params
                 if k.startswith("d") and k.endswith(".skip.weight"))
    return res[::-1]


def critic_features(images, params):
    """Activations of the critic's last hidden (pre-logit) layer."""
    x = ag.as_tensor(images)
    single = x.ndim == 3
    if single:
        x = ag.reshape(x, (1,) + x.shape)
    wrgb = params["fromrgb.weight"]
    if x.ndim != 4 or x.shape[1] != wrgb.shape[1]:
        raise ag.ShapeError(
            f"critic: image shape {x.shape[1:]} does not match {wrgb.shape[1]} input channels")
    blocks = _resolutions_of(params)
    expected = blocks[0] if blocks else 4
    if x.shape[2] != expected or x.shape[3] != expected:
        raise ag.ShapeError(f"critic: expected {expected}x{expected} images, got {x.shape[2:]}")
    x = ag.leaky_relu(ag.conv2d(x, wrgb, params["fromrgb.bias"]))
    # every stage contributes its spatial mean and spread: the shallow stages
    # see stain co-localization and cell shape, which downsampling blurs away
    pooled = _pool(x)
    for res in blocks:
        h = ag.leaky_relu(ag.conv2d(x, params[f"d{res}.conv0.weight"], params[f"d{res}.conv0.bias"]))
        h = ag.leaky_relu(ag.conv2d(h, params[f"d{res}.conv1.weight"], params[f"d{res}.conv1.bias"]))
        h = ag.downsample2x(h)
        skip = ag.conv2d(ag.downsample2x(x), params[f"d{res}.skip.weight"])
        x = (h + skip) * (1.0 / np.sqrt(2.0))
        pooled += _pool(x)
    x = ag.leaky_relu(ag.conv2d(x, params["d4.conv.weight"], params["d4.conv.bias"]))
    pooled += _pool(x)
    feats = ag.leaky_relu(ag.linear(ag.concat(pooled, axis=1), params["fc.weight"], params["fc.bias"]))
    return feats[0] if single else feats


def critic_head(features, params):
    f = ag.as_tensor(features)
    single = f.ndim == 1
    if single:
        f = ag.reshape(f, (1, f.shape[0]))
    logits = ag.reshape(ag.linear(f, params["out.weight"], params["out.bias"]), (f.shape[0],))
    return logits[0] if single else logits


def critic_forward(images, params):
    """Scalar realness logit per image (B,) or a scalar for one image."""
    return critic_head(critic_features(images, params), params)
