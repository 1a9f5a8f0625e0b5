"""Seeded finite-difference sweep over every differentiable op and regularizer.

Each case draws random shapes and values, contracts the op's output with
fixed random weights to get a scalar, and compares the analytic gradient
with central differences for every differentiable input.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor, grad_check
from .gan import losses
from .gan.config import GanConfig
from .gan.networks import critic_forward, generate, init_critic, init_generator, mapping_forward

OP_TOL = 1e-4
REGULARIZER_TOL = 1e-3


@dataclass
class CaseResult:
    name: str
    seed: int
    max_rel_error: float
    n_checked: int
    n_kinks: int
    tol: float

    @property
    def passed(self):
        return self.max_rel_error < self.tol


def _contract(out, rng):
    weights = Tensor(rng.standard_normal(out.shape))
    return ag.sum(ag.mul(out, weights))


def _dims(rng, n, lo=1, hi=4):
    return tuple(int(d) for d in rng.integers(lo, hi + 1, size=n))


def _positive(rng, shape):
    return np.abs(rng.standard_normal(shape)) + 0.5


def _cases_for(fn_of_inputs, inputs, rng):
    """Check the gradient with respect to each input in turn."""
    seed = int(rng.integers(2**32))
    pairs = []
    for k in range(len(inputs)):
        def f(t, k=k):
            args = [Tensor(a) for a in inputs]
            args[k] = t
            return _contract(fn_of_inputs(*args), np.random.default_rng(seed))
        pairs.append((f, inputs[k]))
    return pairs


def _binary(fn, second=None):
    def build(rng):
        shape = _dims(rng, 2)
        a = rng.standard_normal(shape)
        # broadcast the second operand along a random axis half of the time
        bshape = (1, shape[1]) if rng.random() < 0.5 else shape
        b = second(rng, bshape) if second else rng.standard_normal(bshape)
        return _cases_for(fn, [a, b], rng)
    return build


def _single(fn, make_input):
    def build(rng):
        return _cases_for(fn, [make_input(rng)], rng)
    return build


def _image(rng, even=False):
    b, c = _dims(rng, 2, 1, 3)
    h = int(rng.integers(2, 4)) * 2 if even else int(rng.integers(3, 7))
    return rng.standard_normal((b, c, h, h))


def _build_conv(padding):
    def build(rng):
        x = _image(rng)
        k = 1 if rng.random() < 0.3 else 3
        o = int(rng.integers(1, 4))
        w = rng.standard_normal((o, x.shape[1], k, k)) * 0.5
        bias = rng.standard_normal(o)
        return _cases_for(lambda a, b, c: ag.conv2d(a, b, c, padding=padding), [x, w, bias], rng)
    return build


def _build_linear(rng):
    n, i, o = _dims(rng, 3)
    return _cases_for(ag.linear, [rng.standard_normal((n, i)), rng.standard_normal((o, i)),
                                  rng.standard_normal(o)], rng)


def _build_matmul(rng):
    n, k, m = _dims(rng, 3)
    return _cases_for(ag.matmul, [rng.standard_normal((n, k)), rng.standard_normal((k, m))], rng)


def _build_einsum(rng):
    b, i, j, k = _dims(rng, 4)
    return _cases_for(lambda x, y: ag.einsum("bij,jk->bik", x, y),
                      [rng.standard_normal((b, i, j)), rng.standard_normal((j, k))], rng)


def _build_concat(rng):
    n, m1, m2 = _dims(rng, 3)
    return _cases_for(lambda a, b: ag.concat([a, b], axis=1),
                      [rng.standard_normal((n, m1)), rng.standard_normal((n, m2))], rng)


OP_CASES = {
    "add": _binary(ag.add),
    "sub": _binary(ag.sub),
    "mul": _binary(ag.mul),
    "div": _binary(ag.div, second=_positive),
    "power": _single(lambda x: ag.power(x, 3.0), lambda r: r.standard_normal(_dims(r, 2))),
    "sqrt": _single(ag.sqrt, lambda r: _positive(r, _dims(r, 2))),
    "exp": _single(ag.exp, lambda r: r.standard_normal(_dims(r, 2))),
    "log": _single(ag.log, lambda r: _positive(r, _dims(r, 2))),
    "sigmoid": _single(ag.sigmoid, lambda r: 2 * r.standard_normal(_dims(r, 2))),
    "softplus": _single(ag.softplus, lambda r: 2 * r.standard_normal(_dims(r, 2))),
    "leaky_relu": _single(ag.leaky_relu, lambda r: r.standard_normal(_dims(r, 2))),
    "abs": _single(ag.abs, lambda r: r.standard_normal(_dims(r, 2))),
    "norm": _single(lambda x: ag.norm(x, axis=1), lambda r: r.standard_normal(_dims(r, 2))),
    "sum": _single(lambda x: ag.sum(x, axis=0, keepdims=True), lambda r: r.standard_normal(_dims(r, 3))),
    "mean": _single(lambda x: ag.mean(x, axis=(0, 2)), lambda r: r.standard_normal(_dims(r, 3))),
    "reshape": _single(lambda x: ag.reshape(x, (-1,)), lambda r: r.standard_normal(_dims(r, 3))),
    "transpose": _single(lambda x: ag.transpose(x, (2, 0, 1)), lambda r: r.standard_normal(_dims(r, 3))),
    "getitem": _single(lambda x: ag.getitem(x, (slice(None), 0)), lambda r: r.standard_normal(_dims(r, 2))),
    "broadcast_to": _single(lambda x: ag.broadcast_to(x, (3,) + x.shape),
                            lambda r: r.standard_normal(_dims(r, 2))),
    "concat": _build_concat,
    "einsum": _build_einsum,
    "matmul": _build_matmul,
    "linear": _build_linear,
    "conv2d_same": _build_conv("same"),
    "conv2d_valid": _build_conv("valid"),
    "pad2d": _single(lambda x: ag.pad2d(x, 1), _image),
    "unfold": _single(lambda x: ag.unfold(x, 3), _image),
    "upsample2x": _single(ag.upsample2x, _image),
    "downsample2x": _single(ag.downsample2x, lambda r: _image(r, even=True)),
}


def tiny_gan_config(seed):
    return GanConfig(image_size=8, channels=2, style_dim=4, mapping_layers=2, feature_dim=4,
                     fmaps=4, batch_size=2, seed=seed)


def _build_r1(rng):
    cfg = tiny_gan_config(int(rng.integers(1000)))
    critic = init_critic(cfg, rng)
    real = rng.uniform(-1, 1, (2, cfg.channels, cfg.image_size, cfg.image_size))

    def f(t):
        params = dict(critic, **{"fromrgb.weight": t})
        return losses.r1_penalty(lambda x: critic_forward(x, params), real, 1.0)
    return [(f, critic["fromrgb.weight"].data)]


def _build_lipschitz(rng):
    cfg = tiny_gan_config(int(rng.integers(1000)))
    critic = init_critic(cfg, rng)
    shape = (2, cfg.channels, cfg.image_size, cfg.image_size)
    real, fake = rng.uniform(-1, 1, shape), rng.uniform(-1, 1, shape)

    def f(t):
        params = dict(critic, **{"fromrgb.weight": t})
        return losses.lipschitz_l1_penalty(lambda x: critic_forward(x, params), real, fake)
    return [(f, critic["fromrgb.weight"].data)]


def _build_ppl(rng):
    cfg = tiny_gan_config(int(rng.integers(1000)))
    gen = init_generator(cfg, rng)
    z = rng.standard_normal((2, cfg.style_dim))
    noise = losses.ppl_noise(rng, (2, cfg.channels, cfg.image_size, cfg.image_size))
    name = f"g{cfg.image_size}.torgb.weight"

    def f(t):
        params = dict(gen, **{name: t})
        w = mapping_forward(Tensor(z), params)
        penalty, _ = losses.ppl_penalty(lambda v: generate(v, params, cfg), w, 0.5, 0.01, noise)
        return penalty
    return [(f, gen[name].data)]


REGULARIZER_CASES = {"r1": _build_r1, "lipschitz_l1": _build_lipschitz, "ppl": _build_ppl}


def _run(name, build, seed, tol):
    rng = np.random.default_rng([seed, sum(map(ord, name))])
    worst, checked, kinks = 0.0, 0, 0
    for f, x in build(rng):
        res = grad_check(f, x)
        worst = max(worst, res.max_rel_error)
        checked += res.n_checked
        kinks += len(res.kinks)
    return CaseResult(name, seed, worst, checked, kinks, tol)


def run_suite(op_seeds=range(4), regularizer_seeds=range(2)):
    """All cases; ops at 1e-4, regularizers at 1e-3."""
    results = []
    for seed in op_seeds:
        for name, build in OP_CASES.items():
            results.append(_run(name, build, seed, OP_TOL))
    for seed in regularizer_seeds:
        for name, build in REGULARIZER_CASES.items():
            results.append(_run(name, build, seed, REGULARIZER_TOL))
    return results


def summarize(results):
    """Worst error per case name."""
    out = {}
    for r in results:
        prev = out.get(r.name)
        if prev is None or r.max_rel_error > prev.max_rel_error:
            out[r.name] = r
    return out


if __name__ == "__main__":
    t = time.time()
    res = run_suite()
    for name, r in summarize(res).items():
        print(f"{name:14s} {r.max_rel_error:.2e} {'ok' if r.passed else 'FAIL'}")
    print(len(res), "cases", round(time.time() - t, 1), "s")
