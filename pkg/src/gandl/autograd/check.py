"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, grad


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    kinks: list = field(default_factory=list)
    nonfinite: list = field(default_factory=list)
    worst_index: tuple | None = None

    @property
    def finite(self):
        return not self.nonfinite

    def ok(self, tol=1e-4):
        return self.finite and self.max_rel_error < tol


def _second_difference(f, x, i, h):
    flat = x.reshape(-1)
    orig = flat[i]
    flat[i] = orig + h
    fp = f(x)
    flat[i] = orig - h
    fm = f(x)
    flat[i] = orig
    return fp, fm


def grad_check(f, x, eps=1e-5, detect_kinks=True):
    """Compare autodiff against central differences for scalar ``f``.

    ``f`` maps a Tensor to a scalar Tensor. The error per coordinate is
    ``|analytic - central| / max(1, |analytic|)``. Coordinates whose
    second differences do not scale quadratically with the step (a kink
    of a piecewise-linear unit within a few steps) are reported in
    ``kinks`` and excluded from the maximum.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(x0.copy(), requires_grad=True)
    out = f(xt)
    if out.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {out.shape}")
    analytic = grad(out, xt).data.reshape(-1)

    def value(arr):
        return float(f(Tensor(arr)).data)

    f0 = float(out.data)
    work = x0.copy()
    result = GradCheckResult(0.0, 0)
    if not np.isfinite(f0) or not np.all(np.isfinite(analytic)):
        bad = np.flatnonzero(~np.isfinite(analytic))
        result.nonfinite = [int(bad[0]) if bad.size else -1]
        result.max_rel_error = float("inf")
        return result

    floor = 1e-12 * max(1.0, abs(f0))
    for i in range(work.size):
        fp, fm = _second_difference(value, work, i, eps)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            result.nonfinite.append(i)
            continue
        if detect_kinks:
            d = [fp - 2 * f0 + fm]
            for mult in (2.0, 4.0):
                gp, gm = _second_difference(value, work, i, mult * eps)
                d.append(gp - 2 * f0 + gm)
            kink = False
            for small, big in zip(d[:-1], d[1:]):
                if max(abs(small), abs(big)) > floor and abs(big - 4 * small) > 0.25 * abs(big) + floor:
                    kink = True
            if kink:
                result.kinks.append(i)
                continue
        numeric = (fp - fm) / (2 * eps)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        result.n_checked += 1
        if err > result.max_rel_error:
            result.max_rel_error = float(err)
            result.worst_index = np.unravel_index(i, x0.shape)
    if result.nonfinite:
        result.max_rel_error = float("inf")
    return result
