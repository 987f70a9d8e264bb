"""Central finite-difference checks for the autodiff tape."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def numeric_grad(fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-6,
                 coords: Sequence[tuple] | None = None) -> dict[tuple, float]:
    """d fn / d param at the given flat coordinates (all when ``coords`` is None)."""
    if coords is None:
        coords = list(np.ndindex(param.shape))
    out = {}
    for c in coords:
        orig = param.data[c]
        param.data[c] = orig + eps
        plus = float(fn().data)
        param.data[c] = orig - eps
        minus = float(fn().data)
        param.data[c] = orig
        out[c] = (plus - minus) / (2 * eps)
    return out


def max_relative_error(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6,
                       samples_per_param: int | None = None, seed: int = 0, floor: float = 1e-6) -> float:
    """Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over checked entries.

    ``floor`` keeps entries whose true gradient is zero from dividing by
    rounding noise.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss = fn()
    ad.backward(loss)
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        coords = list(np.ndindex(p.shape))
        if samples_per_param is not None and len(coords) > samples_per_param:
            pick = rng.choice(len(coords), samples_per_param, replace=False)
            coords = [coords[i] for i in sorted(pick)]
        for c, num in numeric_grad(fn, p, eps, coords).items():
            a = float(analytic[c])
            denom = max(abs(a), abs(num), floor)
            worst = max(worst, abs(a - num) / denom)
    return worst
