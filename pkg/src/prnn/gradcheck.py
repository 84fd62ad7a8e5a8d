"""Finite-difference validation of tape gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor


def grad_check(fn, params: list[Tensor], h: float = 1e-6, max_coords=None,
               rng=None) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn()`` must return a scalar Tensor recomputed from the current values
    of ``params``. When ``max_coords`` is given, at most that many
    coordinates per parameter are probed (sampled with ``rng``).
    """
    with Tape() as tape:
        loss = fn()
    grads = tape.backward(loss)

    worst = 0.0
    for p in params:
        analytic = grads.wrt(p)
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = fn().item()
            flat[i] = orig - h
            fm = fn().item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            # the floor keeps the metric meaningful near zero gradients,
            # where central differences bottom out at ~1e-9 absolute noise
            denom = max(abs(a) + abs(numeric), 1e-4)
            err = abs(a - numeric) / denom
            worst = max(worst, err)
    return worst
