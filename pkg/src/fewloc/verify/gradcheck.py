"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..tensor import GradTape, Tensor


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    rng: np.random.Generator,
    n_samples: int = 20,
    h: float = 1e-5,
    abs_floor: float = 1e-6,
) -> float:
    """Return the worst error between tape gradients and central differences.

    ``fn`` recomputes a scalar loss from ``params``. ``n_samples`` coordinates
    are drawn uniformly over all parameter entries. The error of one entry is
    ``|a - n| / max(|a|, |n|)``, except that pairs whose magnitudes are both
    below ``abs_floor`` are compared absolutely (both are rounding noise).
    """
    for p in params:
        p.requires_grad = True
        p.grad = None
    with GradTape() as tape:
        loss = fn()
    tape.backward(loss)
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    sizes = np.array([p.size for p in params])
    flat_ids = rng.choice(sizes.sum(), size=min(n_samples, sizes.sum()), replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for fid in np.sort(flat_ids):
        which = int(np.searchsorted(bounds, fid, side="right"))
        local = fid - (bounds[which - 1] if which else 0)
        p = params[which]
        idx = np.unravel_index(local, p.shape)
        orig = p.data[idx]
        p.data[idx] = orig + h
        up = fn().item()
        p.data[idx] = orig - h
        down = fn().item()
        p.data[idx] = orig
        numeric = (up - down) / (2 * h)
        analytic = grads[which][idx]
        if max(abs(numeric), abs(analytic)) < abs_floor:
            err = abs(numeric - analytic)
        else:
            err = relative_error(analytic, numeric)
        worst = max(worst, err)
    return worst
