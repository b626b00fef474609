"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest relative error between backprop and central differences.

    ``fn`` rebuilds a scalar from ``inputs`` on every call.  With
    ``max_coords`` only that many randomly chosen entries of each input are
    perturbed.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for t in inputs:
        t.zero_grad()
    fn().backward()
    analytic = [t.grad.copy() for t in inputs]

    worst = 0.0
    for t, grad in zip(inputs, analytic):
        size = t.data.size
        coords = np.arange(size)
        if max_coords is not None and size > max_coords:
            coords = rng.choice(size, size=max_coords, replace=False)
        numeric = np.empty(len(coords))
        for n, i in enumerate(coords):
            # index in place: reshape(-1) would silently copy a non-contiguous array
            idx = np.unravel_index(i, t.data.shape)
            old = t.data[idx]
            t.data[idx] = old + h
            up = fn().item()
            t.data[idx] = old - h
            down = fn().item()
            t.data[idx] = old
            numeric[n] = (up - down) / (2 * h)
        worst = max(worst, relative_error(grad.reshape(-1)[coords], numeric))
    return worst


def relu_margin(fn: Callable[[], Tensor]) -> float:
    """Smallest ``|input|`` seen by any ReLU while evaluating ``fn``.

    Central differences are meaningless at a point whose ReLU inputs lie
    within the step's reach of zero, so callers redraw such points.
    """
    seen = []
    real = T.relu

    def spy(x: Tensor) -> Tensor:
        if x.size:
            seen.append(float(np.min(np.abs(x.data))))
        return real(x)

    T.relu = spy
    try:
        fn()
    finally:
        T.relu = real
    return min(seen, default=float("inf"))
