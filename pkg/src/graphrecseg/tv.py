"""Discrete gradient/divergence pair and the Huber total-variation terms.

The gradient stacks, per pixel and channel, the forward differences to the
pixel below and to the right (replication padding, so the last row/column get
zero differences).  Gradient fields are stored as (n, 2, channels) arrays.
``div`` is minus the adjoint of ``grad``: <grad x, g> + <x, div g> = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ImageField, PixelGrid

# ||grad||^2 <= 8 for the two-direction forward-difference stencil
GRAD_NORM_BOUND = np.sqrt(8.0)


def grad(x: ImageField) -> np.ndarray:
    """Forward differences (down, right) per pixel and channel: (n, 2, c)."""
    g = x.grid
    img = x.as_hwc()
    out = np.zeros((g.height, g.width, 2, g.channels))
    out[:-1, :, 0, :] = img[1:, :, :] - img[:-1, :, :]
    out[:, :-1, 1, :] = img[:, 1:, :] - img[:, :-1, :]
    return out.reshape(g.n, 2, g.channels)


def div(field: np.ndarray, grid: PixelGrid) -> ImageField:
    """Discrete divergence, the negative adjoint of :func:`grad`."""
    h, w, c = grid.height, grid.width, grid.channels
    f = np.asarray(field, dtype=float).reshape(h, w, 2, c)
    out = np.zeros((h, w, c))
    # down component: transpose of the vertical difference, negated
    out[:-1, :, :] += f[:-1, :, 0, :]
    out[1:, :, :] -= f[:-1, :, 0, :]
    # right component
    out[:, :-1, :] += f[:, :-1, 1, :]
    out[:, 1:, :] -= f[:, :-1, 1, :]
    return ImageField(grid, out.reshape(grid.n, c))


def grad_adjoint(field: np.ndarray, grid: PixelGrid) -> ImageField:
    """Adjoint of grad, i.e. -div."""
    res = div(field, grid)
    res.values = -res.values
    return res


@dataclass(frozen=True)
class HuberTV:
    """Huber-smoothed TV integrand: scale * sum_i h(||g_i||_2), where h is
    quadratic s^2/(2 t) below the threshold t and linear s - t/2 above it.

    The norm couples the two spatial differences of one channel; channels are
    summed independently.
    """

    scale: float = 10.0
    threshold: float = 0.01

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("scale must be non-negative")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


def huber_value(field: np.ndarray, huber: HuberTV) -> float:
    """Evaluate the Huber-TV regulariser on a gradient field."""
    f = np.asarray(field, dtype=float)
    norms = np.sqrt(np.sum(f * f, axis=1))  # (n, c)
    t = huber.threshold
    h = np.where(norms > t, norms - 0.5 * t, norms * norms / (2.0 * t))
    return huber.scale * float(np.sum(h))


def prox_r_star(p: np.ndarray, dt: float, huber: HuberTV) -> np.ndarray:
    """Resolvent of the convex conjugate of the Huber-TV integrand.

    The conjugate of c*h(||.||) is the indicator of the radius-c ball plus
    the quadratic t/(2c)*||.||^2, so the prox shrinks by 1 + dt*t/c and then
    projects each per-(pixel, channel) 2-vector onto the c-ball.
    """
    p = np.asarray(p, dtype=float)
    c = huber.scale
    if c == 0.0:
        return np.zeros_like(p)
    q = p / (1.0 + dt * huber.threshold / c)
    norms = np.sqrt(np.sum(q * q, axis=1, keepdims=True))
    factor = np.minimum(1.0, c / np.maximum(norms, 1e-300))
    return q * factor
