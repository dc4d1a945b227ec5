"""Patch feature map, its adjoint, and the Gaussian edge-weight function.

Every pixel gets a feature vector collecting the 3x3 patch around it
(replication padding at the image boundary), weighted by a Gaussian stencil,
one block per colour channel.  Edge weights between vertices are a Gaussian
similarity of their feature rows; the squared distance is averaged over the
q feature components so that the bandwidth ``sigma`` transfers across channel
counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ImageField, PixelGrid

PATCH_OFFSETS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)]


def gaussian_stencil_weights(std: float = 1.0) -> np.ndarray:
    """3x3 Gaussian stencil sampled at integer offsets, normalised to sum 1,
    then multiplied by the patch size 9.  Order matches PATCH_OFFSETS."""
    w = np.array([np.exp(-(di * di + dj * dj) / (2.0 * std * std))
                  for di, dj in PATCH_OFFSETS])
    return 9.0 * w / w.sum()


@dataclass(frozen=True)
class FeatureKernel:
    """Neighbourhood map and stencil weights for one pixel grid.

    ``neighbours[i, p]`` is the vertex index of the p-th patch member of
    pixel i (boundary patches replicate the edge pixel), and ``weights[p]``
    the corresponding stencil weight.
    """

    neighbours: np.ndarray  # (n, k) int
    weights: np.ndarray     # (k,) float

    def __post_init__(self):
        if self.neighbours.ndim != 2 or self.weights.ndim != 1:
            raise ValueError("neighbours must be (n, k), weights (k,)")
        if self.neighbours.shape[1] != self.weights.shape[0]:
            raise ValueError("neighbour map and weights disagree on k")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("stencil weights must be finite")

    @property
    def k(self) -> int:
        return self.weights.shape[0]


def build_feature_kernel(grid: PixelGrid) -> FeatureKernel:
    """3x3 replication-padded neighbourhood with the 9x Gaussian stencil."""
    rows = np.arange(grid.height)[:, None]
    cols = np.arange(grid.width)[None, :]
    neigh = np.empty((grid.n, len(PATCH_OFFSETS)), dtype=np.intp)
    for p, (di, dj) in enumerate(PATCH_OFFSETS):
        r = np.clip(rows + di, 0, grid.height - 1)
        c = np.clip(cols + dj, 0, grid.width - 1)
        neigh[:, p] = (r * grid.width + c).ravel()
    return FeatureKernel(neigh, gaussian_stencil_weights())


def feature_map(x: ImageField, kernel: FeatureKernel) -> np.ndarray:
    """Map an image to its (n, k*channels) feature matrix.

    Row i is the concatenation over channels s of the weighted patch
    ``weights[p] * x[neighbours[i, p], s]``.
    """
    n, k = kernel.neighbours.shape
    if x.values.shape[0] != n:
        raise ValueError("image and kernel sizes disagree")
    # (n, k, c): gather the patch, then scale by the stencil
    patch = x.values[kernel.neighbours]
    patch = patch * kernel.weights[None, :, None]
    # channel-major blocks: [Z(x^1) ... Z(x^c)]
    return patch.transpose(0, 2, 1).reshape(n, x.grid.channels * k)


def feature_map_adjoint(w: np.ndarray, kernel: FeatureKernel,
                        grid: PixelGrid) -> ImageField:
    """Adjoint of :func:`feature_map` with respect to the Frobenius inner
    product: scatter each weighted patch entry back onto its source pixel."""
    n, k = kernel.neighbours.shape
    w = np.asarray(w, dtype=float)
    if w.shape != (n, k * grid.channels):
        raise ValueError(
            f"expected shape {(n, k * grid.channels)}, got {w.shape}"
        )
    out = np.zeros((n, grid.channels))
    blocks = w.reshape(n, grid.channels, k)
    for p in range(k):
        np.add.at(out, kernel.neighbours[:, p],
                  kernel.weights[p] * blocks[:, :, p])
    return ImageField(grid, out)


def edge_weight(z_i: np.ndarray, z_j: np.ndarray, sigma: float) -> float:
    """Gaussian similarity exp(-||z_i - z_j||^2 / (q sigma^2)) in (0, 1]."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z_i = np.asarray(z_i, dtype=float).ravel()
    z_j = np.asarray(z_j, dtype=float).ravel()
    q = z_i.shape[0]
    d2 = float(np.sum((z_i - z_j) ** 2))
    return float(np.exp(-d2 / (q * sigma * sigma)))


def weight_block(za: np.ndarray, zb: np.ndarray, sigma: float) -> np.ndarray:
    """Pairwise weights between two sets of feature rows.

    Returns the (len(za), len(zb)) matrix of edge weights.  The diagonal of
    weight_block(z, z, sigma) is 1: the raw similarity function is evaluated
    everywhere, self-pairs included.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    za = np.atleast_2d(np.asarray(za, dtype=float))
    zb = np.atleast_2d(np.asarray(zb, dtype=float))
    q = za.shape[1]
    d2 = (
        np.sum(za * za, axis=1)[:, None]
        + np.sum(zb * zb, axis=1)[None, :]
        - 2.0 * (za @ zb.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / (q * sigma * sigma))


def weight_matrix(z: np.ndarray, sigma: float,
                  block: int = 2048) -> np.ndarray:
    """Dense weight matrix over all rows of ``z``, assembled in row blocks."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    out = np.empty((n, n))
    for start in range(0, n, block):
        stop = min(start + block, n)
        out[start:stop] = weight_block(z[start:stop], z, sigma)
    return out
