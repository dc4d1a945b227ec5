"""Pixel grids and vertex-major image fields.

Images live on a height x width grid with ``channels`` colour channels.
Vertices are pixels in row-major order, so an image is stored as an
(n, channels) array of intensities (nominally in [0, 1], but values outside
that range are legal, e.g. for noisy observations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PixelGrid:
    """Row-major pixel lattice with ``height * width`` vertices."""

    height: int
    width: int
    channels: int = 1

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("grid must contain at least one pixel")
        if self.channels < 1:
            raise ValueError("grid needs at least one channel")

    @property
    def n(self) -> int:
        return self.height * self.width

    def index(self, row: int, col: int) -> int:
        return row * self.width + col


@dataclass
class ImageField:
    """Real-valued field over a pixel grid, stored vertex-major.

    ``values`` has shape (grid.n, grid.channels).
    """

    grid: PixelGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape != (self.grid.n, self.grid.channels):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.n}, {self.grid.channels})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("image values must be finite")

    @classmethod
    def from_array(cls, arr) -> "ImageField":
        """Build from an (h, w) or (h, w, c) array."""
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError("expected a 2-d or 3-d image array")
        h, w, c = arr.shape
        return cls(PixelGrid(h, w, c), arr.reshape(h * w, c))

    def as_hwc(self) -> np.ndarray:
        """View as an (h, w, c) array."""
        g = self.grid
        return self.values.reshape(g.height, g.width, g.channels)

    def copy(self) -> "ImageField":
        return ImageField(self.grid, self.values.copy())

    def with_values(self, values: np.ndarray) -> "ImageField":
        return ImageField(self.grid, values)
