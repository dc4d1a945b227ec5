"""Linear forward models: identity (denoising) and horizontal motion blur.

The motion blur is a length-L horizontal mean filter applied per channel with
symmetric padding (edge-repeating mirror: ... c b a | a b c ...).  For odd L
the induced matrix is symmetric, so the adjoint is the same operation; even
lengths centre-align with the leading half on the left and use an explicit
transpose for the adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ImageField


@dataclass(frozen=True)
class ForwardModel:
    """Observation operator T with kind 'identity' or 'motion-blur'."""

    kind: str = "identity"
    blur_length: int = 1

    def __post_init__(self):
        if self.kind not in ("identity", "motion-blur"):
            raise ValueError(f"unknown forward model kind: {self.kind!r}")
        if self.kind == "motion-blur" and self.blur_length < 1:
            raise ValueError("blur length must be at least 1")


def identity_model() -> ForwardModel:
    return ForwardModel("identity")


def motion_blur_model(length: int) -> ForwardModel:
    return ForwardModel("motion-blur", length)


def _blur_offsets(length: int) -> np.ndarray:
    # odd lengths centred; even lengths put the extra tap on the left
    left = length // 2
    return np.arange(length) - left


def _mirror_columns(cols: np.ndarray, width: int) -> np.ndarray:
    """Map out-of-range column indices via symmetric (edge-repeat) padding."""
    period = 2 * width
    cols = np.mod(cols, period)
    return np.where(cols >= width, period - 1 - cols, cols)


def _blur_apply(values: np.ndarray, height: int, width: int,
                length: int) -> np.ndarray:
    x = values.reshape(height, width, -1)
    out = np.zeros_like(x)
    for off in _blur_offsets(length):
        cols = _mirror_columns(np.arange(width) + off, width)
        out += x[:, cols, :]
    out /= length
    return out.reshape(values.shape)


def _blur_scatter(values: np.ndarray, height: int, width: int,
                  length: int) -> np.ndarray:
    # exact transpose of _blur_apply, needed only for even lengths
    x = values.reshape(height, width, -1)
    out = np.zeros_like(x)
    for off in _blur_offsets(length):
        cols = _mirror_columns(np.arange(width) + off, width)
        np.add.at(out, (slice(None), cols), x)
    out /= length
    return out.reshape(values.shape)


def apply(model: ForwardModel, x: ImageField) -> ImageField:
    """Apply the forward model to an image."""
    if model.kind == "identity":
        return x.copy()
    g = x.grid
    if model.blur_length > g.width:
        raise ValueError(
            f"blur length {model.blur_length} exceeds image width {g.width}"
        )
    return ImageField(g, _blur_apply(x.values, g.height, g.width,
                                     model.blur_length))


def adjoint(model: ForwardModel, x: ImageField) -> ImageField:
    """Apply the adjoint of the forward model.

    Odd-length motion blur is self-adjoint, so this is bitwise identical to
    :func:`apply` in that case.
    """
    if model.kind == "identity":
        return x.copy()
    if model.blur_length % 2 == 1:
        return apply(model, x)
    g = x.grid
    if model.blur_length > g.width:
        raise ValueError(
            f"blur length {model.blur_length} exceeds image width {g.width}"
        )
    return ImageField(g, _blur_scatter(x.values, g.height, g.width,
                                       model.blur_length))


def operator_norm_bound(model: ForwardModel) -> float:
    """Spectral norm of the forward model.

    Both models preserve constants and (for the odd-length blur used in
    practice) are represented by symmetric non-negative matrices, so the
    norm is exactly 1.
    """
    return 1.0
