"""Synthetic two-region test instances.

Generates a smooth random two-region image (a blob thresholded from filtered
noise), a ground-truth mask, a small strip of reference pixels carrying both
region colours with their labels, and distorted observations.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from . import forward
from .config import JointConfig
from .grid import ImageField
from .pipeline import JointProblem, Reference, add_gaussian_noise


def two_region_image(height: int, width: int, channels: int = 1, *,
                     seed: int = 0, fg: float = 0.8, bg: float = 0.2,
                     texture: float = 0.02, smooth: float | None = None):
    """Random blob image: returns (ImageField, mask over pixels).

    The two regions sit at intensities ``fg`` (inside, label 1) and ``bg``
    with mild texture jitter so that the patch features of a region are
    distinct but tightly clustered.
    """
    rng = np.random.default_rng(seed)
    smooth = smooth if smooth is not None else max(height, width) / 4.0
    field = gaussian_filter(rng.standard_normal((height, width)), smooth,
                            mode="reflect")
    mask = (field >= np.median(field)).astype(float)
    img = np.empty((height, width, channels))
    for c in range(channels):
        img[:, :, c] = np.where(mask > 0, fg, bg)
    img += texture * rng.standard_normal(img.shape)
    img = np.clip(img, 0.0, 1.0)
    return ImageField.from_array(img), mask.ravel()


def reference_strip(n_pixels: int, channels: int = 1, *, seed: int = 0,
                    fg: float = 0.8, bg: float = 0.2,
                    texture: float = 0.02) -> Reference:
    """A 1 x n strip of reference pixels: the leading half carries the
    foreground colour with label 1, the rest the background with label 0."""
    if n_pixels < 2:
        raise ValueError("need at least one reference pixel per region")
    rng = np.random.default_rng(seed)
    n_fg = n_pixels // 2
    vals = np.empty((1, n_pixels, channels))
    vals[0, :n_fg] = fg
    vals[0, n_fg:] = bg
    vals += texture * rng.standard_normal(vals.shape)
    vals = np.clip(vals, 0.0, 1.0)
    labels = np.r_[np.ones(n_fg), np.zeros(n_pixels - n_fg)]
    return Reference(ImageField.from_array(vals), labels)


def synth_problem(config: JointConfig, *, height: int = 64, width: int = 64,
                  channels: int = 1, n_reference: int = 10,
                  image_seed: int = 0, fg: float = 0.8,
                  bg: float = 0.2) -> JointProblem:
    """Assemble a complete synthetic problem under ``config``.

    The observation is the forward model applied to the clean image plus
    Gaussian noise of level ``config.noise_sigma`` drawn from the run seed.
    """
    clean, mask = two_region_image(height, width, channels, seed=image_seed,
                                   fg=fg, bg=bg)
    reference = reference_strip(n_reference, channels, seed=image_seed + 1,
                                fg=fg, bg=bg)
    model = forward.ForwardModel(config.model_kind, config.blur_length)
    blurred = forward.apply(model, clean)
    observed = add_gaussian_noise(blurred, config.noise_sigma, config.seed)
    return JointProblem(observed=observed, reference=reference, config=config,
                        clean=clean, truth_mask=mask)
