"""Run configuration for the joint reconstruction-segmentation pipeline.

All scalar knobs live in one dataclass.  ``denoising_defaults`` matches the
published denoising operating point (identity forward model) and
``deblurring_defaults`` the motion-blur one; individual fields can then be
overridden from a JSON config file and/or command-line flags.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .tv import GRAD_NORM_BOUND


@dataclass
class JointConfig:
    # energy weights
    alpha: float = 0.75            # observation fidelity weight
    beta: float = 1e-5             # segmentation-energy weight
    eta: float = 0.1               # reconstruction momentum
    nu: float = 1e-6               # segmentation momentum
    # graph construction
    sigma: float = 3.0             # edge-weight bandwidth
    mu_fidelity: float = 50.0      # reference fidelity amplitude on Z
    n_samples: int = 100           # Nystrom rank K
    k1: int | None = None          # image-side sample count (default K/2)
    k2: int | None = None          # reference-side sample count (default K/2)
    # SDIE scheme
    tau: float = 0.00285           # diffusion time per SDIE step
    epsilon: float = 0.00285       # interface parameter (tau = eps is MBO)
    k_strang: int = 5              # Strang substeps per diffusion
    n_euler_substeps: int = 160    # semi-implicit Euler substeps for b
    delta_stop: float = 1e-10      # squared relative-change stopping ratio
    max_sdie_iters: int = 300
    u0_constant: float = 0.47      # initial label level on the image part
    # regulariser
    huber_scale: float = 10.0
    huber_threshold: float = 0.01
    # forward model
    model_kind: str = "identity"   # "identity" or "motion-blur"
    blur_length: int = 75
    # initialisation
    init_fidelity: float = 1.05    # data weight of the TV initialiser
    init_huber_threshold: float = 1e-4
    # outer loop
    outer_iters: int = 25
    seed: int = 0
    noise_sigma: float = 0.0       # synthesise y from the clean image if > 0
    exact_mode: bool = False       # full interpolation set (X = V)
    exact_updates: bool = False    # monotone proximal inner solves
    record_energy: bool | None = None  # None: on for small instances only
    # inner solver controls
    pd_tol: float = 1e-6
    pd_consecutive: int = 3
    pd_max_iters: int = 500
    fp_tol: float = 1e-8
    fp_max_iters: int = 100
    exact_inner_steps: int = 12    # linearisation sweeps per exact x-update

    def validate(self):
        if not (0.0 < self.tau <= self.epsilon):
            raise ValueError("need 0 < tau <= epsilon")
        for name in ("alpha", "beta", "eta", "nu", "mu_fidelity"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.beta == 0.0 and self.nu != 0.0:
            raise ValueError("nu > 0 requires beta > 0")
        if self.model_kind not in ("identity", "motion-blur"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.model_kind == "motion-blur":
            # fixed-point prox contraction at the initial dual step size
            dt0 = 0.99 / GRAD_NORM_BOUND
            if self.alpha >= self.eta + 0.5 / dt0:
                raise ValueError(
                    "fixed-point prox needs alpha < eta + 1/(2 dt): "
                    f"alpha={self.alpha}, eta={self.eta}, dt0={dt0:.4f}")
        if self.n_samples < 2:
            raise ValueError("need at least two interpolation samples")
        return self

    def split_counts(self, n_y: int, n_z: int) -> tuple[int, int]:
        """Interpolation sample counts; exact mode takes the whole graph."""
        if self.exact_mode:
            return n_y, n_z
        half = self.n_samples // 2
        k1 = self.k1 if self.k1 is not None else half
        k2 = self.k2 if self.k2 is not None else self.n_samples - half
        return min(k1, n_y), min(k2, n_z)

    def replace(self, **kwargs) -> "JointConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def denoising_defaults() -> JointConfig:
    return JointConfig()


def deblurring_defaults() -> JointConfig:
    return JointConfig(
        alpha=2.0, eta=2.0, tau=0.002, epsilon=0.002, n_samples=200,
        outer_iters=15, init_fidelity=45.0, huber_scale=1.0,
        model_kind="motion-blur", blur_length=75,
    )


def synthetic_defaults() -> JointConfig:
    """Operating point for the small synthetic two-region instances.

    Unit-scale graphs need a sharper bandwidth and a diffusion time matched
    to the random-walk spectrum; the weak initial denoise leaves errors for
    the joint iterations to repair.
    """
    return JointConfig(
        sigma=0.4, beta=1e-5, nu=1e-6, tau=0.25, epsilon=0.5,
        u0_constant=0.5, n_samples=100, huber_scale=1.0, init_fidelity=50.0,
        outer_iters=10, noise_sigma=0.5,
    )


_PRESETS = {
    "denoise": denoising_defaults,
    "deblur": deblurring_defaults,
    "synthetic": synthetic_defaults,
}

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(JointConfig)}


def config_from_dict(data: dict) -> tuple[JointConfig, dict]:
    """Build a config from a parsed mapping.

    Recognised scalar keys match the JointConfig field names; a "preset" key
    picks the base parameter set; anything else (e.g. the "paths" table) is
    returned untouched for the caller.
    """
    data = dict(data)
    preset = data.pop("preset", "denoise")
    if preset not in _PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    cfg = _PRESETS[preset]()
    extras = {}
    updates = {}
    for key, value in data.items():
        if key in _CONFIG_FIELDS:
            updates[key] = value
        else:
            extras[key] = value
    cfg = cfg.replace(**updates)
    return cfg, extras


def load_config(path) -> tuple[JointConfig, dict]:
    """Read a JSON config file; returns (config, extra tables)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must contain a JSON object")
    return config_from_dict(data)
