"""The outer alternating loop: initialisation, reconstruction and
segmentation updates, metrics, and per-iteration bookkeeping.

The vertex set stacks the n_y image pixels before the n_z reference pixels;
label, fidelity, and reference vectors all live on that concatenation.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import forward
from .config import JointConfig
from .features import build_feature_kernel, feature_map, weight_matrix
from .gl import clip_labels, gl_energy
from .grid import ImageField
from .recon import compute_g_n, primal_dual, prox_g, recon_update
from .sdie import seg_update
from .tv import GRAD_NORM_BOUND, HuberTV, grad, huber_value, prox_r_star

# joint energy is evaluated densely; refuse above this many image pixels
ENERGY_GATE_PIXELS = 64 * 64


# ---------------------------------------------------------------------------
# metrics and noise
# ---------------------------------------------------------------------------

def psnr(x: ImageField, x_star: ImageField, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    if x.values.shape != x_star.values.shape:
        raise ValueError("images must share a shape")
    err = float(np.sum((x.values - x_star.values) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak * x.values.size / err)


def dice(u, u_star) -> float:
    """Dice overlap 2TP/(2TP + FP + FN) of masks thresholded at 1/2.

    Two empty masks count as perfect agreement.
    """
    a = np.asarray(u, dtype=float).ravel() >= 0.5
    b = np.asarray(u_star, dtype=float).ravel() >= 0.5
    if a.shape != b.shape:
        raise ValueError("masks must share a shape")
    tp = float(np.sum(a & b))
    fp = float(np.sum(a & ~b))
    fn = float(np.sum(~a & b))
    if tp + fp + fn == 0.0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def add_gaussian_noise(x: ImageField, noise_sigma: float,
                       seed: int) -> ImageField:
    """Additive i.i.d. Gaussian noise from a seeded generator, unclipped."""
    if noise_sigma < 0:
        raise ValueError("noise level must be non-negative")
    if noise_sigma == 0.0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return ImageField(
        x.grid, x.values + noise_sigma * rng.standard_normal(x.values.shape))


# ---------------------------------------------------------------------------
# problem setup
# ---------------------------------------------------------------------------

@dataclass
class Reference:
    """Reference image with labels; features are computed once at setup."""

    image: ImageField
    labels: np.ndarray     # {0,1} per reference pixel
    features: np.ndarray = field(init=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if self.labels.shape[0] != self.image.grid.n:
            raise ValueError("labels must cover the reference pixels")
        if not np.all(np.isin(self.labels, (0.0, 1.0))):
            raise ValueError("reference labels must be binary")
        kernel = build_feature_kernel(self.image.grid)
        self.features = feature_map(self.image, kernel)

    @property
    def n(self) -> int:
        return self.image.grid.n


@dataclass
class JointProblem:
    """Observations, reference data, and configuration for one run."""

    observed: ImageField
    reference: Reference
    config: JointConfig
    clean: ImageField | None = None        # ground truth image, for PSNR
    truth_mask: np.ndarray | None = None   # ground truth labels on Y, Dice

    def __post_init__(self):
        self.config.validate()
        grid = self.observed.grid
        if self.config.model_kind == "motion-blur" \
                and self.config.blur_length > grid.width:
            raise ValueError("blur length exceeds the image width")
        if self.reference.image.grid.channels != grid.channels:
            raise ValueError("reference and observation channel counts differ")
        n_y, n_z = grid.n, self.reference.n
        self.mu = np.r_[np.zeros(n_y),
                        self.config.mu_fidelity * np.ones(n_z)]
        self.f = np.r_[np.zeros(n_y), self.reference.labels]
        self.kernel = build_feature_kernel(grid)
        self.model = forward.ForwardModel(self.config.model_kind,
                                          self.config.blur_length)

    @property
    def n_y(self) -> int:
        return self.observed.grid.n

    @property
    def n_z(self) -> int:
        return self.reference.n

    def stacked_features(self, x: ImageField) -> np.ndarray:
        return np.vstack([feature_map(x, self.kernel),
                          self.reference.features])

    def huber(self) -> HuberTV:
        return HuberTV(self.config.huber_scale, self.config.huber_threshold)

    def seeds(self, count: int) -> list[int]:
        """Deterministic child seeds derived from the master seed."""
        state = np.random.SeedSequence(self.config.seed).generate_state(count)
        return [int(s) for s in state]


def joint_energy(u: np.ndarray, x: ImageField, problem: JointProblem) -> float:
    """Dense joint energy: regulariser + observation fidelity + the weighted
    Ginzburg-Landau term.  Labels outside [0,1] give +inf.  Gated to small
    instances because the weight matrix is materialised."""
    cfg = problem.config
    if problem.n_y > ENERGY_GATE_PIXELS:
        raise ValueError("dense energy evaluation is gated to small images")
    u = np.asarray(u, dtype=float)
    if np.any(u < -1e-9) or np.any(u > 1.0 + 1e-9):
        return math.inf
    u = clip_labels(u)
    resid = forward.apply(problem.model, x).values - problem.observed.values
    total = (huber_value(grad(x), problem.huber())
             + cfg.alpha * float(np.sum(resid * resid)))
    if cfg.beta > 0.0:
        omega = weight_matrix(problem.stacked_features(x), cfg.sigma)
        total += cfg.beta * gl_energy(u, cfg.epsilon, problem.mu, problem.f,
                                      omega)
    return total


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------

def initialise(problem: JointProblem, *, init_seg_seed: int,
               warnings_out: list | None = None):
    """Cheap TV reconstruction of the observations, then a pure SDIE
    segmentation of it (unit weight, no momentum)."""
    cfg = problem.config
    lam = cfg.init_fidelity
    huber = HuberTV(1.0, cfg.init_huber_threshold)
    y = problem.observed
    model = problem.model

    def prox_dual(p, dt):
        return prox_r_star(p, dt, huber)

    def prox_primal(x, dt):
        return prox_g(x, dt, model, y, lam, 0.0, np.zeros_like(y.values),
                      fp_tol=cfg.fp_tol, fp_max_iters=cfg.fp_max_iters)

    if model.kind == "identity":
        gamma, dt1, dt2 = 2.0 * lam, None, None
    else:
        # no strong convexity through the blur; plain steps sized so the
        # fixed-point prox contracts
        gamma = 0.0
        dt2 = min(0.99 / GRAD_NORM_BOUND, 0.25 / lam)
        dt1 = 0.99 / (GRAD_NORM_BOUND ** 2 * dt2)
    res = primal_dual(
        ImageField(y.grid, np.zeros_like(y.values)), gamma, prox_dual,
        prox_primal, dt1=dt1, dt2=dt2, tol=cfg.pd_tol,
        consecutive=cfg.pd_consecutive, max_iters=cfg.pd_max_iters)
    if not res.converged and warnings_out is not None:
        warnings_out.append("initial TV reconstruction hit its iteration cap")
    x0 = res.image

    k1, k2 = cfg.split_counts(problem.n_y, problem.n_z)
    u_start = np.r_[cfg.u0_constant * np.ones(problem.n_y),
                    problem.reference.labels]
    seg = seg_update(
        problem.f, problem.stacked_features(x0), problem.n_y, problem.mu,
        problem.f, beta=1.0, nu=0.0, tau=cfg.tau, eps=cfg.epsilon,
        sigma=cfg.sigma, k1=k1, k2=k2, k_s=cfg.k_strang,
        n_substeps=cfg.n_euler_substeps, delta=cfg.delta_stop,
        max_iters=cfg.max_sdie_iters, seed=init_seg_seed, u_init=u_start)
    if not seg.converged and warnings_out is not None:
        warnings_out.append("initial segmentation hit its iteration cap")
    return x0, seg.values


# ---------------------------------------------------------------------------
# exact (monotone) updates, used by the energy-descent verification path
# ---------------------------------------------------------------------------

def _exact_recon_update(x_n, u_n, problem, seed):
    """Minimise the untruncated reconstruction subproblem by repeated
    linearised proximal steps with backtracked curvature, never accepting an
    objective increase."""
    cfg = problem.config
    huber = problem.huber()
    k1, k2 = cfg.split_counts(problem.n_y, problem.n_z)

    def subproblem(x):
        val = joint_energy(u_n, x, problem)
        return val + cfg.eta * float(np.sum((x.values - x_n.values) ** 2))

    current = x_n
    current_val = subproblem(x_n)
    lift = cfg.eta
    for _ in range(cfg.exact_inner_steps):
        g_w = compute_g_n(
            current, u_n, kernel=problem.kernel,
            ref_features=problem.reference.features, mu=problem.mu,
            f=problem.f, eps=cfg.epsilon, beta=cfg.beta, sigma=cfg.sigma,
            k1=k1, k2=k2, seed=seed)
        accepted = False
        for _ in range(10):
            eta_eff = cfg.eta + lift
            anchor = (cfg.eta * x_n.values + lift * current.values
                      - 0.5 * g_w.values) / eta_eff

            def prox_dual(p, dt):
                return prox_r_star(p, dt, huber)

            def prox_primal(x, dt):
                return prox_g(x, dt, problem.model, problem.observed,
                              cfg.alpha, eta_eff, anchor, fp_tol=cfg.fp_tol,
                              fp_max_iters=cfg.fp_max_iters)

            res = primal_dual(current, 2.0 * eta_eff, prox_dual, prox_primal,
                              tol=cfg.pd_tol, consecutive=cfg.pd_consecutive,
                              max_iters=cfg.pd_max_iters)
            cand_val = subproblem(res.image)
            if cand_val <= current_val + 1e-12:
                accepted = True
                break
            lift *= 4.0
        if not accepted:
            break
        step = float(np.linalg.norm(res.image.values - current.values))
        current, current_val = res.image, cand_val
        lift = max(lift * 0.5, cfg.eta)
        if step <= 1e-9 * max(float(np.linalg.norm(current.values)), 1.0):
            break
    return current


def _exact_seg_update(u_n, x_next, problem, seed):
    """Segmentation step with its reference part pinned to the labels and a
    dense-objective guard: fall back to the previous labels rather than let
    the subproblem value increase."""
    cfg = problem.config
    feats = problem.stacked_features(x_next)
    k1, k2 = cfg.split_counts(problem.n_y, problem.n_z)
    inner_start = np.r_[cfg.u0_constant * np.ones(problem.n_y),
                        problem.reference.labels]
    seg = seg_update(
        u_n, feats, problem.n_y, problem.mu, problem.f, beta=cfg.beta,
        nu=cfg.nu, tau=cfg.tau, eps=cfg.epsilon, sigma=cfg.sigma, k1=k1,
        k2=k2, k_s=cfg.k_strang, n_substeps=cfg.n_euler_substeps,
        delta=cfg.delta_stop, max_iters=cfg.max_sdie_iters, seed=seed,
        u_init=inner_start)
    u_new = seg.values.copy()
    u_new[problem.n_y:] = problem.reference.labels

    omega = weight_matrix(feats, cfg.sigma)
    degrees = omega.sum(axis=1)

    def objective(u):
        val = cfg.beta * gl_energy(u, cfg.epsilon, problem.mu, problem.f,
                                   omega)
        dev = (u - u_n)[:problem.n_y]
        return val + cfg.nu * float(dev @ (degrees[:problem.n_y] * dev))

    if objective(u_new) <= objective(u_n) + 1e-12:
        return u_new
    return u_n.copy()


# ---------------------------------------------------------------------------
# the outer loop
# ---------------------------------------------------------------------------

@dataclass
class IterationRow:
    iteration: int
    dice: float
    psnr_db: float
    energy: float
    recon_seconds: float
    seg_seconds: float


@dataclass
class RunRecord:
    """Per-iteration metrics plus the final and best-scoring iterates."""

    rows: list[IterationRow]
    recon: ImageField
    labels: np.ndarray
    best_iteration: int
    best_recon: ImageField
    best_labels: np.ndarray
    warnings: list[str]

    @property
    def mask(self) -> np.ndarray:
        return (self.labels >= 0.5).astype(float)

    @property
    def best_mask(self) -> np.ndarray:
        return (self.best_labels >= 0.5).astype(float)

    def to_csv(self) -> str:
        lines = ["iter,dice,psnr_db,energy,recon_seconds,seg_seconds"]
        for r in self.rows:
            lines.append(
                f"{r.iteration},{r.dice:.6f},{r.psnr_db:.6f},"
                f"{r.energy:.10g},{r.recon_seconds:.4f},{r.seg_seconds:.4f}")
        return "\n".join(lines) + "\n"


def joint_rec_seg(problem: JointProblem, on_iteration=None) -> RunRecord:
    """Run the full alternating scheme and record metrics per iteration
    (iteration 0 is the initialisation).

    ``on_iteration(n, x, u)``, when given, is called after every logged
    iteration, e.g. to write reconstruction snapshots.
    """
    cfg = problem.config
    n_iters = cfg.outer_iters
    seeds = problem.seeds(2 * n_iters + 2)
    warn: list[str] = []

    record_energy = cfg.record_energy
    if record_energy is None:
        record_energy = problem.n_y <= ENERGY_GATE_PIXELS

    def measure(u, x):
        d = dice(u[:problem.n_y], problem.truth_mask) \
            if problem.truth_mask is not None else math.nan
        p = psnr(x, problem.clean) if problem.clean is not None else math.nan
        e = joint_energy(u, x, problem) if record_energy else math.nan
        return d, p, e

    t0 = time.perf_counter()
    x, u = initialise(problem, init_seg_seed=seeds[0], warnings_out=warn)
    init_seconds = time.perf_counter() - t0
    if cfg.exact_updates:
        u = u.copy()
        u[problem.n_y:] = problem.reference.labels

    rows = []
    d, p, e = measure(u, x)
    rows.append(IterationRow(0, d, p, e, init_seconds, 0.0))
    best = (d, 0, x.copy(), u.copy())
    if on_iteration is not None:
        on_iteration(0, x, u)

    k1, k2 = cfg.split_counts(problem.n_y, problem.n_z)
    inner_start = np.r_[cfg.u0_constant * np.ones(problem.n_y),
                        problem.reference.labels]
    for n in range(n_iters):
        try:
            x, u, recon_seconds, seg_seconds = _one_iteration(
                problem, x, u, n, seeds, k1, k2, inner_start, warn)
        except (np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
            # a failed phase ends the run; metrics so far are kept
            warn.append(f"aborted at iteration {n + 1}: {exc}")
            break
        d, p, e = measure(u, x)
        rows.append(IterationRow(n + 1, d, p, e, recon_seconds, seg_seconds))
        if on_iteration is not None:
            on_iteration(n + 1, x, u)
        if problem.truth_mask is not None and not math.isnan(d) \
                and (math.isnan(best[0]) or d > best[0]):
            best = (d, n + 1, x.copy(), u.copy())

    if problem.truth_mask is None:
        best = (rows[-1].dice, rows[-1].iteration, x.copy(), u.copy())
    for message in warn:
        warnings.warn(message, RuntimeWarning)
    return RunRecord(rows=rows, recon=x, labels=u, best_iteration=best[1],
                     best_recon=best[2], best_labels=best[3], warnings=warn)


def _one_iteration(problem, x, u, n, seeds, k1, k2, inner_start, warn):
    """One reconstruction + segmentation sweep; returns the new iterates and
    the phase timings."""
    cfg = problem.config
    t_rec = time.perf_counter()
    if cfg.exact_updates:
        x = _exact_recon_update(x, u, problem, seeds[2 * n + 1])
    else:
        res = recon_update(
            x, u, problem.observed, problem.model, kernel=problem.kernel,
            ref_features=problem.reference.features, mu=problem.mu,
            f=problem.f, huber=problem.huber(), alpha=cfg.alpha,
            beta=cfg.beta, eta=cfg.eta, eps=cfg.epsilon, sigma=cfg.sigma,
            k1=k1, k2=k2, seed=seeds[2 * n + 1], pd_tol=cfg.pd_tol,
            pd_consecutive=cfg.pd_consecutive,
            pd_max_iters=cfg.pd_max_iters, fp_tol=cfg.fp_tol,
            fp_max_iters=cfg.fp_max_iters)
        if not res.pd.converged:
            warn.append(f"reconstruction {n + 1} hit its iteration cap")
        x = res.image
    recon_seconds = time.perf_counter() - t_rec

    t_seg = time.perf_counter()
    if cfg.exact_updates:
        u = _exact_seg_update(u, x, problem, seeds[2 * n + 2])
    else:
        # each update rebuilds the labels from the fixed inner start; the
        # previous labels act only through the momentum fidelity, which
        # keeps the outer loop responsive to the improving features
        seg = seg_update(
            u, problem.stacked_features(x), problem.n_y, problem.mu,
            problem.f, beta=cfg.beta, nu=cfg.nu, tau=cfg.tau,
            eps=cfg.epsilon, sigma=cfg.sigma, k1=k1, k2=k2,
            k_s=cfg.k_strang, n_substeps=cfg.n_euler_substeps,
            delta=cfg.delta_stop, max_iters=cfg.max_sdie_iters,
            seed=seeds[2 * n + 2], u_init=inner_start)
        if not seg.converged:
            warn.append(f"segmentation {n + 1} hit its iteration cap")
        u = seg.values
    seg_seconds = time.perf_counter() - t_seg
    return x, u, recon_seconds, seg_seconds
