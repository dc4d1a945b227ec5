"""Reconstruction update: accelerated primal-dual solver, its prox operators,
and the linearised coupling gradient.

The update minimises

    R(grad x) + alpha ||T x - y||^2 + <x, g_n> + eta ||x - x_n||^2

by shifting the linear term into the proximal anchor x~ = x_n - g_n/(2 eta)
and running the accelerated primal-dual iteration with strong-convexity
constant gamma = 2 eta.  The coupling gradient g_n is assembled from Nystrom
products
with the weight matrix through the rank structure of the energy matrix, one
product per feature column plus one for the all-ones vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import forward
from .features import FeatureKernel, feature_map, feature_map_adjoint
from .grid import ImageField
from .gl import gl_rank_form
from .nystrom import OmegaOperator
from .tv import GRAD_NORM_BOUND, HuberTV, grad, grad_adjoint, huber_value


class StepBoundError(ValueError):
    """Raised when the fixed-point contraction condition fails."""


def _fixed_point_solve(rhs: np.ndarray, model, grid, coef: float,
                       denom: float, tol: float, max_iters: int):
    """Solve (denom I + coef T^2) x = rhs by the contraction iteration
    x <- (rhs - coef T^2 x) / denom, started from rhs.  Returns the solution
    and the successive iterate differences (for contraction diagnostics)."""
    x = rhs.copy()
    diffs = []
    for _ in range(max_iters):
        tsq = forward.adjoint(model, forward.apply(
            model, ImageField(grid, x))).values
        x_next = (rhs - coef * tsq) / denom
        diff = float(np.linalg.norm(x_next - x))
        diffs.append(diff)
        scale = float(np.linalg.norm(x))
        x = x_next
        if diff <= tol * max(scale, 1e-30):
            break
    return x, diffs


def prox_g(x: ImageField, dt: float, model, y: ImageField, alpha: float,
           eta: float, x_tilde: np.ndarray, *, fp_tol: float = 1e-8,
           fp_max_iters: int = 100) -> ImageField:
    """Proximal map of dt * (alpha ||T.-y||^2 + eta ||.-x~||^2), i.e. solve

        ((1/dt + 2 eta) I + 2 alpha T* T) x' = 2 alpha T*(y) + 2 eta x~ + x/dt

    Closed form for the identity model; fixed-point iteration for the blur,
    which contracts only when 2 alpha / (2 eta + 1/dt) < 1.
    """
    denom0 = 1.0 / dt + 2.0 * eta
    rhs = (2.0 * alpha * forward.adjoint(model, y).values
           + 2.0 * eta * x_tilde + x.values / dt)
    if model.kind == "identity":
        return ImageField(x.grid, rhs / (denom0 + 2.0 * alpha))
    zeta = 2.0 * alpha / denom0  # times ||T^2|| = 1
    if zeta >= 1.0:
        raise StepBoundError(
            f"fixed-point prox requires alpha < eta + 1/(2 dt); "
            f"got alpha={alpha}, eta={eta}, dt={dt} (contraction {zeta:.3f})")
    sol, _ = _fixed_point_solve(rhs, model, x.grid, 2.0 * alpha, denom0,
                                fp_tol, fp_max_iters)
    return ImageField(x.grid, sol)


@dataclass
class PDResult:
    image: ImageField
    iterations: int
    converged: bool
    objectives: list = field(default_factory=list)


def primal_dual(x0: ImageField, gamma: float, prox_dual, prox_primal, *,
                norm_k: float = GRAD_NORM_BOUND, dt1: float | None = None,
                dt2: float | None = None, tol: float = 1e-6,
                consecutive: int = 3, max_iters: int = 500,
                objective=None) -> PDResult:
    """First-order primal-dual iteration for min_x R(grad x) + G(x).

    ``prox_dual(p, dt)`` resolves the dual update, ``prox_primal(x, dt)``
    (an ImageField map) the primal one.  With gamma > 0, steps accelerate as
    theta_n = (1 + 2 gamma dt_2)^(-1/2); gamma = 0 selects the unaccelerated
    variant (theta = 1), for objectives without strong convexity.

    Initial steps default to (1/||K||, 0.99/||K||); custom values must keep
    dt1 * dt2 * ||K||^2 <= 1.  Stops when the relative primal change stays
    below ``tol`` for ``consecutive`` iterations, or at ``max_iters``.
    """
    grid = x0.grid
    x = x0.values.copy()
    x_bar = x.copy()
    p = grad(x0)
    dt1 = 1.0 / norm_k if dt1 is None else dt1
    dt2 = 0.99 / norm_k if dt2 is None else dt2
    if dt1 * dt2 * norm_k ** 2 > 1.0 + 1e-12:
        raise ValueError("step sizes violate dt1 dt2 ||K||^2 <= 1")
    small_count = 0
    objectives = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        p = prox_dual(p + dt1 * grad(ImageField(grid, x_bar)), dt1)
        x_arg = x - dt2 * grad_adjoint(p, grid).values
        x_next = prox_primal(ImageField(grid, x_arg), dt2).values
        theta = (1.0 + 2.0 * gamma * dt2) ** -0.5 if gamma > 0 else 1.0
        dt1, dt2 = dt1 / theta, dt2 * theta
        x_bar = x_next + theta * (x_next - x)
        rel = np.linalg.norm(x_next - x) / max(np.linalg.norm(x), 1e-30)
        x = x_next
        if objective is not None:
            objectives.append(objective(ImageField(grid, x)))
        small_count = small_count + 1 if rel <= tol else 0
        if small_count >= consecutive:
            converged = True
            break
    return PDResult(ImageField(grid, x), iterations, converged, objectives)


def cprod(omega_op: OmegaOperator, u: np.ndarray, v_n: np.ndarray,
          rhs: np.ndarray) -> np.ndarray:
    """Product of the Y x V block of (G_n Hadamard Omega) with ``rhs``.

    Uses the rank structure of G_n: with B(w) = (Omega w) restricted to Y,
    the product is -u_Y * B(u * rhs) + v_Y * B(rhs) + B(v_n * rhs), applied
    columnwise if ``rhs`` is a matrix.
    """
    n_y = omega_op.n_y
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 1:
        b_uv = omega_op.prod(u * rhs)[:n_y]
        b_v = omega_op.prod(rhs)[:n_y]
        b_wv = omega_op.prod(v_n * rhs)[:n_y]
        return -u[:n_y] * b_uv + v_n[:n_y] * b_v + b_wv
    b_uv = omega_op.prod(u[:, None] * rhs)[:n_y]
    b_v = omega_op.prod(rhs)[:n_y]
    b_wv = omega_op.prod(v_n[:, None] * rhs)[:n_y]
    return (-u[:n_y, None] * b_uv + v_n[:n_y, None] * b_v + b_wv)


def compute_g_n(x_n: ImageField, u_n: np.ndarray, *, kernel: FeatureKernel,
                ref_features: np.ndarray, mu: np.ndarray, f: np.ndarray,
                eps: float, beta: float, sigma: float, k1: int, k2: int,
                seed: int) -> ImageField:
    """Gradient of the segmentation-coupling energy with respect to the
    image: (4 beta / (q sigma^2)) F*(C z - (C 1) * z) assembled through
    Nystrom products, C the Y x V block of G_n Hadamard Omega."""
    grid = x_n.grid
    if beta == 0.0:
        return ImageField(grid, np.zeros_like(x_n.values))
    z_n = feature_map(x_n, kernel)
    stacked = np.vstack([z_n, ref_features])
    q = stacked.shape[1]
    u, v_n = gl_rank_form(u_n, eps, mu, f)
    omega_op = OmegaOperator(stacked, grid.n, k1, k2, sigma, seed)
    w1 = cprod(omega_op, u, v_n, stacked)
    w2 = cprod(omega_op, u, v_n, np.ones(stacked.shape[0]))
    pre = feature_map_adjoint(w1 - w2[:, None] * z_n, kernel, grid)
    scale = 4.0 * beta / (q * sigma * sigma)
    return ImageField(grid, scale * pre.values)


@dataclass
class ReconResult:
    image: ImageField
    g_n: ImageField
    pd: PDResult


def recon_update(x_n: ImageField, u_n: np.ndarray, y: ImageField, model, *,
                 kernel: FeatureKernel, ref_features: np.ndarray,
                 mu: np.ndarray, f: np.ndarray, huber: HuberTV, alpha: float,
                 beta: float, eta: float, eps: float, sigma: float, k1: int,
                 k2: int, seed: int, pd_tol: float = 1e-6,
                 pd_consecutive: int = 3, pd_max_iters: int = 500,
                 fp_tol: float = 1e-8, fp_max_iters: int = 100,
                 track_objective: bool = False) -> ReconResult:
    """One linearised reconstruction update (primal-dual with gamma = 2 eta)."""
    from .tv import prox_r_star

    if eta <= 0:
        raise ValueError("the linearised update needs a positive eta")
    g_n = compute_g_n(x_n, u_n, kernel=kernel, ref_features=ref_features,
                      mu=mu, f=f, eps=eps, beta=beta, sigma=sigma,
                      k1=k1, k2=k2, seed=seed)
    x_tilde = x_n.values - g_n.values / (2.0 * eta)

    def prox_dual(p, dt):
        return prox_r_star(p, dt, huber)

    def prox_primal(x, dt):
        return prox_g(x, dt, model, y, alpha, eta, x_tilde,
                      fp_tol=fp_tol, fp_max_iters=fp_max_iters)

    objective = None
    if track_objective:
        def objective(x):
            resid = forward.apply(model, x).values - y.values
            return (huber_value(grad(x), huber)
                    + alpha * float(np.sum(resid * resid))
                    + float(np.sum(x.values * g_n.values))
                    + eta * float(np.sum((x.values - x_n.values) ** 2)))

    pd = primal_dual(x_n, 2.0 * eta, prox_dual, prox_primal,
                     tol=pd_tol, consecutive=pd_consecutive,
                     max_iters=pd_max_iters, objective=objective)
    return ReconResult(image=pd.image, g_n=g_n, pd=pd)
