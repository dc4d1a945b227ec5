"""Double-obstacle potential and the rank-structured Ginzburg-Landau energy.

For labels u in [0,1]^V the per-pair energy matrix

    G_ij = (u_i - u_j)^2 / 2 + (W(u_i) + W(u_j)) / (2 eps)
           + (mu_i (u_i - f_i)^2 + mu_j (u_j - f_j)^2) / 4

factors as G = -u u^T + v 1^T + 1 v^T with v the vector built by
:func:`gl_rank_form`.  The energy <G, omega>_F then needs only two products
with the weight matrix: -u.(omega u) + 2 v.(omega 1), which is how it is
evaluated both densely and through the Nystrom operator.
"""

from __future__ import annotations

import numpy as np

# labels may leave [0,1] by at most this much before it is treated as a bug
CLIP_TOL = 1e-9


def double_obstacle(x):
    """Double-obstacle potential: x(1-x)/2 on [0,1], +inf outside."""
    x = np.asarray(x, dtype=float)
    inside = (x >= 0.0) & (x <= 1.0)
    out = np.where(inside, 0.5 * x * (1.0 - x), np.inf)
    if out.ndim == 0:
        return float(out)
    return out


def clip_labels(u: np.ndarray) -> np.ndarray:
    """Clip roundoff-sized excursions of u outside [0,1]; larger ones raise."""
    u = np.asarray(u, dtype=float)
    if np.any(u < -CLIP_TOL) or np.any(u > 1.0 + CLIP_TOL):
        worst = float(max(np.max(u) - 1.0, -np.min(u)))
        raise ValueError(
            f"labels leave [0,1] by {worst:.3e}, beyond the clip tolerance")
    return np.clip(u, 0.0, 1.0)


def gl_rank_form(u: np.ndarray, eps: float, mu: np.ndarray,
                 f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (u, v) generating G = -u u^T + v 1^T + 1 v^T."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    u = clip_labels(u)
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    v = (0.5 * u * u
         + double_obstacle(u) / (2.0 * eps)
         + 0.25 * mu * (u - f) ** 2)
    return u, v


def gl_energy(u: np.ndarray, eps: float, mu: np.ndarray, f: np.ndarray,
              omega) -> float:
    """Ginzburg-Landau energy <G(u), omega>_F.

    ``omega`` is either a dense symmetric weight matrix or any object with a
    ``prod`` method computing omega @ v (e.g. the Nystrom operator).
    """
    u, v = gl_rank_form(u, eps, mu, f)
    if isinstance(omega, np.ndarray):
        omega_u = omega @ u
        omega_one = omega @ np.ones_like(u)
    else:
        omega_u = omega.prod(u)
        omega_one = omega.prod(np.ones_like(u))
    return float(-u @ omega_u + 2.0 * (v @ omega_one))
