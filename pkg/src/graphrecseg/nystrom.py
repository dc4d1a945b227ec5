"""Nystrom-QR factorisation of the random-walk graph Laplacian and
Nystrom-compressed products with the (never materialised) weight matrix.

The vertex set is the concatenation of the n_y image pixels followed by the
n_z reference pixels; ``features`` is the stacked (n_y + n_z, q) feature
matrix.  All weight evaluations use the raw Gaussian similarity (diagonal 1);
degrees therefore include the unit self-weight, which leaves the Dirichlet
form untouched and keeps the interpolation block well conditioned.

Setting k1 = n_y and k2 = n_z selects the full interpolation set X = V, in
which case every product here agrees with the dense computation to roundoff.
That exact mode is what the test-suite oracles compare against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .features import weight_block

# relative pivot tolerance for inverting the interpolation block
PIVOT_RTOL = 1e-12
MAX_RESAMPLES = 5
_SEED_STRIDE = 0x9E3779B1  # decorrelates retry seeds


class DegreeError(ValueError):
    """Raised when the approximate degree vector leaves the positive cone."""


@dataclass(frozen=True)
class NystromFactors:
    """Rank-K factorisation Delta ~ u1 @ diag(lam) @ u2.T of the random-walk
    Laplacian, plus the approximate degree vector used to normalise it."""

    u1: np.ndarray        # (n, K)
    lam: np.ndarray       # (K,) Laplacian eigenvalue estimates
    u2: np.ndarray        # (n, K)
    degrees: np.ndarray   # (n,) approximate degrees, positive

    @property
    def rank(self) -> int:
        return self.lam.shape[0]


def sample_interpolation_set(n_y: int, n_z: int, k1: int, k2: int,
                             seed: int) -> np.ndarray:
    """Sample k1 vertices uniformly without replacement from the image part
    and k2 from the reference part.  k1 = n_y, k2 = n_z returns all of V in
    natural order (exact mode)."""
    if k1 > n_y or k2 > n_z:
        raise ValueError("interpolation set larger than the vertex pools")
    if k1 == n_y and k2 == n_z:
        return np.arange(n_y + n_z)
    rng = np.random.default_rng(seed)
    part_y = rng.choice(n_y, size=k1, replace=False)
    part_z = n_y + rng.choice(n_z, size=k2, replace=False)
    return np.concatenate([part_y, part_z])


class _SymmetricSolver:
    """Pseudo-inverse apply for a symmetric matrix via eigendecomposition,
    truncating eigenvalues below PIVOT_RTOL relative to the largest."""

    def __init__(self, mat: np.ndarray):
        vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
        scale = np.max(np.abs(vals)) if vals.size else 0.0
        keep = np.abs(vals) > PIVOT_RTOL * scale
        self.rank_deficient = not bool(np.all(keep))
        self._vecs = vecs[:, keep]
        self._inv_vals = 1.0 / vals[keep]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        proj = self._vecs.T @ rhs
        if rhs.ndim > 1:
            return self._vecs @ (self._inv_vals[:, None] * proj)
        return self._vecs @ (self._inv_vals * proj)


class OmegaOperator:
    """Shared Nystrom blocks for products with the full weight matrix.

    Holds omega_VX and a factorisation of omega_XX for one interpolation set,
    so that repeated products (e.g. the per-feature-column products in the
    reconstruction gradient) reuse the same blocks deterministically.
    """

    def __init__(self, features: np.ndarray, n_y: int, k1: int, k2: int,
                 sigma: float, seed: int, max_resamples: int = MAX_RESAMPLES,
                 need_degrees: bool = False):
        features = np.asarray(features, dtype=float)
        n = features.shape[0]
        n_z = n - n_y
        exact = k1 == n_y and k2 == n_z
        attempt = 0
        degrees = None
        while True:
            x_idx = sample_interpolation_set(
                n_y, n_z, k1, k2, seed + _SEED_STRIDE * attempt)
            omega_vx = weight_block(features, features[x_idx], sigma)
            solver = _SymmetricSolver(omega_vx[x_idx])
            flawed = solver.rank_deficient
            if need_degrees and not flawed:
                degrees = omega_vx @ solver.solve(omega_vx.T @ np.ones(n))
                flawed = bool(np.any(degrees <= 0.0))
            if not flawed or exact or attempt >= max_resamples:
                if flawed and not exact:
                    warnings.warn(
                        "interpolation block numerically singular after "
                        f"{attempt} resamples; continuing with a truncated "
                        "pseudo-inverse", RuntimeWarning)
                break
            attempt += 1
        self.n_y = n_y
        self.x_idx = x_idx
        self.omega_vx = omega_vx
        self._solver = solver
        if need_degrees and (degrees is None or flawed):
            degrees = omega_vx @ solver.solve(omega_vx.T @ np.ones(n))
        self._degrees = degrees

    @property
    def rank(self) -> int:
        return self.x_idx.shape[0]

    def prod(self, v: np.ndarray) -> np.ndarray:
        """Approximate Omega @ v via omega_VX (omega_XX^-1 (omega_VX.T v)).

        ``v`` may be a vector over V or an (n, m) stack of vectors.
        """
        v = np.asarray(v, dtype=float)
        return self.omega_vx @ self._solver.solve(self.omega_vx.T @ v)

    def degree_estimate(self) -> np.ndarray:
        if self._degrees is not None:
            return self._degrees
        return self.prod(np.ones(self.omega_vx.shape[0]))


def omega_prod(v: np.ndarray, features: np.ndarray, n_y: int,
               x_idx: np.ndarray, sigma: float) -> np.ndarray:
    """One-shot Nystrom product Omega @ v for a given interpolation set."""
    features = np.asarray(features, dtype=float)
    omega_vx = weight_block(features, features[x_idx], sigma)
    solver = _SymmetricSolver(omega_vx[x_idx])
    return omega_vx @ solver.solve(omega_vx.T @ np.asarray(v, dtype=float))


def nystrom_qr(features: np.ndarray, n_y: int, k1: int, k2: int,
               sigma: float, seed: int) -> NystromFactors:
    """Nystrom-QR approximate SVD of the random-walk Laplacian.

    Estimates degrees from the Nystrom reconstruction, row-normalises
    omega_VX, takes a thin QR, and eigendecomposes the small core to obtain
    Delta ~ u1 diag(lam) u2.T with lam the Laplacian eigenvalue estimates.
    """
    op = OmegaOperator(features, n_y, k1, k2, sigma, seed, need_degrees=True)
    degrees = op.degree_estimate()
    if np.any(degrees <= 0):
        raise DegreeError(
            "Nystrom degree estimate has non-positive entries after "
            "resampling; the weight function must produce positive "
            "similarities")
    d_isqrt = 1.0 / np.sqrt(degrees)
    q_mat, r_mat = np.linalg.qr(d_isqrt[:, None] * op.omega_vx)
    core = r_mat @ op._solver.solve(r_mat.T)
    core = 0.5 * (core + core.T)
    sig, phi = np.linalg.eigh(core)
    lam = 1.0 - sig
    u_s = q_mat @ phi
    u1 = d_isqrt[:, None] * u_s
    u2 = np.sqrt(degrees)[:, None] * u_s
    return NystromFactors(u1=u1, lam=lam, u2=u2, degrees=degrees)


def laplacian_matvec(factors: NystromFactors, v: np.ndarray) -> np.ndarray:
    """Approximate random-walk Laplacian product u1 (lam * (u2.T v))."""
    v = np.asarray(v, dtype=float)
    if v.ndim > 1:
        return factors.u1 @ (factors.lam[:, None] * (factors.u2.T @ v))
    return factors.u1 @ (factors.lam * (factors.u2.T @ v))
