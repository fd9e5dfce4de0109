"""Discrete transport operators, inner products, and material fields.

Conventions
-----------
A macroscopic state is a plain ``(n_points,)`` array on the rho family of a
:class:`~lrtrans.grid.StaggeredGrid`; a microscopic state is a plain
``(n_points, n_ordinates)`` array ``G`` on the g family, one column per
ordinate.  A microscopic state is physical when it satisfies the zero-density
constraint ``G @ w = 0``.

Rank-structured matrices are passed around as factor pairs ``(P, A)``
representing ``P @ A.T`` with ``P`` of shape ``(n_points, m)`` and ``A`` of
shape ``(n_ordinates, m)``; the density-gradient and projected-advection
operators return this form so the low-rank integrators never materialize an
``n_points x n_ordinates`` temporary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .angular import QuadratureSet
from .grid import StaggeredGrid, diff


@dataclass
class MaterialField:
    """Scattering/absorption coefficients and sources sampled on the mesh.

    ``sigma_*_rho`` live on the rho family, ``sigma_*_g`` on the g family.
    ``phi(t)`` returns the macroscopic source on the rho family or ``None``.
    ``micro_source(t)`` returns factors ``(P, A)`` of the angular-fluctuating
    source entering the microscopic equation (including any ``1/epsilon``
    scaling); its angular factors must satisfy ``A.T @ w = 0``.
    ``sigma_s_floor`` is the lower bound used by the time-step formulas.
    """

    sigma_s_rho: np.ndarray
    sigma_a_rho: np.ndarray
    sigma_s_g: np.ndarray
    sigma_a_g: np.ndarray
    sigma_s_floor: float
    phi: Optional[Callable[[float], np.ndarray]] = None
    micro_source: Optional[Callable[[float], tuple]] = None

    def __post_init__(self):
        if self.sigma_s_floor < 0:
            raise ValueError("sigma_s_floor must be nonnegative")
        for name in ("sigma_s_rho", "sigma_s_g"):
            if np.any(getattr(self, name) < self.sigma_s_floor - 1e-14):
                raise ValueError(f"{name} drops below sigma_s_floor")
        for name in ("sigma_a_rho", "sigma_a_g"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be nonnegative")


def sample_material(
    grid: StaggeredGrid,
    sigma_s: Callable[[np.ndarray], np.ndarray],
    sigma_a: Callable[[np.ndarray], np.ndarray],
    sigma_s_floor: float,
    phi: Optional[Callable[[float], np.ndarray]] = None,
    micro_source: Optional[Callable[[float], tuple]] = None,
) -> MaterialField:
    """Sample coefficient functions pointwise at both point families.

    ``sigma_s`` and ``sigma_a`` take an ``(n, dim)`` coordinate array and
    return ``(n,)`` values.
    """

    def samp(f, coords):
        out = np.asarray(f(coords), dtype=float)
        if out.shape != (coords.shape[0],):
            out = np.broadcast_to(out, (coords.shape[0],)).astype(float)
        return out

    return MaterialField(
        sigma_s_rho=samp(sigma_s, grid.rho_coords),
        sigma_a_rho=samp(sigma_a, grid.rho_coords),
        sigma_s_g=samp(sigma_s, grid.g_coords),
        sigma_a_g=samp(sigma_a, grid.g_coords),
        sigma_s_floor=float(sigma_s_floor),
        phi=phi,
        micro_source=micro_source,
    )


# ---------------------------------------------------------------------------
# transport operators
# ---------------------------------------------------------------------------

def advect(grid: StaggeredGrid, quad: QuadratureSet, G: np.ndarray) -> np.ndarray:
    """Upwind advection: sum_j D^(j,-) G Q^(j,+) + D^(j,+) G Q^(j,-)."""
    _check_micro(grid, quad, G)
    out = np.zeros_like(G, dtype=float)
    for j in range(grid.dim):
        out += diff(grid, j, -1, G) * quad.q_plus(j)[None, :]
        out += diff(grid, j, +1, G) * quad.q_minus(j)[None, :]
    return out


def advect_adjoint(grid: StaggeredGrid, quad: QuadratureSet, G: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`advect` in the weighted inner product (test oracle).

    Equals ``-sum_j (D^(j,-) G Q^(j,-) + D^(j,+) G Q^(j,+))``.
    """
    _check_micro(grid, quad, G)
    out = np.zeros_like(G, dtype=float)
    for j in range(grid.dim):
        out -= diff(grid, j, -1, G) * quad.q_minus(j)[None, :]
        out -= diff(grid, j, +1, G) * quad.q_plus(j)[None, :]
    return out


def flux_div(grid: StaggeredGrid, quad: QuadratureSet, G: np.ndarray) -> np.ndarray:
    """Divergence of the discrete first angular moment of ``G``.

    ``(1/|D_Omega|) sum_j D^(j,-) G Q^(j) w``, read on the rho family.
    """
    _check_micro(grid, quad, G)
    out = np.zeros(grid.n_points)
    for j in range(grid.dim):
        out += diff(grid, j, -1, G @ (quad.q(j) * quad.w))
    return out / quad.domain_measure


def flux_div_factored(grid, quad, P: np.ndarray, A: np.ndarray) -> np.ndarray:
    """:func:`flux_div` of ``P @ A.T`` without forming the product."""
    out = np.zeros(grid.n_points)
    for j in range(grid.dim):
        out += diff(grid, j, -1, P @ (A.T @ (quad.q(j) * quad.w)))
    return out / quad.domain_measure


def density_grad(grid: StaggeredGrid, quad: QuadratureSet, rho: np.ndarray) -> tuple:
    """Directional density gradient, factored: ``sum_j D^(j,+) rho 1^T Q^(j)``.

    Returns ``(P, A)`` with one column per axis: ``P[:, j] = D^(j,+) rho``
    (read on the g family) and ``A[:, j] = Omega^(j)``; the dense matrix is
    ``P @ A.T`` and has rank at most ``dim``.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.n_points,):
        raise ValueError(f"density shape {rho.shape} != ({grid.n_points},)")
    P = np.column_stack([diff(grid, j, +1, rho) for j in range(grid.dim)])
    A = quad.omega.copy()
    return P, A


def project_out_mean(quad: QuadratureSet, F: np.ndarray) -> np.ndarray:
    """Right-multiply by ``I - w 1^T / |D_Omega|``, removing angular means."""
    return F - np.outer(F @ quad.w, np.ones(quad.n)) / quad.domain_measure


def advect_projected(
    grid: StaggeredGrid, quad: QuadratureSet, X: np.ndarray, S: np.ndarray, V: np.ndarray
) -> tuple:
    """Mean-free advection of energy-consistent factors, kept factored.

    For factors of ``G M`` this returns ``(P, A)`` with
    ``P @ A.T = A(X S V^T M^{-1}) (I - w 1^T / |D_Omega|) M``.
    All angular work is done as r-column products: per axis the angular
    factor is ``Q^(j,+-) V - (M 1) (V^T M Q^(j,+-) 1)^T / |D_Omega|``.
    Cost is ``O((n_points + n_ordinates) r d)``; no dense micro matrix is
    formed.
    """
    K = X @ S
    P_blocks, A_blocks = [], []
    for j in range(grid.dim):
        P_blocks.append(diff(grid, j, -1, K))
        A_blocks.append(_angular_factor_weighted(quad, V, quad.q_plus(j)))
        P_blocks.append(diff(grid, j, +1, K))
        A_blocks.append(_angular_factor_weighted(quad, V, quad.q_minus(j)))
    return np.hstack(P_blocks), np.hstack(A_blocks)


def _angular_factor_weighted(quad, V, q_split):
    # (M^{-1} Q^{+-} (I - w 1^T/|D|) M)^T V = Q^{+-} V - (M1)(V^T M Q^{+-} 1)/|D|
    mq = quad.m * q_split
    return q_split[:, None] * V - np.outer(quad.m, V.T @ mq) / quad.domain_measure


def _angular_factor_unweighted(quad, V, q_split):
    # ((I - w 1^T/|D|)^T Q^{+-})^T ... = Q^{+-} V - 1 (w Q^{+-})^T V / |D|
    return q_split[:, None] * V - np.outer(
        np.ones(quad.n), V.T @ (quad.w * q_split)
    ) / quad.domain_measure


# ---------------------------------------------------------------------------
# inner products and norms
# ---------------------------------------------------------------------------

def inner(grid: StaggeredGrid, f1: np.ndarray, f2: np.ndarray) -> float:
    """Mesh-scaled Euclidean inner product ``(prod_j dx_j) f1^T f2``."""
    if f1.shape != f2.shape:
        raise ValueError("shape mismatch in inner")
    return grid.cell_volume * float(np.dot(f1, f2))


def norm(grid: StaggeredGrid, f: np.ndarray) -> float:
    return np.sqrt(max(inner(grid, f, f), 0.0))


def inner_w(grid: StaggeredGrid, quad: QuadratureSet, F1: np.ndarray, F2: np.ndarray) -> float:
    """Weighted inner product ``(prod_j dx_j) tr(F1 M^2 F2^T)``."""
    if F1.shape != F2.shape:
        raise ValueError("shape mismatch in inner_w")
    return grid.cell_volume * float(np.sum(F1 * F2 * quad.w[None, :]))


def norm_w(grid: StaggeredGrid, quad: QuadratureSet, F: np.ndarray) -> float:
    return np.sqrt(max(inner_w(grid, quad, F, F), 0.0))


def _check_micro(grid, quad, G):
    if G.shape != (grid.n_points, quad.n):
        raise ValueError(
            f"micro state shape {G.shape} != ({grid.n_points}, {quad.n})"
        )
