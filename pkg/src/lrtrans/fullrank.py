"""Full-rank IMEX and IMEX-S time steppers for the macro-micro system.

Both steppers advance the coupled density/fluctuation pair by one step of a
first-order implicit-explicit scheme: collision terms are implicit (pointwise
diagonal), advection of the fluctuation is explicit and upwinded.  They
differ in the treatment of the density gradient driving the fluctuation:

* ``imex_step`` uses the old density, so the fluctuation update is fully
  pointwise and the density update is a diagonal solve;
* ``imex_s_step`` uses the new density, eliminates the fluctuation through a
  Schur complement, solves the resulting sparse symmetric positive definite
  system for the density, and recovers the fluctuation pointwise.

The Schur operator depends only on the mesh, quadrature, material, step size
and Knudsen number, so it is assembled once per run and reused.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .angular import QuadratureSet
from .grid import StaggeredGrid
from .ops import (
    MaterialField,
    advect,
    density_grad,
    flux_div,
    project_out_mean,
)


class DivergenceError(RuntimeError):
    """A state update produced non-finite values."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class LinearSolveError(RuntimeError):
    """The iterative macroscopic solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class SolverConfig:
    """Time-stepping configuration shared by all schemes.

    ``theta`` is the energy-functional parameter used by diagnostics; ``None``
    defers to the per-scheme default (1 for IMEX-type, 0 for IMEX-S-type).
    """

    epsilon: float
    dt: float
    scheme: str = "IMEX"
    theta: Optional[float] = None
    schur_rtol: float = 1e-12
    schur_maxiter_factor: int = 10
    schur_direct_threshold: int = 4096

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.theta is not None and not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")


def relaxation_factor(material: MaterialField, config: SolverConfig) -> np.ndarray:
    """Pointwise implicit factor ``(1/dt + sigma_s/eps^2 + sigma_a)^{-1}``."""
    eps2 = config.epsilon**2
    return 1.0 / (1.0 / config.dt + material.sigma_s_g / eps2 + material.sigma_a_g)


def _difference_matrix(grid: StaggeredGrid, axis: int, side: int) -> sp.csr_matrix:
    n = grid.n_points
    h = grid.spacing[axis]
    perm = grid.shift_permutation(axis, +1 if side > 0 else -1)
    eye = sp.identity(n, format="csr")
    shift = sp.csr_matrix(
        (np.ones(n), (np.arange(n), perm)), shape=(n, n)
    )
    return (shift - eye) / h if side > 0 else (eye - shift) / h


class SchurOperator:
    """Sparse reduced operator for the implicit density solve.

    Applies ``(1/dt + sigma_a) I - (1/(|D_Omega)| eps^2)) sum_{j,k} c_{jk}
    D^(j,-) diag(R) D^(k,+)`` with ``c_{jk} = sum_m w_m Omega^j_m Omega^k_m``
    and ``R`` the pointwise relaxation factor.  The matrix is symmetric
    positive definite; small systems are factorized directly, large ones are
    solved with Jacobi-preconditioned conjugate gradients.
    """

    def __init__(self, grid, quad, material: MaterialField, config: SolverConfig):
        n = grid.n_points
        R = relaxation_factor(material, config)
        T = sp.diags(1.0 / config.dt + material.sigma_a_rho).tocsr()
        c = np.array(
            [
                [float(np.sum(quad.w * quad.q(j) * quad.q(k))) for k in range(grid.dim)]
                for j in range(grid.dim)
            ]
        )
        drop = 1e-13 * np.max(np.abs(c))
        scale = 1.0 / (quad.domain_measure * config.epsilon**2)
        Rdiag = sp.diags(R)
        for j in range(grid.dim):
            Dm = _difference_matrix(grid, j, -1)
            for k in range(grid.dim):
                if abs(c[j, k]) <= drop:
                    continue
                Dp = _difference_matrix(grid, k, +1)
                T = T - (c[j, k] * scale) * (Dm @ Rdiag @ Dp)
        T = T.tocsr()
        T.eliminate_zeros()

        asym = sp.linalg.norm(T - T.T, np.inf)
        if asym > 1e-12 * sp.linalg.norm(T, np.inf):
            raise ValueError(f"Schur operator not symmetric: |T - T^T| = {asym:.3e}")
        d = T.diagonal()
        if np.any(d <= 0):
            raise ValueError("Schur operator has a nonpositive diagonal entry")

        self.matrix = T
        self._rtol = config.schur_rtol
        self._maxiter = config.schur_maxiter_factor * n
        if n < config.schur_direct_threshold:
            self._lu = spla.splu(T.tocsc())
            self._precond = None
        else:
            self._lu = None
            self._precond = spla.LinearOperator(
                T.shape, matvec=lambda x, dinv=1.0 / d: dinv * x
            )

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(b)
        x, info = spla.cg(
            self.matrix,
            b,
            rtol=self._rtol,
            atol=0.0,
            maxiter=self._maxiter,
            M=self._precond,
        )
        if info != 0:
            res = float(np.linalg.norm(self.matrix @ x - b) / max(np.linalg.norm(b), 1e-300))
            raise LinearSolveError(
                f"conjugate gradients stopped after {self._maxiter} iterations", res
            )
        return x


def build_schur(
    grid: StaggeredGrid, quad: QuadratureSet, material: MaterialField, config: SolverConfig
) -> SchurOperator:
    """Assemble the reduced density operator for the current ``(dt, eps)``."""
    return SchurOperator(grid, quad, material, config)


def _micro_explicit_rhs(grid, quad, material, config, G, t_next):
    """Shared explicit part: ``G/dt - (1/eps) A(G)(I - w 1^T/|D|) + source``."""
    rhs = G / config.dt
    rhs -= project_out_mean(quad, advect(grid, quad, G)) / config.epsilon
    if material.micro_source is not None:
        P, A = material.micro_source(t_next)
        rhs += P @ A.T
    return rhs


def _macro_source(material, config, rho, t_next):
    b = rho / config.dt
    if material.phi is not None:
        b = b + material.phi(t_next)
    return b


def imex_step(
    grid: StaggeredGrid,
    quad: QuadratureSet,
    material: MaterialField,
    config: SolverConfig,
    rho: np.ndarray,
    G: np.ndarray,
    t_next: float = 0.0,
):
    """One step with the density treated explicitly in the micro equation.

    Returns ``(rho_new, G_new)``.  Raises :class:`DivergenceError` if the
    update produces non-finite values.
    """
    eps2 = config.epsilon**2
    R = relaxation_factor(material, config)
    with np.errstate(over="ignore", invalid="ignore"):
        PJ, AJ = density_grad(grid, quad, rho)
        rhs = _micro_explicit_rhs(grid, quad, material, config, G, t_next)
        rhs -= (PJ @ AJ.T) / eps2
        G_new = R[:, None] * rhs
        rho_new = (
            _macro_source(material, config, rho, t_next) - flux_div(grid, quad, G_new)
        ) / (1.0 / config.dt + material.sigma_a_rho)
    _require_finite(rho_new, G_new)
    return rho_new, G_new


def imex_s_step(
    grid: StaggeredGrid,
    quad: QuadratureSet,
    material: MaterialField,
    config: SolverConfig,
    schur: SchurOperator,
    rho: np.ndarray,
    G: np.ndarray,
    t_next: float = 0.0,
):
    """One step with the density treated implicitly via the Schur complement.

    The density solves the reduced system assembled in ``schur``; the
    fluctuation is then recovered pointwise from the new density.
    """
    eps2 = config.epsilon**2
    R = relaxation_factor(material, config)
    with np.errstate(over="ignore", invalid="ignore"):
        b2 = _micro_explicit_rhs(grid, quad, material, config, G, t_next)
        b1 = _macro_source(material, config, rho, t_next)
        rho_new = schur.solve(b1 - flux_div(grid, quad, R[:, None] * b2))
        PJ, AJ = density_grad(grid, quad, rho_new)
        G_new = R[:, None] * (b2 - (PJ @ AJ.T) / eps2)
    _require_finite(rho_new, G_new)
    return rho_new, G_new


def _require_finite(rho, G):
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(G))):
        raise DivergenceError("non-finite values in updated state")
