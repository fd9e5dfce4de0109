"""Energy-consistent low-rank integrators for the microscopic component.

The microscopic fluctuation ``G`` is evolved through orthonormal factors
``X S V^T``.  In the default weighted mode the factors represent ``G M``
(``M`` the square-root weight matrix), so Frobenius geometry on the factors
matches the quadrature-weighted energy norm and the basis-update/Galerkin
steps inherit the dissipation of the full-rank scheme.  The unweighted mode
factors ``G`` directly with plainly orthonormal ``V``; it exists solely to
demonstrate how that choice breaks the energy alignment, and is selected with
``MicroStateLowRank.weighted = False``.

Integrators
-----------
``bug_step``
    Fixed-rank basis-update & Galerkin step: implicit pointwise K step,
    implicit r x r L step, constrained re-orthonormalization, implicit r x r
    Galerkin S step.
``abug_step``
    Augmented variant: bases are extended with the K/L updates and previous
    bases (rank <= 2r), the Galerkin step runs at the augmented rank, and the
    result is truncated by a relative singular-value tolerance.  With the
    ``AP-aBUG`` integrator tag the bases are additionally enriched with the
    discrete diffusion-limit directions (one spatial and one angular vector
    per axis) which are pinned as untruncatable leading columns.

Angular bases in weighted mode are produced by :func:`constrained_qr`, which
orthonormalizes inside the zero-density subspace so ``1^T M V = 0`` holds to
machine precision even for rank-deficient inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .angular import QuadratureSet
from .fullrank import SolverConfig, relaxation_factor
from .grid import StaggeredGrid, diff
from .ops import (
    MaterialField,
    _angular_factor_unweighted,
    _angular_factor_weighted,
    density_grad,
    flux_div_factored,
)


class RankOverflowError(RuntimeError):
    """Truncation would need more columns than the configured maximum rank."""


@dataclass
class MicroStateLowRank:
    """Low-rank factors of the microscopic state.

    ``X`` is ``(n_points, r)``, ``S`` is ``(r, r)`` (rectangular only in
    rank-capped corner cases), ``V`` is ``(n_ordinates, r)``; ``X`` and ``V``
    have orthonormal columns.  ``weighted=True`` means the factors represent
    ``G M`` and ``V`` satisfies the zero-density constraint ``1^T M V = 0``.
    """

    X: np.ndarray
    S: np.ndarray
    V: np.ndarray
    weighted: bool = True

    @property
    def rank(self) -> int:
        return self.X.shape[1]


@dataclass
class LowRankConfig:
    """Integrator selection: fixed rank for BUG, tolerance for aBUG variants."""

    integrator: str = "BUG"
    rank: int = 1
    tau: float = 1e-5
    max_rank: Optional[int] = None

    def __post_init__(self):
        if self.integrator not in ("BUG", "aBUG", "AP-aBUG"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass
class StepInfo:
    """Per-step scalars recorded by the coupled update."""

    s_tilde_fro: float
    pre_truncation_rank: int
    rank: int


# ---------------------------------------------------------------------------
# factor construction
# ---------------------------------------------------------------------------

def _fix_signs(Q: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    if Q.size == 0:
        return Q
    picks = np.abs(Q).argmax(axis=0)
    signs = np.sign(Q[picks, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs[None, :]


def _qr_basis(B: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(B)
    return _fix_signs(Q)


def constrained_qr(L: np.ndarray, quad: QuadratureSet) -> np.ndarray:
    """Orthonormal basis for ``range(L)`` inside the zero-density subspace.

    Projects onto the subspace ``{v : (M 1)^T v = 0}``, factorizes there, and
    maps back, so the result satisfies the constraint to machine precision
    regardless of the conditioning of ``L``.  Rank-deficient inputs yield
    deterministic constraint-satisfying completion columns.  At most
    ``n_ordinates - 1`` columns are returned.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != quad.n:
        raise ValueError(f"expected ({quad.n}, r) input, got {L.shape}")
    k = min(L.shape[1], quad.z_dim)
    Y = quad.z_applyt(L)
    Q, _ = np.linalg.qr(Y)
    return _fix_signs(quad.z_apply(Q[:, :k]))


def _complete_basis(Q: np.ndarray, extra: int, rng: np.random.Generator) -> np.ndarray:
    if extra <= 0:
        return Q
    n, k = Q.shape
    trial = rng.standard_normal((n, extra))
    full, _ = np.linalg.qr(np.hstack([Q, trial]) if k else trial)
    return np.hstack([Q, _fix_signs(full[:, k : k + extra])])


def factorize_micro(
    grid: StaggeredGrid,
    quad: QuadratureSet,
    G: np.ndarray,
    rank: int,
    weighted: bool = True,
    seed: int = 0,
) -> MicroStateLowRank:
    """Best rank-``rank`` factorization of a dense microscopic state.

    In weighted mode the SVD is taken of ``G M`` after removing its density
    mode (the component along ``M 1``, which the constrained representation
    cannot hold), and the rank is capped at the zero-density subspace
    dimension ``n_ordinates - 1``.  If the input has lower numerical rank,
    the bases are padded with deterministic (seeded) orthonormal columns and
    zero coupling entries.
    """
    rng = np.random.default_rng(seed)
    if weighted:
        A = G * quad.m[None, :]
        mhat = quad.m / np.linalg.norm(quad.m)
        A = A - np.outer(A @ mhat, mhat)
    else:
        A = np.asarray(G, dtype=float)
    r_eff = min(rank, grid.n_points, quad.z_dim if weighted else quad.n)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = int(np.sum(s > (s[0] * 1e-14 if s.size and s[0] > 0 else np.inf)))
    keep = min(keep, r_eff)
    picks = np.abs(U[:, :keep]).argmax(axis=0) if keep else np.array([], dtype=int)
    signs = np.sign(U[picks, np.arange(keep)]) if keep else np.array([])
    X = U[:, :keep] * signs[None, :] if keep else np.zeros((grid.n_points, 0))
    Vm = (Vt[:keep].T * signs[None, :]) if keep else np.zeros((quad.n, 0))
    X = _complete_basis(X, r_eff - keep, rng)
    if weighted:
        Vz = quad.z_applyt(Vm) if keep else np.zeros((quad.z_dim, 0))
        Vz = _complete_basis(Vz, r_eff - keep, rng)
        V = quad.z_apply(Vz)
    else:
        V = _complete_basis(Vm, r_eff - keep, rng)
    S = np.zeros((r_eff, r_eff))
    S[:keep, :keep] = np.diag(s[:keep])
    return MicroStateLowRank(X=X, S=S, V=V, weighted=weighted)


def zero_micro_state(
    grid: StaggeredGrid,
    quad: QuadratureSet,
    rank: int,
    weighted: bool = True,
    seed: int = 0,
) -> MicroStateLowRank:
    """Zero state with seeded orthonormal bases, for isotropic initial data."""
    return factorize_micro(
        grid, quad, np.zeros((grid.n_points, quad.n)), rank, weighted, seed
    )


def reconstruct(state: MicroStateLowRank, quad: QuadratureSet) -> np.ndarray:
    """Dense microscopic state ``G`` represented by the factors."""
    GM = (state.X @ state.S) @ state.V.T
    return GM / quad.m[None, :] if state.weighted else GM


def gm_frobenius(state: MicroStateLowRank, quad: QuadratureSet) -> float:
    """Frobenius norm of ``G M`` computed from the factors alone."""
    if state.weighted:
        return float(np.linalg.norm(state.S))
    C = state.V.T @ (quad.w[:, None] * state.V)
    return float(np.sqrt(max(np.sum((state.S @ C) * state.S), 0.0)))


def g_factors(state: MicroStateLowRank, quad: QuadratureSet) -> tuple:
    """Factors ``(P, A)`` with ``P @ A.T = G``, without reconstruction."""
    P = state.X @ state.S
    A = state.V / quad.m[:, None] if state.weighted else state.V
    return P, A


# ---------------------------------------------------------------------------
# basis-update & Galerkin machinery
# ---------------------------------------------------------------------------

def _ang(quad, Y, axis, sign, weighted):
    qs = quad.q_plus(axis) if sign > 0 else quad.q_minus(axis)
    f = _angular_factor_weighted if weighted else _angular_factor_unweighted
    return f(quad, Y, qs)


def galerkin_stage(
    grid: StaggeredGrid,
    quad: QuadratureSet,
    material: MaterialField,
    config: SolverConfig,
    state: MicroStateLowRank,
    rho_for_grad: np.ndarray,
    t_next: float = 0.0,
    augment: bool = False,
    ap_enrich: bool = False,
):
    """K/L/basis/S sequence; returns ``(X1, S_tilde, S1, V1)``.

    ``S1`` solves the Galerkin-projected implicit update started from the
    projected coupling matrix ``S_tilde = X1^T X S V^T V1``; with
    ``augment=True`` the new bases also contain the previous ones, and with
    ``ap_enrich=True`` additionally the diffusion-limit directions
    ``-(sigma_s)^{-1} D^(j,+) rho`` (spatial) and ``M Q^(j) 1`` (angular) as
    leading columns.
    """
    X, S, V = state.X, state.S, state.V
    wgt = state.weighted
    eps, dt = config.epsilon, config.dt
    eps2 = eps * eps
    sig = material.sigma_s_g / eps2 + material.sigma_a_g

    PJ, AJ = density_grad(grid, quad, rho_for_grad)
    AJr = quad.m[:, None] * AJ if wgt else AJ
    src = material.micro_source(t_next) if material.micro_source is not None else None
    if src is not None:
        Ps, As = src
        Asr = quad.m[:, None] * As if wgt else As

    K = X @ S
    rhs = K / dt
    for j in range(grid.dim):
        rhs -= diff(grid, j, -1, K) @ (_ang(quad, V, j, +1, wgt).T @ V) / eps
        rhs -= diff(grid, j, +1, K) @ (_ang(quad, V, j, -1, wgt).T @ V) / eps
    rhs -= PJ @ (AJr.T @ V) / eps2
    if src is not None:
        rhs += Ps @ (Asr.T @ V)
    K1 = rhs / (1.0 / dt + sig)[:, None]

    L = V @ S.T
    rhsL = L / dt
    for j in range(grid.dim):
        rhsL -= _ang(quad, L, j, +1, wgt) @ (diff(grid, j, -1, X).T @ X) / eps
        rhsL -= _ang(quad, L, j, -1, wgt) @ (diff(grid, j, +1, X).T @ X) / eps
    rhsL -= AJr @ (PJ.T @ X) / eps2
    if src is not None:
        rhsL += Asr @ (Ps.T @ X)
    Mimp = np.eye(X.shape[1]) / dt + X.T @ (sig[:, None] * X)
    L1 = np.linalg.solve(Mimp.T, rhsL.T).T

    kb, lb = [K1], [L1]
    if augment:
        kb.append(X)
        lb.append(V)
    if ap_enrich:
        if not wgt:
            raise ValueError("diffusion-limit enrichment requires weighted factors")
        kb.insert(0, _ap_spatial(grid, material, rho_for_grad))
        lb.insert(0, _ap_angular(quad))
    X1 = _qr_basis(np.hstack(kb))
    V1 = constrained_qr(np.hstack(lb), quad) if wgt else _qr_basis(np.hstack(lb))

    S_tilde = (X1.T @ X) @ S @ (V.T @ V1)
    rhsS = S_tilde / dt
    for j in range(grid.dim):
        rhsS -= (
            (X1.T @ diff(grid, j, -1, X1))
            @ S_tilde
            @ (_ang(quad, V1, j, +1, wgt).T @ V1)
            / eps
        )
        rhsS -= (
            (X1.T @ diff(grid, j, +1, X1))
            @ S_tilde
            @ (_ang(quad, V1, j, -1, wgt).T @ V1)
            / eps
        )
    rhsS -= (X1.T @ PJ) @ (AJr.T @ V1) / eps2
    if src is not None:
        rhsS += (X1.T @ Ps) @ (Asr.T @ V1)
    Mimp1 = np.eye(X1.shape[1]) / dt + X1.T @ (sig[:, None] * X1)
    S1 = np.linalg.solve(Mimp1, rhsS)
    return X1, S_tilde, S1, V1


def _ap_spatial(grid, material, rho):
    cols = [
        -diff(grid, j, +1, rho) / material.sigma_s_g for j in range(grid.dim)
    ]
    return np.column_stack(cols)


def _ap_angular(quad):
    return np.column_stack([quad.m * quad.q(j) for j in range(quad.dim)])


def bug_step(
    grid, quad, material, config, state, rho_for_grad, t_next: float = 0.0
) -> MicroStateLowRank:
    """One fixed-rank basis-update & Galerkin step; rank is unchanged."""
    X1, _, S1, V1 = galerkin_stage(
        grid, quad, material, config, state, rho_for_grad, t_next
    )
    return MicroStateLowRank(X=X1, S=S1, V=V1, weighted=state.weighted)


def abug_step(
    grid,
    quad,
    material,
    config,
    lr_config: LowRankConfig,
    state,
    rho_for_grad,
    t_next: float = 0.0,
) -> MicroStateLowRank:
    """One augmented step with tolerance-based truncation (rank adaptive)."""
    state2, _ = _abug_step_info(
        grid, quad, material, config, lr_config, state, rho_for_grad, t_next
    )
    return state2


def _abug_step_info(grid, quad, material, config, lr_config, state, rho_for_grad, t_next):
    ap = lr_config.integrator == "AP-aBUG"
    X1, S_tilde, S1, V1 = galerkin_stage(
        grid,
        quad,
        material,
        config,
        state,
        rho_for_grad,
        t_next,
        augment=True,
        ap_enrich=ap,
    )
    rmax = lr_config.max_rank or min(grid.n_points, quad.z_dim if state.weighted else quad.n)
    if ap:
        X2, S2, V2 = _truncate_pinned(X1, S1, V1, grid.dim, lr_config.tau, rmax)
    else:
        X2, S2, V2 = _truncate_plain(X1, S1, V1, lr_config.tau, rmax)
    info = StepInfo(
        s_tilde_fro=float(np.linalg.norm(S_tilde)),
        pre_truncation_rank=min(S1.shape),
        rank=X2.shape[1],
    )
    return MicroStateLowRank(X=X2, S=S2, V=V2, weighted=state.weighted), info


def _kept_rank(s: np.ndarray, tau: float, total: float) -> int:
    if s.size == 0 or total == 0.0:
        return 0
    suffix = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]
    below = suffix <= tau * total
    return int(np.argmax(below)) if below.any() else s.size


def _truncate_plain(X1, S1, V1, tau, rmax):
    U, s, Wt = np.linalg.svd(S1)
    k = max(_kept_rank(s, tau, float(np.linalg.norm(s))), 1)
    if k > rmax:
        raise RankOverflowError(
            f"truncation needs rank {k} > max_rank {rmax}; raise the cap"
        )
    picks = np.abs(U[:, :k]).argmax(axis=0)
    signs = np.sign(U[picks, np.arange(k)])
    signs[signs == 0] = 1.0
    return X1 @ (U[:, :k] * signs), np.diag(s[:k]), V1 @ (Wt[:k].T * signs)


def _truncate_pinned(X1, S1, V1, n_pinned, tau, rmax):
    """Truncate only the complement of the pinned leading basis columns.

    The first ``n_pinned`` columns of each basis are kept verbatim; the
    tolerance rule is applied to the singular values of the free rows and
    free columns of the coupling matrix, measured against the full coupling
    norm, and the retained free directions are rotated in.
    """
    d = min(n_pinned, min(S1.shape))
    total = float(np.linalg.norm(S1))
    A = S1[d:, :]
    B = S1[:, d:]
    Ua, sa, _ = np.linalg.svd(A, full_matrices=False) if A.size else (
        np.zeros((S1.shape[0] - d, 0)), np.zeros(0), None,
    )
    _, sb, Wbt = np.linalg.svd(B, full_matrices=False) if B.size else (
        None, np.zeros(0), np.zeros((0, S1.shape[1] - d)),
    )
    k = max(_kept_rank(sa, tau, total), _kept_rank(sb, tau, total))
    k = min(k, S1.shape[0] - d, S1.shape[1] - d)
    if d + k > rmax:
        raise RankOverflowError(
            f"truncation needs rank {d + k} > max_rank {rmax}; raise the cap"
        )
    Uk = _fix_signs(Ua[:, :k])
    Wk = _fix_signs(Wbt[:k].T)
    S2 = np.block(
        [
            [S1[:d, :d], S1[:d, d:] @ Wk],
            [Uk.T @ S1[d:, :d], Uk.T @ S1[d:, d:] @ Wk],
        ]
    )
    X2 = np.hstack([X1[:, :d], X1[:, d:] @ Uk])
    V2 = np.hstack([V1[:, :d], V1[:, d:] @ Wk])
    return X2, S2, V2


# ---------------------------------------------------------------------------
# coupled macro/micro step
# ---------------------------------------------------------------------------

def lowrank_macro_coupled_step(
    grid: StaggeredGrid,
    quad: QuadratureSet,
    material: MaterialField,
    config: SolverConfig,
    lr_config: LowRankConfig,
    rho: np.ndarray,
    state: MicroStateLowRank,
    t_next: float = 0.0,
    schur=None,
):
    """One coupled step; returns ``(rho_new, state_new, StepInfo)``.

    Schur-type schemes solve the reduced density system first (with the old
    micro state entering the right-hand side in factored form) and then run
    the micro integrator against the new density; plain IMEX coupling runs
    the micro integrator against the old density and closes with the diagonal
    density update.
    """
    schur_scheme = "IMEX-S" in config.scheme
    if schur_scheme:
        if schur is None:
            raise ValueError("Schur-type coupling requires a prebuilt SchurOperator")
        rho_new = _schur_macro_solve(grid, quad, material, config, schur, rho, state, t_next)
        state_new, info = _micro_advance(
            grid, quad, material, config, lr_config, state, rho_new, t_next
        )
    else:
        state_new, info = _micro_advance(
            grid, quad, material, config, lr_config, state, rho, t_next
        )
        P, A = g_factors(state_new, quad)
        b = rho / config.dt
        if material.phi is not None:
            b = b + material.phi(t_next)
        rho_new = (b - flux_div_factored(grid, quad, P, A)) / (
            1.0 / config.dt + material.sigma_a_rho
        )
    if not (np.all(np.isfinite(rho_new)) and np.isfinite(np.linalg.norm(state_new.S))):
        from .fullrank import DivergenceError

        raise DivergenceError("non-finite values in updated state")
    return rho_new, state_new, info


def _micro_advance(grid, quad, material, config, lr_config, state, rho_grad, t_next):
    if lr_config.integrator == "BUG":
        X1, S_tilde, S1, V1 = galerkin_stage(
            grid, quad, material, config, state, rho_grad, t_next
        )
        info = StepInfo(
            s_tilde_fro=float(np.linalg.norm(S_tilde)),
            pre_truncation_rank=min(S1.shape),
            rank=X1.shape[1],
        )
        return MicroStateLowRank(X=X1, S=S1, V=V1, weighted=state.weighted), info
    return _abug_step_info(
        grid, quad, material, config, lr_config, state, rho_grad, t_next
    )


def _schur_macro_solve(grid, quad, material, config, schur, rho, state, t_next):
    eps, dt = config.epsilon, config.dt
    R = relaxation_factor(material, config)
    XS = state.X @ state.S
    P_blocks = [XS / dt]
    A_blocks = [g_factors(state, quad)[1]]
    for j in range(grid.dim):
        P_blocks.append(-diff(grid, j, -1, XS) / eps)
        A_blocks.append(_ang_g(quad, state, j, +1))
        P_blocks.append(-diff(grid, j, +1, XS) / eps)
        A_blocks.append(_ang_g(quad, state, j, -1))
    if material.micro_source is not None:
        Ps, As = material.micro_source(t_next)
        P_blocks.append(Ps)
        A_blocks.append(As)
    P = R[:, None] * np.hstack(P_blocks)
    A = np.hstack(A_blocks)
    b = rho / dt
    if material.phi is not None:
        b = b + material.phi(t_next)
    return schur.solve(b - flux_div_factored(grid, quad, P, A))


def _ang_g(quad, state, axis, sign):
    fac = _ang(quad, state.V, axis, sign, state.weighted)
    return fac / quad.m[:, None] if state.weighted else fac
