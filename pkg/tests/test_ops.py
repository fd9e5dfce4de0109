"""Transport operators against dense oracles plus the proof-level identities."""

import numpy as np
import pytest

from lrtrans.angular import chebyshev_legendre_2d, gauss_legendre_1d
from lrtrans.grid import build_grid, diff
from lrtrans.ops import (
    MaterialField,
    advect,
    advect_adjoint,
    advect_projected,
    density_grad,
    flux_div,
    flux_div_factored,
    inner,
    inner_w,
    norm_w,
    project_out_mean,
    sample_material,
)
from conftest import dense_diff_matrix


def small_1d():
    return build_grid(1, (0.0, 1.0), 8), gauss_legendre_1d(8)


def small_2d():
    return build_grid(2, ((0.0, 1.0), (0.0, 1.0)), (6, 6)), chebyshev_legendre_2d(2)


@pytest.fixture(params=["1d", "2d"])
def setup(request):
    return small_1d() if request.param == "1d" else small_2d()


def dense_advect(grid, quad, G):
    out = np.zeros_like(G)
    for j in range(grid.dim):
        dm = dense_diff_matrix(grid, j, -1)
        dp = dense_diff_matrix(grid, j, +1)
        out += dm @ G @ np.diag(quad.q_plus(j)) + dp @ G @ np.diag(quad.q_minus(j))
    return out


def test_advect_zero_and_constant(setup):
    grid, quad = setup
    Z = np.zeros((grid.n_points, quad.n))
    assert np.array_equal(advect(grid, quad, Z), Z)
    C = np.ones((grid.n_points, 1)) @ np.arange(1.0, quad.n + 1)[None, :]
    assert np.max(np.abs(advect(grid, quad, C))) == 0.0


def test_advect_dense_oracle(setup, rng):
    grid, quad = setup
    G = rng.standard_normal((grid.n_points, quad.n))
    assert np.allclose(advect(grid, quad, G), dense_advect(grid, quad, G), atol=1e-13)


def test_flux_div_dense_oracle_and_isotropy(setup, rng):
    grid, quad = setup
    G = rng.standard_normal((grid.n_points, quad.n))
    dense = np.zeros(grid.n_points)
    for j in range(grid.dim):
        dense += dense_diff_matrix(grid, j, -1) @ G @ (quad.q(j) * quad.w)
    dense /= quad.domain_measure
    assert np.allclose(flux_div(grid, quad, G), dense, atol=1e-13)
    iso = np.outer(rng.standard_normal(grid.n_points), np.ones(quad.n))
    assert np.max(np.abs(flux_div(grid, quad, iso))) <= 1e-12 * np.max(np.abs(iso))


def test_summation_by_parts_flux_gradient(setup, rng):
    grid, quad = setup
    for _ in range(20):
        rho = rng.standard_normal(grid.n_points)
        G = rng.standard_normal((grid.n_points, quad.n))
        P, A = density_grad(grid, quad, rho)
        lhs = quad.domain_measure * inner(grid, rho, flux_div(grid, quad, G))
        rhs = -inner_w(grid, quad, P @ A.T, G)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_density_grad_structure(setup, rng):
    grid, quad = setup
    rho = rng.standard_normal(grid.n_points)
    P, A = density_grad(grid, quad, rho)
    assert P.shape == (grid.n_points, grid.dim)
    dense = np.zeros((grid.n_points, quad.n))
    for j in range(grid.dim):
        dense += np.outer(dense_diff_matrix(grid, j, +1) @ rho, quad.q(j))
    assert np.allclose(P @ A.T, dense, atol=1e-13)
    const = np.full(grid.n_points, 2.5)
    Pc, _ = density_grad(grid, quad, const)
    assert np.max(np.abs(Pc)) == 0.0


def test_density_grad_rank_one_1d():
    grid, quad = small_1d()
    rho = np.sin(2 * np.pi * grid.rho_coords[:, 0])
    P, A = density_grad(grid, quad, rho)
    assert np.linalg.matrix_rank(P @ A.T, tol=1e-10) == 1


def test_advect_projected_matches_dense(setup, rng):
    grid, quad = setup
    r = 3
    X, _ = np.linalg.qr(rng.standard_normal((grid.n_points, r)))
    V, _ = np.linalg.qr(rng.standard_normal((quad.n, r)))
    S = rng.standard_normal((r, r))
    P, A = advect_projected(grid, quad, X, S, V)
    minv = 1.0 / quad.m
    dense = project_out_mean(
        quad, advect(grid, quad, (X @ S @ V.T) * minv[None, :])
    ) * quad.m[None, :]
    assert np.allclose(P @ A.T, dense, atol=1e-12 * max(1.0, np.abs(dense).max()))
    # the projection annihilates the density mode: A^T M^{-1} w = A^T m = 0
    assert np.max(np.abs(A.T @ quad.m)) <= 1e-12 * np.abs(A).max()


def test_advect_projected_constant_columns():
    grid, quad = small_2d()
    X = np.ones((grid.n_points, 1)) / np.sqrt(grid.n_points)
    V = np.zeros((quad.n, 1))
    V[0, 0] = 1.0
    P, A = advect_projected(grid, quad, X, np.array([[1.0]]), V)
    assert np.max(np.abs(P @ A.T)) <= 1e-13


def test_advect_adjoint_pairing(setup, rng):
    grid, quad = setup
    for _ in range(20):
        F = rng.standard_normal((grid.n_points, quad.n))
        G = rng.standard_normal((grid.n_points, quad.n))
        lhs = inner_w(grid, quad, advect(grid, quad, F), G)
        rhs = inner_w(grid, quad, F, advect_adjoint(grid, quad, G))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)
    assert np.max(np.abs(advect_adjoint(grid, quad, np.zeros((grid.n_points, quad.n))))) == 0.0


def test_adjoint_advection_bound(setup, rng):
    # || A*(G) ||_w^2 <= d * sum_j || D+(G) |Q^j| ||_w^2
    grid, quad = setup
    d = grid.dim
    for _ in range(20):
        G = rng.standard_normal((grid.n_points, quad.n))
        lhs = norm_w(grid, quad, advect_adjoint(grid, quad, G)) ** 2
        rhs = 0.0
        for j in range(d):
            rhs += norm_w(grid, quad, diff(grid, j, +1, G) * quad.q_abs(j)[None, :]) ** 2
        assert lhs <= d * rhs * (1 + 1e-12)


def test_advection_energy_identity(setup, rng):
    grid, quad = setup
    for _ in range(20):
        Gn = rng.standard_normal((grid.n_points, quad.n))
        Gn1 = rng.standard_normal((grid.n_points, quad.n))
        lhs = inner_w(grid, quad, advect(grid, quad, Gn), Gn1)
        rhs = -inner_w(grid, quad, advect_adjoint(grid, quad, Gn1), Gn1 - Gn)
        for j in range(grid.dim):
            DG = diff(grid, j, +1, Gn1)
            rhs += 0.5 * grid.spacing[j] * inner_w(
                grid, quad, DG * quad.q_abs(j)[None, :], DG
            )
        assert abs(lhs - rhs) <= 1e-11 * max(abs(lhs), 1.0)


def test_operator_linearity(setup, rng):
    grid, quad = setup
    F = rng.standard_normal((grid.n_points, quad.n))
    G = rng.standard_normal((grid.n_points, quad.n))
    a, b = 0.7, -1.3
    for op in (advect, flux_div, advect_adjoint):
        lhs = op(grid, quad, a * F + b * G)
        rhs = a * op(grid, quad, F) + b * op(grid, quad, G)
        assert np.allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(rhs).max()))


def test_constraint_transport(setup, rng):
    grid, quad = setup
    G = project_out_mean(quad, rng.standard_normal((grid.n_points, quad.n)))
    assert np.max(np.abs(G @ quad.w)) <= 1e-12 * np.abs(G).max()
    moved = project_out_mean(quad, advect(grid, quad, G))
    assert np.max(np.abs(moved @ quad.w)) <= 1e-11 * max(np.abs(moved).max(), 1.0)
    P, A = density_grad(grid, quad, rng.standard_normal(grid.n_points))
    assert np.max(np.abs((P @ A.T) @ quad.w)) <= 1e-11 * max(np.abs(P).max(), 1.0)


def test_inner_products(setup, rng):
    grid, quad = setup
    ones = np.ones((grid.n_points, quad.n))
    expected = np.sqrt(quad.domain_measure * grid.cell_volume * grid.n_points)
    assert abs(norm_w(grid, quad, ones) - expected) <= 1e-12 * expected
    F1 = rng.standard_normal((grid.n_points, quad.n))
    F2 = rng.standard_normal((grid.n_points, quad.n))
    assert inner_w(grid, quad, F1, F2) == pytest.approx(inner_w(grid, quad, F2, F1))
    assert inner_w(grid, quad, F1, F2) ** 2 <= (
        norm_w(grid, quad, F1) ** 2 * norm_w(grid, quad, F2) ** 2 * (1 + 1e-12)
    )
    assert np.sqrt(inner(grid, F1[:, 0], F1[:, 0])) >= 0.0


def test_factored_flux_div(setup, rng):
    grid, quad = setup
    P = rng.standard_normal((grid.n_points, 3))
    A = rng.standard_normal((quad.n, 3))
    assert np.allclose(
        flux_div_factored(grid, quad, P, A),
        flux_div(grid, quad, P @ A.T),
        atol=1e-12,
    )


def test_material_validation():
    grid, _ = small_1d()
    with pytest.raises(ValueError):
        sample_material(grid, lambda c: np.full(c.shape[0], 0.5),
                        lambda c: np.zeros(c.shape[0]), sigma_s_floor=1.0)
    with pytest.raises(ValueError):
        sample_material(grid, lambda c: np.ones(c.shape[0]),
                        lambda c: np.full(c.shape[0], -0.1), sigma_s_floor=0.0)
    mat = sample_material(grid, lambda c: np.ones(c.shape[0]),
                          lambda c: np.zeros(c.shape[0]), sigma_s_floor=1.0)
    assert isinstance(mat, MaterialField)


def test_shape_errors(setup):
    grid, quad = setup
    with pytest.raises(ValueError):
        advect(grid, quad, np.zeros((grid.n_points, quad.n + 1)))
    with pytest.raises(ValueError):
        inner_w(grid, quad, np.zeros((2, 2)), np.zeros((2, 3)))
