"""IMEX / IMEX-S steppers against dense block oracles; Schur operator checks."""

import numpy as np
import pytest

from lrtrans.angular import gauss_legendre_1d
from lrtrans.fullrank import (
    DivergenceError,
    SolverConfig,
    build_schur,
    imex_s_step,
    imex_step,
)
from lrtrans.grid import build_grid, diff
from lrtrans.ops import (
    advect,
    flux_div,
    norm_w,
    project_out_mean,
    sample_material,
)
from conftest import dense_diff_matrix


def make_setup(eps=0.5, dt=0.01, nx=8, n_ord=4, varying=True):
    grid = build_grid(1, (0.0, 1.0), nx)
    quad = gauss_legendre_1d(n_ord)
    if varying:
        sig_s = lambda c: 1.0 + 0.3 * np.sin(2 * np.pi * c[:, 0])
        sig_a = lambda c: 0.2 + 0.1 * np.cos(2 * np.pi * c[:, 0])
        floor = 0.7
    else:
        sig_s = lambda c: np.ones(c.shape[0])
        sig_a = lambda c: np.zeros(c.shape[0])
        floor = 1.0
    material = sample_material(grid, sig_s, sig_a, floor)
    config = SolverConfig(epsilon=eps, dt=dt, scheme="IMEX")
    return grid, quad, material, config


def random_state(grid, quad, rng):
    rho = rng.standard_normal(grid.n_points)
    G = project_out_mean(quad, rng.standard_normal((grid.n_points, quad.n)))
    return rho, G


def dense_blocks(grid, quad, material, config):
    """Assemble the coupled block system matrices for vec(G) row-major."""
    n, no = grid.n_points, quad.n
    eps2 = config.epsilon**2
    a22 = 1.0 / config.dt + material.sigma_s_g / eps2 + material.sigma_a_g
    Hmat = np.zeros((n, n * no))
    for i in range(n):
        for k in range(no):
            E = np.zeros((n, no))
            E[i, k] = 1.0
            Hmat[:, i * no + k] = flux_div(grid, quad, E)
    Jmat = np.zeros((n * no, n))
    dp = dense_diff_matrix(grid, 0, +1)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        Jmat[:, i] = np.outer(dp @ e, quad.q(0)).reshape(-1)
    A11 = np.diag(1.0 / config.dt + material.sigma_a_rho)
    A22 = np.diag(np.repeat(a22, no))
    return A11, Hmat, Jmat / eps2, A22


def micro_rhs(grid, quad, config, G):
    return G / config.dt - project_out_mean(
        quad, advect(grid, quad, G)
    ) / config.epsilon


def test_equilibrium_fixed_point():
    grid, quad, material, config = make_setup(varying=False)
    rho = np.full(grid.n_points, 2.0)
    G = np.zeros((grid.n_points, quad.n))
    r1, G1 = imex_step(grid, quad, material, config, rho, G)
    assert np.allclose(r1, rho, atol=1e-14)
    assert np.max(np.abs(G1)) == 0.0
    schur = build_schur(grid, quad, material, config)
    r2, G2 = imex_s_step(grid, quad, material, config, schur, rho, G)
    assert np.allclose(r2, rho, atol=1e-12)
    assert np.max(np.abs(G2)) <= 1e-14


def test_imex_matches_dense_oracle(rng):
    grid, quad, material, config = make_setup()
    rho, G = random_state(grid, quad, rng)
    A11, Hmat, Jmat, A22 = dense_blocks(grid, quad, material, config)
    b2 = micro_rhs(grid, quad, config, G).reshape(-1) - Jmat @ rho
    G_oracle = np.linalg.solve(A22, b2).reshape(G.shape)
    rho_oracle = np.linalg.solve(
        A11, rho / config.dt - flux_div(grid, quad, G_oracle)
    )
    r1, G1 = imex_step(grid, quad, material, config, rho, G)
    assert np.max(np.abs(G1 - G_oracle)) <= 1e-12
    assert np.max(np.abs(r1 - rho_oracle)) <= 1e-12


def test_imex_s_matches_dense_block_oracle(rng):
    grid, quad, material, config = make_setup()
    rho, G = random_state(grid, quad, rng)
    A11, Hmat, Jmat, A22 = dense_blocks(grid, quad, material, config)
    n, no = grid.n_points, quad.n
    Afull = np.block([[A11, Hmat], [Jmat, A22]])
    b = np.concatenate([rho / config.dt, micro_rhs(grid, quad, config, G).reshape(-1)])
    sol = np.linalg.solve(Afull, b)
    schur = build_schur(grid, quad, material, config)
    r1, G1 = imex_s_step(grid, quad, material, config, schur, rho, G)
    assert np.max(np.abs(r1 - sol[:n])) <= 1e-10
    assert np.max(np.abs(G1 - sol[n:].reshape(n, no))) <= 1e-10


def test_zero_density_preserved(rng):
    grid, quad, material, config = make_setup()
    rho, G = random_state(grid, quad, rng)
    schur = build_schur(grid, quad, material, config)
    for stepper in (
        lambda r, g: imex_step(grid, quad, material, config, r, g),
        lambda r, g: imex_s_step(grid, quad, material, config, schur, r, g),
    ):
        r, g = rho.copy(), G.copy()
        for _ in range(5):
            r, g = stepper(r, g)
            assert np.max(np.abs(g @ quad.w)) <= 1e-12 * max(np.abs(g).max(), 1.0)


def test_mass_conserved_without_absorption(rng):
    grid, quad, material, config = make_setup(varying=False)
    rho, G = random_state(grid, quad, rng)
    total0 = np.sum(rho)
    r, g = rho, G
    for _ in range(20):
        r, g = imex_step(grid, quad, material, config, r, g)
    assert abs(np.sum(r) - total0) <= 1e-11 * max(abs(total0), 1.0)


def test_energy_decay_under_explicit_bound(rng):
    from lrtrans.diagnostics import dt_explicit

    grid, quad, material, _ = make_setup(varying=False, nx=32, n_ord=16)
    dt = dt_explicit(grid, material, 1.0)
    config = SolverConfig(epsilon=1.0, dt=dt, scheme="IMEX")
    rho = np.exp(-10 * (grid.rho_coords[:, 0] - 0.5) ** 2)
    G = np.zeros((grid.n_points, quad.n))
    vol = grid.cell_volume

    def energy(r, g):
        return quad.domain_measure * vol * r @ r + norm_w(grid, quad, g) ** 2

    e = energy(rho, G)
    for _ in range(40):
        rho, G = imex_step(grid, quad, material, config, rho, G)
        e_new = energy(rho, G)
        assert e_new <= e * (1 + 1e-12)
        e = e_new


def test_schur_symmetry_and_diagonal():
    grid, quad, material, config = make_setup()
    schur = build_schur(grid, quad, material, config)
    T = schur.matrix.toarray()
    assert np.allclose(T, T.T, atol=1e-12 * np.abs(T).max())
    assert np.all(np.diag(T) > 0)


def test_schur_assembled_equals_application():
    grid, quad, material, config = make_setup()
    schur = build_schur(grid, quad, material, config)
    n = grid.n_points
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        assert np.allclose(schur.apply(e), schur.matrix.toarray()[:, i], atol=1e-14)


def test_schur_large_epsilon_limit(rng):
    grid, quad, material, _ = make_setup(eps=1e6, dt=0.02)
    config = SolverConfig(epsilon=1e6, dt=0.02, scheme="IMEX-S")
    schur = build_schur(grid, quad, material, config)
    x = rng.standard_normal(grid.n_points)
    expected = (1.0 / config.dt + material.sigma_a_rho) * x
    assert np.max(np.abs(schur.apply(x) - expected)) <= 1e-8 * np.max(np.abs(expected))


def test_schur_diffusion_limit():
    # at eps -> 0 the operator approaches the backward-Euler diffusion
    # operator with conductivity <mu^2>/sigma_s
    eps = 1e-8
    grid, quad, material, _ = make_setup(eps=eps, dt=0.05, nx=16, n_ord=16, varying=False)
    config = SolverConfig(epsilon=eps, dt=0.05, scheme="IMEX-S")
    schur = build_schur(grid, quad, material, config)
    rho = np.sin(2 * np.pi * grid.rho_coords[:, 0])
    mu2 = float(quad.w @ quad.q(0) ** 2) / quad.domain_measure
    limit = rho / config.dt - diff(
        grid, 0, -1, (mu2 / material.sigma_s_g) * diff(grid, 0, +1, rho)
    )
    bound = 10 * eps**2 / config.dt * np.max(np.abs(rho)) / config.dt
    assert np.max(np.abs(schur.apply(rho) - limit)) <= max(bound, 1e-8)


def test_divergence_detection():
    grid, quad, material, config = make_setup()
    rho = np.ones(grid.n_points)
    G = np.zeros((grid.n_points, quad.n))
    G[0, 0] = np.inf
    with pytest.raises(DivergenceError):
        imex_step(grid, quad, material, config, rho, G)


def test_macroscopic_source_enters_at_new_time():
    grid, quad, _, config = make_setup(varying=False)
    seen = []
    material = sample_material(
        grid,
        lambda c: np.ones(c.shape[0]),
        lambda c: np.zeros(c.shape[0]),
        1.0,
        phi=lambda t: seen.append(t) or np.zeros(grid.n_points),
    )
    rho = np.ones(grid.n_points)
    G = np.zeros((grid.n_points, quad.n))
    imex_step(grid, quad, material, config, rho, G, t_next=0.37)
    assert seen == [0.37]
