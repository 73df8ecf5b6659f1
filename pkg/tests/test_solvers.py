import numpy as np
import pytest

from conftest import chirp_problem, random_column, random_problem
from jcas_unfold.errors import ConfigurationError, DimensionError, SizeError
from jcas_unfold.metrics import beam_mse, beam_pattern, modulus_error
from jcas_unfold.problem import ColumnBatch, JcasProblem, decompose_columns, lipschitz, make_column_problem, objective
from jcas_unfold.signals import collapse_complex, expand_matrix, expand_vector
from jcas_unfold.solvers import (
    PgdConfig,
    PhaseGridConfig,
    grid_gap_bound,
    pgd_batch,
    pgd_flops,
    pgd_solve,
    phase_grid_solve,
    solve_frame,
)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        PgdConfig(step_size=0.0)
    with pytest.raises(ConfigurationError):
        PgdConfig(max_iters=0)
    with pytest.raises(ConfigurationError):
        PgdConfig(tol=-1.0)
    with pytest.raises(ConfigurationError):
        PhaseGridConfig(grid_points=1)


@pytest.mark.parametrize("seed", range(5))
def test_pgd_rho0_reaches_x0(seed):
    rng = np.random.default_rng(seed)
    q = random_column(rng, rho=0.0)
    x_init = expand_vector(np.exp(1j * rng.uniform(0, 2 * np.pi, q.n)))
    x, trace = pgd_solve(q, PgdConfig(), x_init)
    assert np.max(np.abs(x - q.x0bar)) < 1e-12
    assert trace[-1] < 1e-20
    assert len(trace) <= 30


def test_pgd_zero_init_is_projected_first():
    q = random_column(np.random.default_rng(1), rho=0.5)
    _, trace = pgd_solve(q, PgdConfig(max_iters=1))
    start = np.concatenate([np.ones(q.n), np.zeros(q.n)])
    assert trace[0] == pytest.approx(objective(q, start))
    with pytest.raises(DimensionError):
        pgd_solve(q, PgdConfig(), np.zeros(3))


def test_pgd_trace_nonincreasing_and_feasible():
    rng = np.random.default_rng(2)
    for rho in (0.2, 0.8, 1.0):
        q = random_column(rng, rho=rho)
        x, trace = pgd_solve(q, PgdConfig(max_iters=300, tol=0.0, patience=300))
        assert np.all(np.diff(trace) <= 0)
        assert np.allclose(np.abs(collapse_complex(x)), 1.0, atol=1e-15)
        assert objective(q, x) == pytest.approx(trace[-1], rel=1e-12)


def test_pgd_early_stopping():
    q = random_column(np.random.default_rng(3), rho=0.8)
    _, t1 = pgd_solve(q, PgdConfig(max_iters=500, tol=1e-4))
    _, t2 = pgd_solve(q, PgdConfig(max_iters=500, tol=0.0, patience=500))
    assert len(t1) < len(t2) == 501
    # stopped at the first iterate whose 20-step improvement fell below tol
    assert t1[-21] - t1[-1] < 1e-4 <= t1[-22] - t1[-2]


def test_pgd_explicit_step_matches_default_scale():
    q = random_column(np.random.default_rng(4), rho=0.5)
    a, _ = pgd_solve(q, PgdConfig(step_size=0.5 / lipschitz(q)))
    b, _ = pgd_solve(q, PgdConfig(step_scale=0.5))
    assert np.array_equal(a, b)


def test_pgd_unprojected_variant_is_feasible():
    q = random_column(np.random.default_rng(5), rho=0.6)
    x, trace = pgd_solve(q, PgdConfig(project_every_iter=False, max_iters=100))
    assert np.allclose(np.abs(collapse_complex(x)), 1.0)
    assert np.all(np.diff(trace) <= 0)
    with pytest.raises(ConfigurationError):
        pgd_batch(ColumnBatch.from_problems([q]), PgdConfig(project_every_iter=False))


def test_multistart_never_worse_and_deterministic():
    rng = np.random.default_rng(6)
    b = ColumnBatch.from_frame(random_problem(rng, m=8, rho=1.0))
    _, f1 = pgd_batch(b, PgdConfig(n_starts=1))
    x8, f8 = pgd_batch(b, PgdConfig(n_starts=8, seed=3))
    x8b, _ = pgd_batch(b, PgdConfig(n_starts=8, seed=3))
    assert np.all(f8 <= f1 + 1e-12)
    assert np.array_equal(x8, x8b)


def test_phase_grid_rho0_on_grid():
    rng = np.random.default_rng(7)
    q = random_column(rng, k=1, n=2, rho=0.0)
    idx = rng.integers(0, 720, 2)
    phi = 2 * np.pi * idx / 720
    x0 = np.concatenate([np.cos(phi), np.sin(phi)])
    q = make_column_problem(q.hbar, q.sbar, x0, 0.0, q.p_t)
    x, f = phase_grid_solve(q)
    assert f < 1e-24
    assert np.allclose(x, x0, atol=1e-12)


def test_phase_grid_scalar_alignment():
    p_t = 1.0
    s = np.exp(2j * np.pi * 37 / 720)
    q = make_column_problem(expand_matrix(np.array([[1.0 + 0j]])), expand_vector(np.array([s])), [1.0, 0.0], 1.0, p_t)
    x, f = phase_grid_solve(q, PhaseGridConfig(grid_points=720, max_antennas=1))
    assert np.angle(collapse_complex(x)[0]) == pytest.approx(np.angle(s), abs=1e-12)
    assert f < 1e-24


def test_phase_grid_refinement_never_worse():
    rng = np.random.default_rng(8)
    for rho in (0.3, 1.0):
        q = random_column(rng, k=1, n=2, rho=rho)
        _, coarse = phase_grid_solve(q, PhaseGridConfig(grid_points=180))
        _, fine = phase_grid_solve(q, PhaseGridConfig(grid_points=720))
        assert fine <= coarse + 1e-12


def test_phase_grid_size_cap():
    q = random_column(np.random.default_rng(9), k=2, n=4)
    with pytest.raises(SizeError):
        phase_grid_solve(q)


def test_pgd_near_oracle_rho1():
    rng = np.random.default_rng(10)
    q = random_column(rng, k=1, n=2, rho=1.0)
    x, _ = pgd_solve(q, PgdConfig())
    _, f_star = phase_grid_solve(q)
    assert objective(q, x) <= f_star + max(1e-3, grid_gap_bound(q, 720))


def test_grid_gap_bound_holds_against_fine_grid():
    rng = np.random.default_rng(11)
    for _ in range(5):
        q = random_column(rng, k=1, n=2, rho=float(rng.uniform()))
        _, coarse = phase_grid_solve(q, PhaseGridConfig(grid_points=36))
        _, fine = phase_grid_solve(q, PhaseGridConfig(grid_points=720))
        assert coarse - fine <= grid_gap_bound(q, 36)


def test_solve_frame_rho0():
    p = chirp_problem(np.random.default_rng(12), rho=0.0)
    w, rep = solve_frame(p, "pgd")
    assert np.max(np.abs(w.entries - p.x0)) < 1e-9
    assert rep.beam_mse < 1e-24
    assert 0 < rep.wall_time < np.inf
    assert rep.flops == p.m * pgd_flops(p.n, 500)


def test_solve_frame_zero_forcing_oracle():
    # square 2x2 channel with a constant-modulus exact solution
    rng = np.random.default_rng(13)
    p_t, n = 1.0, 2
    x_true = np.sqrt(p_t / n) * np.exp(1j * rng.uniform(0, 2 * np.pi, (n, 1)))
    h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    p = JcasProblem(h, h @ x_true, x_true.conj(), 1.0, p_t)
    w, rep = solve_frame(p, "pgd", PgdConfig(n_starts=8))
    w_grid, rep_grid = solve_frame(p, "phase-grid")
    assert rep_grid.mui_power < 1e-3
    assert rep.mui_power <= rep_grid.mui_power + grid_gap_bound(decompose_columns(p)[0], 720)
    assert modulus_error(w.entries, p_t) < 1e-12 and modulus_error(w_grid.entries, p_t) < 1e-12


def test_solve_frame_unknown_solver():
    with pytest.raises(ConfigurationError):
        solve_frame(random_problem(np.random.default_rng(14)), "bnb")


def test_pgd_beam_mse_grows_with_rho():
    rng = np.random.default_rng(15)
    p = chirp_problem(rng, rho=0.2)
    ref = beam_pattern(p.x0)
    mses = []
    for rho in (0.2, 0.8):
        w, _ = solve_frame(JcasProblem(p.h, p.s, p.x0, rho, p.p_t))
        mses.append(beam_mse(beam_pattern(w), ref))
    assert mses[0] < mses[1]
