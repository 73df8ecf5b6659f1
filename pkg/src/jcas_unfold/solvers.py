"""Classical baselines: projected gradient descent and an exhaustive phase-grid oracle."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DimensionError, SizeError
from .metrics import EvalReport, Waveform, evaluate_waveform
from .problem import (
    ColumnBatch,
    JcasProblem,
    RealColumnProblem,
    assemble_waveform,
    decompose_columns,
    gradient,
    lipschitz,
    objective,
    project_cm,
)
from .signals import noise_power


@dataclass(frozen=True)
class PgdConfig:
    """``step_size=None`` means ``step_scale / Lipschitz`` per channel."""

    step_size: float | None = None
    step_scale: float = 1.0
    max_iters: int = 500
    tol: float = 1e-8
    patience: int = 20
    n_starts: int = 1
    project_every_iter: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError("step_size must be positive")
        if not self.step_scale > 0:
            raise ConfigurationError("step_scale must be positive")
        if self.max_iters < 1 or self.tol < 0 or self.patience < 1 or self.n_starts < 1:
            raise ConfigurationError("need max_iters >= 1, tol >= 0, patience >= 1, n_starts >= 1")


@dataclass(frozen=True)
class PhaseGridConfig:
    grid_points: int = 720
    max_antennas: int = 3

    def __post_init__(self):
        if self.grid_points < 2:
            raise ConfigurationError("grid_points must be at least 2")


def _step(p, cfg: PgdConfig) -> float:
    return cfg.step_size if cfg.step_size is not None else cfg.step_scale / lipschitz(p)


def _unprojected_descent(p: RealColumnProblem, delta, cfg, x):
    trace = [objective(p, project_cm(x))]
    best = project_cm(x)
    for _ in range(cfg.max_iters):
        x = x - delta * gradient(p, x)
        cand = project_cm(x)
        f = objective(p, cand)
        if f < trace[-1]:
            best = cand
        trace.append(min(f, trace[-1]))
        if len(trace) > cfg.patience and trace[-1 - cfg.patience] - trace[-1] < cfg.tol:
            break
    return best, np.array(trace)


def pgd_solve(p: RealColumnProblem, cfg: PgdConfig | None = None, x_init=None):
    """Projected gradient descent on one column problem.

    Returns the best feasible iterate and the best-so-far objective trace
    (``trace[0]`` is the projected starting point).
    """
    cfg = cfg or PgdConfig()
    x = np.zeros(2 * p.n) if x_init is None else np.asarray(x_init, dtype=float)
    if x.shape != (2 * p.n,):
        raise DimensionError(f"x_init must have length {2 * p.n}")
    delta = _step(p, cfg)
    if not cfg.project_every_iter:
        return _unprojected_descent(p, delta, cfg, x)
    x_best, _, iters, trace = kernels.pgd(
        p.hbar_t_hbar[None].copy(),
        p.hbar_t_sbar[None].copy(),
        p.x0bar[None].copy(),
        np.array([p.sbar_sq]),
        p.rho,
        p.amp,
        delta,
        cfg.max_iters,
        cfg.tol,
        cfg.patience,
        x[None],
    )
    return x_best[0], trace[0, : iters[0] + 1]


def _starts(batch: ColumnBatch, cfg: PgdConfig) -> np.ndarray:
    """Start 0 is the benchmark column; the rest are seeded random phases."""
    rng = np.random.default_rng(cfg.seed)
    n = batch.n
    out = np.empty((batch.size, cfg.n_starts, 2 * n))
    out[:, 0] = batch.x0bar
    if cfg.n_starts > 1:
        phi = rng.uniform(0.0, 2 * np.pi, size=(batch.size, cfg.n_starts - 1, n))
        out[:, 1:, :n] = np.cos(phi)
        out[:, 1:, n:] = np.sin(phi)
    return out.reshape(-1, 2 * n)


def pgd_batch(batch: ColumnBatch, cfg: PgdConfig | None = None):
    """Multi-start PGD on every column of a batch. Returns (xbar (B, 2N), objective (B,))."""
    cfg = cfg or PgdConfig()
    delta = _step(batch, cfg)
    starts = _starts(batch, cfg)
    if not cfg.project_every_iter:
        raise ConfigurationError("batched PGD always projects; use pgd_solve for the unprojected variant")
    rep = batch.repeat(cfg.n_starts) if cfg.n_starts > 1 else batch
    x, f, _, _ = kernels.pgd(
        rep.gram, rep.hts, rep.x0bar, rep.sbar_sq, batch.rho, batch.amp, delta,
        cfg.max_iters, cfg.tol, cfg.patience, starts,
    )
    f = f.reshape(batch.size, cfg.n_starts)
    pick = np.argmin(f, axis=1)
    x = x.reshape(batch.size, cfg.n_starts, -1)[np.arange(batch.size), pick]
    return x, f[np.arange(batch.size), pick]


def pgd_flops(n: int, iters: int) -> int:
    """Arithmetic count of one PGD column solve (matvec, gradient, update, projection, objective)."""
    d = 2 * n
    per_iter = d * (2 * d - 1) + 6 * d + 2 * d + 6 * n + 3 * (2 * d) + 8
    return iters * per_iter


def phase_grid_solve(p: RealColumnProblem, cfg: PhaseGridConfig | None = None):
    """Global minimiser over a uniform per-entry phase grid (cost grid_points**N)."""
    cfg = cfg or PhaseGridConfig()
    if p.n > cfg.max_antennas:
        raise SizeError(
            f"phase-grid search over N={p.n} antennas exceeds the cap of {cfg.max_antennas}"
        )
    idx, _ = kernels.phase_grid(
        np.ascontiguousarray(p.hbar_t_hbar), np.ascontiguousarray(p.hbar_t_sbar),
        np.ascontiguousarray(p.x0bar), p.sbar_sq, p.rho, p.amp, cfg.grid_points,
    )
    phi = 2.0 * np.pi * np.asarray(idx) / cfg.grid_points
    xbar = np.concatenate([np.cos(phi), np.sin(phi)])
    return xbar, objective(p, xbar)


def grid_gap_bound(p: RealColumnProblem, grid_points: int) -> float:
    """Upper bound on how far the grid optimum can sit above the continuous optimum.

    At a constrained stationary point the gradient is radial, so moving each
    phase by at most pi/grid_points costs at most 0.5 * (L + sup|grad|) * N * h^2.
    """
    a2 = p.amp**2
    n = p.n
    gnorm = np.linalg.norm(p.hbar_t_hbar, 2)
    sup_grad = (
        2 * p.rho * a2 * gnorm * np.sqrt(n)
        + 2 * p.rho * p.amp * np.linalg.norm(p.hbar_t_sbar)
        + 2 * (1 - p.rho) * a2 * 2 * np.sqrt(n)
    )
    h = np.pi / grid_points
    return 0.5 * (lipschitz(p) + sup_grad) * n * h * h


SOLVERS = ("pgd", "phase-grid")


def solve_frame(
    p: JcasProblem,
    solver: str = "pgd",
    cfg=None,
    snr_db: float = 10.0,
    grid=None,
    delta: float = 0.5,
) -> tuple[Waveform, EvalReport]:
    """Design all M columns independently, assemble the waveform and evaluate it."""
    t0 = time.perf_counter()
    if solver == "pgd":
        cfg = cfg or PgdConfig()
        cols, _ = pgd_batch(ColumnBatch.from_frame(p), cfg)
        flops = p.m * cfg.n_starts * pgd_flops(p.n, cfg.max_iters)
    elif solver == "phase-grid":
        cfg = cfg or PhaseGridConfig()
        cols = np.array([phase_grid_solve(q, cfg)[0] for q in decompose_columns(p)])
        flops = 0
    else:
        raise ConfigurationError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    x = assemble_waveform(cols, p.p_t, p.n)
    wall = time.perf_counter() - t0
    report = evaluate_waveform(p.h, x, p.s, p.x0, noise_power(p.p_t, snr_db), grid, delta)
    report.wall_time = wall
    report.flops = int(flops)
    return x, report
