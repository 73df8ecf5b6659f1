"""Frame-level and per-column formulations of the weighted waveform design problem.

The frame problem minimises

    rho * ||H X - S||_F^2 + (1 - rho) * ||X - X0||_F^2,   |x_ij| = sqrt(P_T / N)

It separates over the M columns. Each column is solved in normalised,
real-stacked coordinates where every complex entry of ``xbar`` has unit modulus
and the physical column is ``sqrt(P_T/N) * collapse_complex(xbar)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, DimensionError, ParameterError
from .metrics import Waveform
from .signals import collapse_complex, expand_matrix, expand_vector

ZERO_MODULUS = 1e-12


@dataclass(frozen=True)
class JcasProblem:
    h: np.ndarray
    s: np.ndarray
    x0: np.ndarray
    rho: float
    p_t: float

    def __post_init__(self):
        h, s, x0 = (np.asarray(a, dtype=complex) for a in (self.h, self.s, self.x0))
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "x0", x0)
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must lie in [0, 1], got {self.rho!r}")
        if not self.p_t > 0:
            raise ParameterError(f"p_t must be positive, got {self.p_t!r}")
        if h.ndim != 2 or s.ndim != 2 or x0.ndim != 2:
            raise DimensionError("H, S and X0 must be matrices")
        k, n = h.shape
        if s.shape[0] != k or x0.shape != (n, s.shape[1]):
            raise DimensionError(f"inconsistent shapes: H {h.shape}, S {s.shape}, X0 {x0.shape}")

    @property
    def k(self):
        return self.h.shape[0]

    @property
    def n(self):
        return self.h.shape[1]

    @property
    def m(self):
        return self.s.shape[1]

    @property
    def amp(self):
        return np.sqrt(self.p_t / self.n)


@dataclass(frozen=True, eq=False)
class RealColumnProblem:
    hbar: np.ndarray
    sbar: np.ndarray
    x0bar: np.ndarray
    rho: float
    p_t: float
    n: int
    hbar_t_sbar: np.ndarray
    hbar_t_hbar: np.ndarray

    @property
    def amp(self):
        return np.sqrt(self.p_t / self.n)

    @property
    def sbar_sq(self):
        return float(self.sbar @ self.sbar)


def make_column_problem(hbar, sbar, x0bar, rho, p_t, gram=None, hts=None) -> RealColumnProblem:
    """Build a column problem; ``x0bar`` must already be unit-modulus normalised."""
    hbar = np.asarray(hbar, dtype=float)
    sbar = np.asarray(sbar, dtype=float)
    x0bar = np.asarray(x0bar, dtype=float)
    if hbar.ndim != 2 or hbar.shape[0] % 2 or hbar.shape[1] % 2:
        raise DimensionError(f"hbar must be a 2K x 2N block matrix, got {hbar.shape}")
    if sbar.shape != (hbar.shape[0],) or x0bar.shape != (hbar.shape[1],):
        raise DimensionError("sbar / x0bar lengths do not match hbar")
    if not 0.0 <= rho <= 1.0:
        raise ParameterError(f"rho must lie in [0, 1], got {rho!r}")
    if np.max(np.abs(np.abs(collapse_complex(x0bar)) - 1.0)) > 1e-9:
        raise ConstraintError("x0bar must have unit-modulus complex entries")
    if gram is None:
        gram = hbar.T @ hbar
    if hts is None:
        hts = hbar.T @ sbar
    return RealColumnProblem(hbar, sbar, x0bar, float(rho), float(p_t), hbar.shape[1] // 2, hts, gram)


def decompose_columns(p: JcasProblem) -> list[RealColumnProblem]:
    hbar = expand_matrix(p.h)
    gram = hbar.T @ hbar
    amp = p.amp
    out = []
    for j in range(p.m):
        sbar = expand_vector(p.s[:, j])
        x0bar = expand_vector(p.x0[:, j]) / amp
        out.append(make_column_problem(hbar, sbar, x0bar, p.rho, p.p_t, gram, hbar.T @ sbar))
    return out


@dataclass
class ColumnBatch:
    """Many column problems sharing one weight ``rho`` and power budget, stacked for the kernels."""

    gram: np.ndarray  # (B, 2N, 2N)
    hts: np.ndarray  # (B, 2N)
    x0bar: np.ndarray  # (B, 2N)
    sbar_sq: np.ndarray  # (B,)
    rho: float
    p_t: float
    n: int

    @property
    def size(self):
        return self.hts.shape[0]

    @property
    def amp(self):
        return np.sqrt(self.p_t / self.n)

    @classmethod
    def from_problems(cls, problems):
        problems = list(problems)
        if not problems:
            raise DimensionError("empty batch")
        first = problems[0]
        for q in problems:
            if q.n != first.n or q.rho != first.rho or q.p_t != first.p_t:
                raise DimensionError("column problems in a batch must share N, rho and P_T")
        return cls(
            gram=np.ascontiguousarray([q.hbar_t_hbar for q in problems]),
            hts=np.ascontiguousarray([q.hbar_t_sbar for q in problems]),
            x0bar=np.ascontiguousarray([q.x0bar for q in problems]),
            sbar_sq=np.array([q.sbar_sq for q in problems]),
            rho=first.rho,
            p_t=first.p_t,
            n=first.n,
        )

    @classmethod
    def from_frame(cls, p: JcasProblem):
        hbar = expand_matrix(p.h)
        gram = hbar.T @ hbar
        sbar = expand_vector(p.s.T)  # (M, 2K)
        return cls(
            gram=np.ascontiguousarray(np.broadcast_to(gram, (p.m,) + gram.shape)),
            hts=np.ascontiguousarray(sbar @ hbar),
            x0bar=np.ascontiguousarray(expand_vector(p.x0.T) / p.amp),
            sbar_sq=np.einsum("ij,ij->i", sbar, sbar),
            rho=float(p.rho),
            p_t=float(p.p_t),
            n=p.n,
        )

    @classmethod
    def from_samples(cls, h, s, x0, rho, p_t):
        """Independent column samples: ``h`` (B, K, N), ``s`` (B, K), ``x0`` (B, N) unit-modulus."""
        h, s, x0 = np.asarray(h), np.asarray(s), np.asarray(x0)
        if h.ndim != 3 or s.shape != h.shape[:2] or x0.shape != (h.shape[0], h.shape[2]):
            raise DimensionError(f"inconsistent sample shapes: H {h.shape}, s {s.shape}, x0 {x0.shape}")
        hbar = np.concatenate(
            [np.concatenate([h.real, -h.imag], axis=2), np.concatenate([h.imag, h.real], axis=2)], axis=1
        )
        sbar = expand_vector(s)
        return cls(
            gram=np.ascontiguousarray(np.einsum("bki,bkj->bij", hbar, hbar)),
            hts=np.ascontiguousarray(np.einsum("bki,bk->bi", hbar, sbar)),
            x0bar=np.ascontiguousarray(expand_vector(x0)),
            sbar_sq=np.einsum("bk,bk->b", sbar, sbar),
            rho=float(rho),
            p_t=float(p_t),
            n=h.shape[2],
        )

    def repeat(self, times: int) -> "ColumnBatch":
        """Each column repeated ``times`` times consecutively (for multi-start solves)."""
        return ColumnBatch(
            gram=np.repeat(self.gram, times, axis=0),
            hts=np.repeat(self.hts, times, axis=0),
            x0bar=np.repeat(self.x0bar, times, axis=0),
            sbar_sq=np.repeat(self.sbar_sq, times),
            rho=self.rho,
            p_t=self.p_t,
            n=self.n,
        )


def _check_len(p, xbar):
    xbar = np.asarray(xbar, dtype=float)
    if xbar.shape != (2 * p.n,):
        raise DimensionError(f"expected a vector of length {2 * p.n}, got shape {xbar.shape}")
    return xbar


def objective(p: RealColumnProblem, xbar) -> float:
    xbar = _check_len(p, xbar)
    a = p.amp
    r = a * (p.hbar @ xbar) - p.sbar
    d = a * (xbar - p.x0bar)
    return float(p.rho * (r @ r) + (1.0 - p.rho) * (d @ d))


def gradient(p: RealColumnProblem, xbar) -> np.ndarray:
    xbar = _check_len(p, xbar)
    a = p.amp
    a2 = a * a
    rho = p.rho
    return (
        2.0 * rho * a2 * (p.hbar_t_hbar @ xbar)
        - 2.0 * rho * a * p.hbar_t_sbar
        + 2.0 * (1.0 - rho) * a2 * xbar
        - 2.0 * (1.0 - rho) * a2 * p.x0bar
    )


def lipschitz(p) -> float:
    """Lipschitz constant of the column gradient (works for problems and batches).

    For a batch the largest constant over its members is returned.
    """
    gram = p.hbar_t_hbar if isinstance(p, RealColumnProblem) else p.gram
    lam = float(np.max(np.linalg.eigvalsh(gram)))
    a2 = p.p_t / p.n
    return 2.0 * a2 * (p.rho * lam + (1.0 - p.rho))


def frame_objective(p: JcasProblem, x) -> float:
    x = np.asarray(x)
    r = p.h @ x - p.s
    d = x - p.x0
    return float(p.rho * np.sum(np.abs(r) ** 2) + (1.0 - p.rho) * np.sum(np.abs(d) ** 2))


def project_cm(xbar) -> np.ndarray:
    """Nearest point with unit-modulus complex entries; works on the last axis.

    Entries with modulus below 1e-12 map to 1 + 0j.
    """
    xbar = np.asarray(xbar, dtype=float)
    if xbar.shape[-1] % 2:
        raise DimensionError(f"real stacking must have even length, got {xbar.shape[-1]}")
    n = xbar.shape[-1] // 2
    re, im = xbar[..., :n], xbar[..., n:]
    mod = np.hypot(re, im)
    small = mod < ZERO_MODULUS
    safe = np.where(small, 1.0, mod)
    return np.concatenate([np.where(small, 1.0, re / safe), np.where(small, 0.0, im / safe)], axis=-1)


def assemble_waveform(columns, p_t: float, n: int, hard: bool = True) -> Waveform:
    """Stack per-column unit-modulus solutions into a scaled N x M waveform."""
    cols = np.asarray(columns, dtype=float)
    if cols.ndim != 2 or cols.shape[1] != 2 * n:
        raise DimensionError(f"expected M columns of length {2 * n}, got shape {cols.shape}")
    z = collapse_complex(cols)
    if hard and np.max(np.abs(np.abs(z) - 1.0)) > 1e-9:
        raise ConstraintError("column solution is not unit-modulus")
    return Waveform(np.sqrt(p_t / n) * z.T, p_t, hard=hard)
