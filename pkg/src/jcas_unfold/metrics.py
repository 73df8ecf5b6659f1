"""Communications and sensing performance metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, DimensionError, NumericError, ParameterError
from .signals import steering_matrix

IMAG_TOL = 1e-9


def default_angle_grid() -> np.ndarray:
    """-90..90 degrees in 1 degree steps (radians)."""
    return np.deg2rad(np.linspace(-90.0, 90.0, 361))


@dataclass
class Waveform:
    """N x M transmit matrix. ``hard`` waveforms must be constant-modulus."""

    entries: np.ndarray
    p_t: float
    hard: bool = True

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        if self.entries.ndim != 2:
            raise DimensionError(f"waveform must be N x M, got shape {self.entries.shape}")
        if self.hard:
            err = modulus_error(self.entries, self.p_t)
            if err > 1e-9:
                raise ConstraintError(f"constant-modulus violated: max relative error {err:.3e}")

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def m(self):
        return self.entries.shape[1]


def modulus_error(x, p_t: float) -> float:
    """Max relative deviation of |x_ij| from sqrt(P_T/N)."""
    x = np.asarray(x)
    amp = np.sqrt(p_t / x.shape[0])
    return float(np.max(np.abs(np.abs(x) / amp - 1.0)))


@dataclass
class BeamPattern:
    angles: np.ndarray
    power: np.ndarray


@dataclass
class EvalReport:
    mui_power: float
    sinr: np.ndarray
    sum_rate: float
    beam_mse: float
    wall_time: float = 0.0
    flops: int = 0
    projection_flops: int = 0
    # metrics of the unprojected network output, when there is one
    raw: dict = field(default_factory=dict)


def _entries(x):
    return x.entries if isinstance(x, Waveform) else np.asarray(x)


def _check_frame(h, x, s):
    h, x, s = np.asarray(h), _entries(x), np.asarray(s)
    if h.ndim != 2 or x.ndim != 2 or s.ndim != 2:
        raise DimensionError("channel, waveform and symbols must all be matrices")
    k, n = h.shape
    if x.shape[0] != n or s.shape != (k, x.shape[1]):
        raise DimensionError(
            f"inconsistent shapes: H {h.shape}, X {x.shape}, S {s.shape}"
        )
    return h, x, s


def mui_power(h, x, s) -> float:
    """Total multiuser interference ||HX - S||_F^2."""
    h, x, s = _check_frame(h, x, s)
    r = h @ x - s
    return float(np.sum(r.real**2 + r.imag**2))


def per_user_sinr(h, x, s, n0: float) -> np.ndarray:
    """Per-user SINR with expectations taken as means over the M frame columns."""
    if not n0 > 0:
        raise ParameterError(f"noise power must be positive, got {n0!r}")
    h, x, s = _check_frame(h, x, s)
    r = h @ x - s
    signal = np.mean(np.abs(s) ** 2, axis=1)
    interference = np.mean(r.real**2 + r.imag**2, axis=1)
    return signal / (interference + n0)


def sum_rate(sinr) -> float:
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ParameterError("SINR values must be nonnegative")
    return float(np.sum(np.log2(1.0 + sinr)))


def beam_pattern(x, grid=None, delta: float = 0.5) -> BeamPattern:
    """Transmit beam pattern (1/M) a^H X X^H a over an angle grid."""
    x = _entries(x)
    grid = default_angle_grid() if grid is None else np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise DimensionError("angle grid is empty")
    a = steering_matrix(grid, x.shape[0], delta)
    r = (x @ x.conj().T) / x.shape[1]
    quad = np.einsum("ng,nk,kg->g", a.conj(), r, a)
    scale = max(1.0, float(np.max(np.abs(quad.real))))
    if np.max(np.abs(quad.imag)) > IMAG_TOL * scale:
        raise NumericError("beam pattern has a non-negligible imaginary part")
    return BeamPattern(grid, np.maximum(quad.real, 0.0))


def beam_mse(p: BeamPattern, p_ref: BeamPattern) -> float:
    if p.angles.shape != p_ref.angles.shape or not np.array_equal(p.angles, p_ref.angles):
        raise DimensionError("beam patterns are sampled on different angle grids")
    return float(np.mean((p.power - p_ref.power) ** 2))


def evaluate_waveform(h, x, s, x0, n0: float, grid=None, delta: float = 0.5, ref_pattern=None) -> EvalReport:
    """Fill an :class:`EvalReport` for one designed frame (timing left at zero)."""
    x = _entries(x)
    sinr = per_user_sinr(h, x, s, n0)
    if ref_pattern is None:
        ref_pattern = beam_pattern(x0, grid, delta)
    return EvalReport(
        mui_power=mui_power(h, x, s),
        sinr=sinr,
        sum_rate=sum_rate(sinr),
        beam_mse=beam_mse(beam_pattern(x, ref_pattern.angles, delta), ref_pattern),
    )
