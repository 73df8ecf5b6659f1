"""Channels, symbol frames, the chirp benchmark waveform and steering vectors.

Complex quantities are plain ``numpy`` arrays. The real-valued stacking used by
the solvers puts real parts first, then imaginary parts::

    xbar = [Re x; Im x]
    Hbar = [[Re H, -Im H],
            [Im H,  Re H]]
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DimensionError, ParameterError

QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)

CHIRP_VARIANTS = ("orthogonal", "directional")


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _check_dims(**dims):
    for name, value in dims.items():
        if int(value) != value or value < 1:
            raise DimensionError(f"{name} must be a positive integer, got {value!r}")


def sample_channel(k: int, n: int, rng) -> np.ndarray:
    """K x N flat Rayleigh channel, unit variance per complex entry."""
    _check_dims(k=k, n=n)
    rng = as_rng(rng)
    re = rng.standard_normal((k, n))
    im = rng.standard_normal((k, n))
    return (re + 1j * im) / np.sqrt(2.0)


def sample_qpsk_frame(k: int, m: int, rng) -> np.ndarray:
    """K x M matrix of i.i.d. uniform unit-power QPSK symbols."""
    _check_dims(k=k, m=m)
    rng = as_rng(rng)
    return QPSK[rng.integers(0, 4, size=(k, m))]


def steering_vector(angle: float, n: int, delta: float = 0.5) -> np.ndarray:
    _check_dims(n=n)
    return np.exp(2j * np.pi * delta * np.sin(angle) * np.arange(n))


def steering_matrix(angles, n: int, delta: float = 0.5) -> np.ndarray:
    """Steering vectors stacked as columns, shape (N, len(angles))."""
    _check_dims(n=n)
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    return np.exp(2j * np.pi * delta * np.outer(np.arange(n), np.sin(angles)))


def chirp_benchmark(
    n: int,
    m: int,
    p_t: float,
    steer_angle: float = 0.0,
    delta: float = 0.5,
    variant: str = "orthogonal",
) -> np.ndarray:
    """Constant-modulus LFM chirp radar reference, shape (N, M).

    Entry (a, c) is ``sqrt(P_T/N) * exp(j 2 pi a c / M) * exp(j pi c^2 / M)``.
    The rows are mutually orthogonal whenever ``M >= N``. The ``directional``
    variant additionally rotates row ``a`` by the steering phase of
    ``steer_angle`` so the pattern gains a main lobe there.
    """
    _check_dims(n=n, m=m)
    if not p_t > 0:
        raise ParameterError(f"p_t must be positive, got {p_t!r}")
    if variant not in CHIRP_VARIANTS:
        raise ConfigurationError(f"unknown chirp variant {variant!r}; expected one of {CHIRP_VARIANTS}")
    if variant == "orthogonal" and m < n:
        raise ConfigurationError(f"orthogonal chirp needs M >= N (got M={m}, N={n})")
    a = np.arange(n)[:, None]
    c = np.arange(m)[None, :]
    # phases reduced mod 2 before exponentiating keeps large a*c products accurate
    phase = np.mod(2.0 * a * c, 2 * m) / m + np.mod(c * c, 2 * m) / m
    x0 = np.sqrt(p_t / n) * np.exp(1j * np.pi * phase)
    if variant == "directional":
        x0 = x0 * steering_vector(steer_angle, n, delta)[:, None]
    return x0


def expand_vector(v) -> np.ndarray:
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1).astype(float)


def expand_matrix(h) -> np.ndarray:
    h = np.asarray(h)
    if h.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {h.shape}")
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def expand_real(h, s_col, x0_col):
    """Real-valued stacking of a channel, symbol column and benchmark column.

    Returns ``(hbar, sbar, x0bar)`` with shapes (2K, 2N), (2K,), (2N,).
    """
    h = np.asarray(h)
    s_col = np.asarray(s_col)
    x0_col = np.asarray(x0_col)
    if h.ndim != 2:
        raise DimensionError(f"channel must be 2-D, got shape {h.shape}")
    k, n = h.shape
    if s_col.shape != (k,):
        raise DimensionError(f"symbol column must have length {k}, got shape {s_col.shape}")
    if x0_col.shape != (n,):
        raise DimensionError(f"benchmark column must have length {n}, got shape {x0_col.shape}")
    return expand_matrix(h), expand_vector(s_col), expand_vector(x0_col)


def collapse_complex(xbar) -> np.ndarray:
    """Inverse of :func:`expand_vector`; works on the last axis."""
    xbar = np.asarray(xbar, dtype=float)
    if xbar.shape[-1] % 2:
        raise DimensionError(f"real stacking must have even length, got {xbar.shape[-1]}")
    n = xbar.shape[-1] // 2
    return xbar[..., :n] + 1j * xbar[..., n:]


def collapse_matrix(hbar) -> np.ndarray:
    hbar = np.asarray(hbar, dtype=float)
    rows, cols = hbar.shape
    if rows % 2 or cols % 2:
        raise DimensionError(f"block matrix must have even shape, got {hbar.shape}")
    k, n = rows // 2, cols // 2
    return hbar[:k, :n] + 1j * hbar[k:, :n]


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def noise_power(p_t: float, snr_db: float) -> float:
    """N0 for a transmit SNR defined as P_T / N0."""
    return p_t / 10.0 ** (snr_db / 10.0)
