"""Deep-unfolded projected-gradient network with diagonal (element-wise) weights.

Layer ``p`` maps the previous estimate ``x`` to::

    s   = w1*x0 + b1 + w2*(H'h s) + b2 + w3*(G x) + b3 + w4*x + b4
    x'  = psi(s),   psi(t) = clip(2t, -1, 1)

with ``G = Hbar'Hbar`` and ``Hbar's`` precomputed once per channel. Weights are
stored as arrays of shape ``(L, 4, 2N)`` in the order w1..w4 / b1..b4.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConsistencyError, DimensionError
from .metrics import beam_pattern, beam_mse, evaluate_waveform, mui_power, per_user_sinr, sum_rate
from .problem import ColumnBatch, JcasProblem, RealColumnProblem, assemble_waveform, project_cm
from .signals import collapse_complex, noise_power


def activation(t):
    """psi(t) = -1 + 2 (relu(t + 0.5) - relu(t - 0.5))."""
    t = np.asarray(t, dtype=float)
    relu = lambda v: np.maximum(v, 0.0)  # noqa: E731
    return -1.0 + 2.0 * (relu(t + 0.5) - relu(t - 0.5))


def activation_grad(t):
    """Subgradient of psi: 2 strictly inside (-0.5, 0.5), 0 elsewhere including the kinks."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 0.5, 2.0, 0.0)


@dataclass
class UnfoldLayer:
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w4: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray


@dataclass
class UnfoldModel:
    weights: np.ndarray  # (L, 4, 2N)
    biases: np.ndarray  # (L, 4, 2N)
    n: int
    rho: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=float)
        self.biases = np.ascontiguousarray(self.biases, dtype=float)
        if self.weights.ndim != 3 or self.weights.shape[0] < 1:
            raise DimensionError("weights must have shape (L, 4, 2N) with L >= 1")
        if self.weights.shape != (self.weights.shape[0], 4, 2 * self.n) or self.biases.shape != self.weights.shape:
            raise DimensionError(
                f"parameter shapes {self.weights.shape} / {self.biases.shape} do not match N={self.n}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ConsistencyError("model parameters must be finite")

    @property
    def n_layers(self):
        return self.weights.shape[0]

    def layer(self, p: int) -> UnfoldLayer:
        w, b = self.weights[p], self.biases[p]
        return UnfoldLayer(w[0], w[1], w[2], w[3], b[0], b[1], b[2], b[3])

    @property
    def layers(self):
        return [self.layer(p) for p in range(self.n_layers)]

    def copy(self):
        return UnfoldModel(self.weights.copy(), self.biases.copy(), self.n, self.rho, dict(self.metadata))


def default_init_step(n: int, p_t: float) -> float:
    return 0.05 * n / p_t


def pgd_init(
    n: int, layers: int, rho: float, p_t: float, step: float | None = None, slope_compensated: bool = True
) -> UnfoldModel:
    """Weights that make every layer one projected-gradient step.

    With ``slope_compensated`` (default) the weights are halved to cancel the
    slope 2 of psi, so a layer computes ``clip(x - step * grad f(x), -1, 1)``.
    Without it a layer computes ``psi(x - step * grad f(x))``, which doubles
    the iterate and saturates within a few layers.
    """
    step = default_init_step(n, p_t) if step is None else step
    a2 = p_t / n
    a = np.sqrt(a2)
    scale = 0.5 if slope_compensated else 1.0
    w = np.empty((layers, 4, 2 * n))
    w[:, 0] = 2 * step * (1 - rho) * a2
    w[:, 1] = 2 * step * rho * a
    w[:, 2] = -2 * step * rho * a2
    w[:, 3] = 1 - 2 * step * (1 - rho) * a2
    w *= scale
    meta = {"init": "pgd" if slope_compensated else "pgd-unscaled", "init_step": step}
    return UnfoldModel(w, np.zeros_like(w), n, rho, meta)


def random_init(n: int, layers: int, rho: float, rng, scale: float = 0.1) -> UnfoldModel:
    rng = np.random.default_rng(rng)
    w = scale * rng.standard_normal((layers, 4, 2 * n))
    b = 0.1 * scale * rng.standard_normal((layers, 4, 2 * n))
    return UnfoldModel(w, b, n, rho, {"init": "random", "init_scale": scale})


@dataclass
class ForwardTrace:
    inputs: np.ndarray  # (B, 2N)
    pre: np.ndarray  # (L, B, 2N) pre-activations s_p
    outputs: np.ndarray  # (L, B, 2N) layer outputs x_p
    gram_x: np.ndarray  # (L, B, 2N) G @ x_{p-1} feeding layer p

    @property
    def final(self):
        return self.outputs[-1]


def as_batch(p) -> ColumnBatch:
    if isinstance(p, ColumnBatch):
        return p
    if isinstance(p, RealColumnProblem):
        return ColumnBatch.from_problems([p])
    if isinstance(p, JcasProblem):
        return ColumnBatch.from_frame(p)
    return ColumnBatch.from_problems(p)


def _check(model: UnfoldModel, batch: ColumnBatch):
    if batch.n != model.n:
        raise DimensionError(f"model built for N={model.n} applied to a problem with N={batch.n}")


def _init(batch, x_init):
    if x_init is None:
        return np.zeros((batch.size, 2 * batch.n))
    x = np.asarray(x_init, dtype=float)
    if x.ndim == 1:
        x = np.broadcast_to(x, (batch.size, x.shape[0]))
    if x.shape != (batch.size, 2 * batch.n):
        raise DimensionError(f"x_init must have length {2 * batch.n}")
    return np.ascontiguousarray(x)


def forward(model: UnfoldModel, p, x_init=None) -> ForwardTrace:
    """Run every layer on one column problem or a batch (zero start by default)."""
    batch = as_batch(p)
    _check(model, batch)
    x = _init(batch, x_init)
    pre, out, q = kernels.unfold_forward(model.weights, model.biases, batch.gram, batch.hts, batch.x0bar, x)
    return ForwardTrace(out[0], pre, out[1:], q)


def _layer_objectives(trace: ForwardTrace, batch: ColumnBatch):
    """Per-layer, per-sample objective values, shape (L, B), evaluated directly."""
    a = batch.amp
    x = trace.outputs
    gx = np.einsum("bij,lbj->lbi", batch.gram, x)
    comm = a * a * np.einsum("lbi,lbi->lb", x, gx) - 2 * a * np.einsum("lbi,bi->lb", x, batch.hts) + batch.sbar_sq
    d = x - batch.x0bar
    return batch.rho * comm + (1 - batch.rho) * a * a * np.einsum("lbi,lbi->lb", d, d)


def training_loss(model: UnfoldModel, batch, x_init=None) -> float:
    """Batch mean of the objective summed over the outputs of all layers."""
    batch = as_batch(batch)
    trace = forward(model, batch, x_init)
    return float(np.mean(np.sum(_layer_objectives(trace, batch), axis=0)))


def backward(trace: ForwardTrace, model: UnfoldModel, p):
    """Reverse-mode gradients of :func:`training_loss` w.r.t. weights and biases.

    Every layer output feeds the loss directly and, through the ``G x`` and
    ``x`` inputs, every later layer. Returns ``(d_weights, d_biases)`` shaped
    like the model parameters.
    """
    batch = as_batch(p)
    _check(model, batch)
    nl, nb = trace.pre.shape[0], trace.pre.shape[1]
    if nl != model.n_layers or nb != batch.size:
        raise ConsistencyError("trace does not come from this model / problem")
    a = batch.amp
    rho = batch.rho
    prev = np.concatenate([trace.inputs[None], trace.outputs[:-1]])
    dw = np.zeros_like(model.weights)
    db = np.zeros_like(model.biases)
    upstream = np.zeros((nb, 2 * batch.n))
    for p in range(nl - 1, -1, -1):
        x = trace.outputs[p]
        gx = np.einsum("bij,bj->bi", batch.gram, x)
        direct = 2 * rho * a * a * gx - 2 * rho * a * batch.hts + 2 * (1 - rho) * a * a * (x - batch.x0bar)
        ds = (direct / nb + upstream) * activation_grad(trace.pre[p])
        dw[p, 0] = np.sum(ds * batch.x0bar, axis=0)
        dw[p, 1] = np.sum(ds * batch.hts, axis=0)
        dw[p, 2] = np.sum(ds * trace.gram_x[p], axis=0)
        dw[p, 3] = np.sum(ds * prev[p], axis=0)
        db[p] = np.sum(ds, axis=0)
        upstream = np.einsum("bji,bj->bi", batch.gram, model.weights[p, 2] * ds) + model.weights[p, 3] * ds
    return dw, db


def loss_and_grad(model: UnfoldModel, batch: ColumnBatch, x_init=None):
    """Fused forward + backward through the selected kernel backend."""
    _check(model, batch)
    x = _init(batch, x_init)
    return kernels.unfold_loss_grad(
        model.weights, model.biases, batch.gram, batch.hts, batch.x0bar, batch.sbar_sq, batch.rho, batch.amp, x
    )


# -- FLOP accounting ---------------------------------------------------------


def flop_breakdown(n: int) -> dict:
    return {
        "matvec": 2 * n * (4 * n - 1),
        "weight_multiplications": 8 * n,
        "bias_additions": 8 * n,
        "branch_additions": 6 * n,
        "activation": 2 * n,
    }


def flops_per_layer(n: int) -> int:
    """2N(4N + 11) arithmetic operations per layer."""
    if n < 1:
        raise DimensionError("n must be >= 1")
    return sum(flop_breakdown(n).values())


def projection_flops(n: int) -> int:
    """Two squares, one add, one sqrt and two divisions per complex entry."""
    return 6 * n


def inference_flops(n: int, layers: int, columns: int = 1) -> tuple[int, int]:
    """(network FLOPs, projection FLOPs) for ``columns`` column inferences."""
    return columns * layers * flops_per_layer(n), columns * projection_flops(n)


class _Counter:
    def __init__(self):
        self.ops = 0

    def mul(self, a, b):
        self.ops += 1
        return a * b

    def add(self, a, b):
        self.ops += 1
        return a + b

    def psi(self, t):
        self.ops += 1
        return min(1.0, max(-1.0, 2.0 * t))


def instrumented_forward(model: UnfoldModel, p: RealColumnProblem, x_init=None):
    """Scalar forward pass that counts every arithmetic operation.

    Returns ``(final output, operation count)``.
    """
    dim = 2 * model.n
    if p.n != model.n:
        raise DimensionError(f"model built for N={model.n} applied to a problem with N={p.n}")
    c = _Counter()
    g = p.hbar_t_hbar.tolist()
    hts = p.hbar_t_sbar.tolist()
    x0 = p.x0bar.tolist()
    x = [0.0] * dim if x_init is None else [float(v) for v in x_init]
    for layer in model.layers:
        gx = []
        for i in range(dim):
            acc = c.mul(g[i][0], x[0])
            for j in range(1, dim):
                acc = c.add(acc, c.mul(g[i][j], x[j]))
            gx.append(acc)
        nxt = []
        for i in range(dim):
            m1 = c.add(c.mul(layer.w1[i], x0[i]), layer.b1[i])
            m2 = c.add(c.mul(layer.w2[i], hts[i]), layer.b2[i])
            m3 = c.add(c.mul(layer.w3[i], gx[i]), layer.b3[i])
            m4 = c.add(c.mul(layer.w4[i], x[i]), layer.b4[i])
            s = c.add(c.add(c.add(m1, m2), m3), m4)
            nxt.append(c.psi(s))
        x = nxt
    return np.array(x), c.ops


# -- inference ---------------------------------------------------------------


def infer_waveform(model: UnfoldModel, p: JcasProblem, snr_db: float = 10.0, grid=None, delta: float = 0.5):
    """Design a frame with the network: forward from zero, project, assemble, evaluate."""
    if p.n != model.n:
        raise DimensionError(f"model built for N={model.n} applied to a problem with N={p.n}")
    t0 = time.perf_counter()
    raw = infer_columns(model, ColumnBatch.from_frame(p))
    x = assemble_waveform(project_cm(raw), p.p_t, p.n)
    wall = time.perf_counter() - t0

    n0 = noise_power(p.p_t, snr_db)
    report = evaluate_waveform(p.h, x, p.s, p.x0, n0, grid, delta)
    report.wall_time = wall
    net, proj = inference_flops(p.n, model.n_layers, p.m)
    report.flops = net + proj
    report.projection_flops = proj
    raw_x = p.amp * collapse_complex(raw).T
    raw_sinr = per_user_sinr(p.h, raw_x, p.s, n0)
    ref = beam_pattern(p.x0, grid, delta)
    report.raw = {
        "mui_power": mui_power(p.h, raw_x, p.s),
        "sum_rate": sum_rate(raw_sinr),
        "beam_mse": beam_mse(beam_pattern(raw_x, ref.angles, delta), ref),
    }
    return x, report


def infer_columns(model: UnfoldModel, batch: ColumnBatch) -> np.ndarray:
    """Final-layer outputs (unprojected) for every column in the batch."""
    _check(model, batch)
    _, out, _ = kernels.unfold_forward(
        model.weights, model.biases, batch.gram, batch.hts, batch.x0bar, np.zeros((batch.size, 2 * batch.n))
    )
    return out[-1]
