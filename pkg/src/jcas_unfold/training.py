"""Unsupervised training of the unfolded network with Adam."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, TrainingError
from .network import UnfoldModel, loss_and_grad, pgd_init, random_init, training_loss
from .problem import ColumnBatch
from .signals import QPSK, as_rng, chirp_benchmark

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    """System dimensions and the benchmark waveform used to draw samples."""

    n: int = 8
    k: int = 4
    m: int = 20
    layers: int = 10
    p_t: float = 1.0
    chirp_variant: str = "orthogonal"
    steer_angle: float = 0.0
    delta: float = 0.5

    def chirp(self):
        return chirp_benchmark(self.n, self.m, self.p_t, self.steer_angle, self.delta, self.chirp_variant)


INITS = ("pgd", "pgd-unscaled", "random")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    decay: float = 0.97
    decay_every: int = 100
    batch_size: int = 100
    steps: int = 5000
    seed: int = 0
    init: str = "pgd"
    init_step: float | None = None
    clip_norm: float = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0 < self.decay <= 1:
            raise ConfigurationError("decay must lie in (0, 1]")
        if self.batch_size < 1 or self.steps < 0 or self.decay_every < 1:
            raise ConfigurationError("batch_size and decay_every must be >= 1, steps >= 0")
        if self.init not in INITS:
            raise ConfigurationError(f"unknown init {self.init!r}")


def sample_batch(scenario: Scenario, rho: float, size: int, rng, x0=None) -> ColumnBatch:
    """``size`` independent columns, each with a fresh channel, QPSK column and chirp column."""
    rng = as_rng(rng)
    x0 = scenario.chirp() if x0 is None else x0
    amp = np.sqrt(scenario.p_t / scenario.n)
    h = (rng.standard_normal((size, scenario.k, scenario.n)) + 1j * rng.standard_normal((size, scenario.k, scenario.n))) / np.sqrt(2.0)
    s = QPSK[rng.integers(0, 4, size=(size, scenario.k))]
    cols = rng.integers(0, scenario.m, size=size)
    return ColumnBatch.from_samples(h, s, x0[:, cols].T / amp, rho, scenario.p_t)


def heldout_batch(scenario: Scenario, rho: float, size: int = 500, seed: int = 12345) -> ColumnBatch:
    return sample_batch(scenario, rho, size, np.random.default_rng(seed))


class Adam:
    """Bias-corrected Adam over a list of arrays, updated in place."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def initial_model(cfg: TrainConfig, rho: float, scenario: Scenario) -> UnfoldModel:
    if cfg.init in ("pgd", "pgd-unscaled"):
        return pgd_init(scenario.n, scenario.layers, rho, scenario.p_t, cfg.init_step, cfg.init == "pgd")
    return random_init(scenario.n, scenario.layers, rho, cfg.seed)


def train(cfg: TrainConfig, rho: float, scenario: Scenario, rng=None, callback=None, model=None) -> UnfoldModel:
    """Train one model for weight ``rho``.

    The learning rate is multiplied by ``decay`` every ``decay_every`` steps and
    gradients are clipped to a global norm of ``clip_norm``. Deterministic for a
    given ``cfg.seed`` (``rng`` overrides the sample stream when given).
    Training starts from a copy of ``model`` when one is passed.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else as_rng(rng)
    model = initial_model(cfg, rho, scenario) if model is None else model.copy()
    opt = Adam([model.weights, model.biases], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    x0 = scenario.chirp()
    loss = float("nan")
    for step in range(cfg.steps):
        batch = sample_batch(scenario, rho, cfg.batch_size, rng, x0)
        loss, dw, db = loss_and_grad(model, batch)
        if not np.isfinite(loss) or not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise TrainingError("training diverged: non-finite loss or gradient", step)
        norm = np.sqrt(np.sum(dw * dw) + np.sum(db * db))
        if norm > cfg.clip_norm:
            dw *= cfg.clip_norm / norm
            db *= cfg.clip_norm / norm
        opt.lr = cfg.learning_rate * cfg.decay ** (step // cfg.decay_every)
        opt.step([dw, db])
        if callback is not None:
            callback(step, loss, model)
        if step % 1000 == 0:
            log.debug("rho=%g step %d loss %.6g", rho, step, loss)
    if not (np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.biases))):
        raise TrainingError("training produced non-finite parameters", cfg.steps)
    model.metadata.update(
        {
            "train": asdict(cfg),
            "scenario": asdict(scenario),
            "final_batch_loss": float(loss),
        }
    )
    return model


def evaluate_loss(model: UnfoldModel, batch: ColumnBatch) -> float:
    return training_loss(model, batch)
