"""Experiment driver: rate/SNR sweeps, beam patterns, rate-vs-MSE tradeoff and timing.

All randomness flows from the config seed. Channel ``c`` of a sweep uses
``default_rng([seed, c])`` so every solver and every rho sees the same
channels and symbol frames, whatever order the cells are computed in.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import statistics
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigurationError, MissingModelError
from .metrics import beam_mse, beam_pattern, modulus_error, mui_power, per_user_sinr, sum_rate
from .modelfile import load_model, save_model
from .network import UnfoldModel, inference_flops, infer_columns, pgd_init
from .problem import ColumnBatch, JcasProblem, assemble_waveform, project_cm
from .signals import dbm_to_watts, noise_power, sample_channel, sample_qpsk_frame
from .solvers import PgdConfig, pgd_batch, pgd_flops
from .training import Scenario, TrainConfig, train

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SOLVER_CHOICES = ("unfolded", "pgd", "reference")


@dataclass
class TimingConfig:
    antennas: list = field(default_factory=lambda: [8, 16])
    repeats: int = 10
    warmup: int = 2
    pgd_starts: int = 8
    pgd_iters: int = 500


@dataclass
class ExperimentConfig:
    n: int = 8
    k: int = 4
    m: int = 20
    layers: int = 10
    p_t_dbm: float = 30.0
    snr_grid_db: list = field(default_factory=lambda: [-2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0])
    rho_grid: list = field(default_factory=lambda: [0.0, 0.2, 0.5, 0.8, 1.0])
    delta: float = 0.5
    angle_grid_deg: list = field(default_factory=lambda: [-90.0, 90.0, 361])
    chirp_variant: str = "orthogonal"
    steer_angle_deg: float = 0.0
    solvers: list = field(default_factory=lambda: ["unfolded", "pgd"])
    batch_count: int = 100
    seed: int = 0
    model_dir: str = "models"
    auto_train: bool = True
    out_dir: str = "results"
    pgd: PgdConfig = field(default_factory=PgdConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.snr_grid_db or not self.rho_grid or not self.solvers:
            raise ConfigurationError("snr_grid_db, rho_grid and solvers must be nonempty")
        if any(not 0.0 <= r <= 1.0 for r in self.rho_grid):
            raise ConfigurationError("rho values must lie in [0, 1]")
        bad = [s for s in self.solvers if s not in SOLVER_CHOICES]
        if bad:
            raise ConfigurationError(f"unknown solver(s) {bad}; choose from {SOLVER_CHOICES}")
        if self.batch_count < 1:
            raise ConfigurationError("batch_count must be >= 1")
        if len(self.angle_grid_deg) != 3 or int(self.angle_grid_deg[2]) < 1:
            raise ConfigurationError("angle_grid_deg must be [start, stop, count] with count >= 1")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(f"config schema version {self.schema_version} unsupported (expected {SCHEMA_VERSION})")

    @property
    def p_t(self) -> float:
        return dbm_to_watts(self.p_t_dbm)

    @property
    def angle_grid(self) -> np.ndarray:
        start, stop, count = self.angle_grid_deg
        return np.deg2rad(np.linspace(start, stop, int(count)))

    def scenario(self, n: int | None = None) -> Scenario:
        return Scenario(
            n=self.n if n is None else n,
            k=self.k,
            m=self.m,
            layers=self.layers,
            p_t=self.p_t,
            chirp_variant=self.chirp_variant,
            steer_angle=float(np.deg2rad(self.steer_angle_deg)),
            delta=self.delta,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        nested = {"pgd": PgdConfig, "train": TrainConfig, "timing": TimingConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, typ in nested.items():
                if key in data:
                    sub = data[key]
                    extra = set(sub) - {f.name for f in fields(typ)}
                    if extra:
                        raise ConfigurationError(f"unknown keys in [{key}]: {sorted(extra)}")
                    data[key] = typ(**sub)
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(f"invalid config: {exc}") from None

    def replace(self, **changes) -> "ExperimentConfig":
        d = copy.deepcopy(self.to_dict())
        for key, value in changes.items():
            if "." in key:
                sect, sub = key.split(".", 1)
                d[sect][sub] = value
            else:
                d[key] = value
        return ExperimentConfig.from_dict(d)

    def digest(self) -> str:
        """Hash of every setting that can change a result (paths and auto_train excluded)."""
        d = self.to_dict()
        for key in ("out_dir", "model_dir", "auto_train"):
            d.pop(key)
        return hashlib.sha256(canonical_json(d).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must be a JSON object")
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


# -- models ------------------------------------------------------------------


def model_fingerprint(cfg: ExperimentConfig, rho: float, n: int | None = None) -> str:
    key = {"scenario": asdict(cfg.scenario(n)), "train": asdict(cfg.train), "rho": float(rho)}
    return hashlib.sha256(canonical_json(key).encode()).hexdigest()[:12]


def model_path(cfg: ExperimentConfig, rho: float, n: int | None = None) -> str:
    n = cfg.n if n is None else n
    return os.path.join(cfg.model_dir, f"unfold_n{n}_rho{rho:.3f}_{model_fingerprint(cfg, rho, n)}.jcu")


def train_model(cfg: ExperimentConfig, rho: float, n: int | None = None) -> UnfoldModel:
    return train(cfg.train, rho, cfg.scenario(n))


def get_model(cfg: ExperimentConfig, rho: float, n: int | None = None, auto_train: bool | None = None) -> UnfoldModel:
    """Load the model for ``rho`` from the model directory, training it first if allowed."""
    path = model_path(cfg, rho, n)
    if os.path.exists(path):
        return load_model(path, cfg.n if n is None else n)
    if not (cfg.auto_train if auto_train is None else auto_train):
        raise MissingModelError(rho, path)
    log.info("training model for rho=%g (N=%d)", rho, cfg.n if n is None else n)
    model = train_model(cfg, rho, n)
    os.makedirs(cfg.model_dir, exist_ok=True)
    save_model(model, path)
    return model


def resolve_models(cfg: ExperimentConfig, models=None) -> dict:
    if "unfolded" not in cfg.solvers:
        return {}
    models = dict(models or {})
    for rho in cfg.rho_grid:
        if rho not in models:
            models[rho] = get_model(cfg, rho)
    return models


# -- waveform design -----------------------------------------------------------


def channel_problem(cfg: ExperimentConfig, index: int, rho: float, x0, n: int | None = None) -> JcasProblem:
    rng = np.random.default_rng([cfg.seed, index])
    n = cfg.n if n is None else n
    h = sample_channel(cfg.k, n, rng)
    s = sample_qpsk_frame(cfg.k, cfg.m, rng)
    return JcasProblem(h, s, x0, rho, cfg.p_t)


def design(solver: str, p: JcasProblem, model: UnfoldModel | None = None, pgd_cfg: PgdConfig | None = None):
    """Designed waveform entries (N x M) for one frame."""
    if solver == "reference":
        return p.x0
    batch = ColumnBatch.from_frame(p)
    if solver == "unfolded":
        if model is None:
            raise MissingModelError(p.rho)
        cols = project_cm(infer_columns(model, batch))
    elif solver == "pgd":
        cols, _ = pgd_batch(batch, pgd_cfg)
    else:
        raise ConfigurationError(f"unknown solver {solver!r}")
    return assemble_waveform(cols, p.p_t, p.n).entries


def solver_flops(solver: str, cfg: ExperimentConfig, n: int, pgd_cfg: PgdConfig | None = None) -> int:
    if solver == "unfolded":
        return sum(inference_flops(n, cfg.layers, cfg.m))
    if solver == "pgd":
        pgd_cfg = pgd_cfg or cfg.pgd
        return cfg.m * pgd_cfg.n_starts * pgd_flops(n, pgd_cfg.max_iters)
    return 0


# -- experiments -------------------------------------------------------------


@dataclass
class SweepRow:
    rho: float
    snr_db: float
    solver: str
    avg_sum_rate: float
    avg_mui: float
    avg_beam_mse: float
    avg_wall_time: float
    flops: int
    max_modulus_err: float


@dataclass
class SweepResult:
    rows: list
    batch_count: int

    def cell(self, rho, snr_db, solver) -> SweepRow:
        for r in self.rows:
            if r.rho == rho and r.snr_db == snr_db and r.solver == solver:
                return r
        raise KeyError((rho, snr_db, solver))


def run_rate_sweep(cfg: ExperimentConfig, models=None) -> SweepResult:
    """Average sum rate, MUI and beam MSE for every (rho, SNR, solver) cell.

    The waveform does not depend on the SNR, so each (rho, channel, solver) is
    designed once and scored at every SNR grid point.
    """
    models = resolve_models(cfg, models)
    x0 = cfg.scenario().chirp()
    grid = cfg.angle_grid
    ref = beam_pattern(x0, grid, cfg.delta)
    n0s = [noise_power(cfg.p_t, snr) for snr in cfg.snr_grid_db]
    rows = []
    for rho in cfg.rho_grid:
        for solver in cfg.solvers:
            rates = np.zeros((cfg.batch_count, len(n0s)))
            muis = np.zeros(cfg.batch_count)
            mses = np.zeros(cfg.batch_count)
            walls = np.zeros(cfg.batch_count)
            worst = 0.0
            for c in range(cfg.batch_count):
                p = channel_problem(cfg, c, rho, x0)
                t0 = time.perf_counter()
                x = design(solver, p, models.get(rho), cfg.pgd)
                walls[c] = time.perf_counter() - t0
                worst = max(worst, modulus_error(x, cfg.p_t))
                muis[c] = mui_power(p.h, x, p.s)
                mses[c] = beam_mse(beam_pattern(x, grid, cfg.delta), ref)
                for i, n0 in enumerate(n0s):
                    rates[c, i] = sum_rate(per_user_sinr(p.h, x, p.s, n0))
            flops = solver_flops(solver, cfg, cfg.n)
            for i, snr in enumerate(cfg.snr_grid_db):
                rows.append(
                    SweepRow(
                        float(rho), float(snr), solver, float(np.mean(rates[:, i])), float(np.mean(muis)),
                        float(np.mean(mses)), float(np.mean(walls)), flops, float(worst),
                    )
                )
    return SweepResult(rows, cfg.batch_count)


def run_beam_pattern(cfg: ExperimentConfig, rho: float, models=None) -> dict:
    """Channel-averaged beam pattern per solver, plus the benchmark reference.

    Returns ``{"angle_deg": ..., "<solver>": ..., "reference": ...}``.
    """
    cfg = cfg.replace(rho_grid=[rho])
    models = resolve_models(cfg, models)
    x0 = cfg.scenario().chirp()
    grid = cfg.angle_grid
    table = {"angle_deg": np.rad2deg(grid)}
    solvers = [s for s in cfg.solvers if s != "reference"]
    for solver in solvers:
        acc = np.zeros(grid.size)
        for c in range(cfg.batch_count):
            p = channel_problem(cfg, c, rho, x0)
            acc += beam_pattern(design(solver, p, models.get(rho), cfg.pgd), grid, cfg.delta).power
        table[solver] = acc / cfg.batch_count
    table["reference"] = beam_pattern(x0, grid, cfg.delta).power
    return table


def run_tradeoff(cfg: ExperimentConfig, models=None, sweep: SweepResult | None = None) -> list:
    """(rho, snr_db, solver, avg_sum_rate, avg_beam_mse) rows sorted by rho."""
    sweep = sweep or run_rate_sweep(cfg, models)
    rows = [(r.rho, r.snr_db, r.solver, r.avg_sum_rate, r.avg_beam_mse) for r in sweep.rows]
    order = {s: i for i, s in enumerate(cfg.solvers)}
    return sorted(rows, key=lambda r: (r[0], r[1], order[r[2]]))


def _median_time(fn, repeats, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def run_timing(cfg: ExperimentConfig, models=None) -> list:
    """Per-channel design time in the communications-only case (rho = 1).

    Rows are ``(solver, n, per_channel_seconds, flops, model)``; the unfolded
    solver uses a stored trained model when one exists, otherwise the
    untrained initialisation (run time does not depend on the weights).
    """
    tc = cfg.timing
    pgd_cfg = PgdConfig(
        max_iters=tc.pgd_iters, tol=0.0, n_starts=tc.pgd_starts, step_scale=cfg.pgd.step_scale, seed=cfg.seed
    )
    rows = []
    for n in tc.antennas:
        x0 = cfg.scenario(n).chirp()
        p = channel_problem(cfg, 0, 1.0, x0, n)
        model = (models or {}).get(n)
        source = "given"
        if model is None:
            path = model_path(cfg, 1.0, n)
            if os.path.exists(path):
                model, source = load_model(path, n), "trained"
            else:
                init = "pgd-unscaled" if cfg.train.init == "pgd-unscaled" else "pgd"
                model, source = pgd_init(n, cfg.layers, 1.0, cfg.p_t, cfg.train.init_step, init == "pgd"), "untrained"
        t_unf = _median_time(lambda: design("unfolded", p, model), tc.repeats, tc.warmup)
        t_pgd = _median_time(lambda: design("pgd", p, pgd_cfg=pgd_cfg), tc.repeats, tc.warmup)
        rows.append(("unfolded", n, t_unf, solver_flops("unfolded", cfg, n), source))
        rows.append(("pgd", n, t_pgd, solver_flops("pgd", cfg, n, pgd_cfg), f"{tc.pgd_starts}-start"))
    return rows


# -- CSV output --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def write_csv(path, header, rows, cfg: ExperimentConfig, notes=()) -> None:
    """Atomically write a CSV preceded by a ``#`` provenance block."""
    lines = [
        "# jcas_unfold experiment output",
        f"# config_sha256: {cfg.digest()}",
        f"# seed: {cfg.seed}",
        f"# batch_count: {cfg.batch_count}",
    ]
    lines += [f"# {note}" for note in notes]
    lines.append(",".join(header))
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-csv-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


RATES_HEADER = [
    "rho", "snr_db", "solver", "avg_sum_rate_bps_hz", "avg_mui_power_w", "avg_beam_mse_w2", "flops", "max_modulus_rel_err",
]
BEAM_NOTE = "beam power in W (linear); beam_mse in W^2 on linear power over the angle grid"


def write_rates(path, sweep: SweepResult, cfg: ExperimentConfig):
    rows = [
        (r.rho, r.snr_db, r.solver, r.avg_sum_rate, r.avg_mui, r.avg_beam_mse, r.flops, r.max_modulus_err)
        for r in sweep.rows
    ]
    write_csv(path, RATES_HEADER, rows, cfg, [BEAM_NOTE, "wall times are reported only in timing.csv"])


def write_beam(path, table: dict, cfg: ExperimentConfig, rho: float):
    keys = [k for k in table if k != "angle_deg"]
    header = ["angle_deg"] + [f"{k}_power_w" for k in keys]
    rows = zip(table["angle_deg"], *(table[k] for k in keys))
    write_csv(path, header, rows, cfg, [BEAM_NOTE, f"rho: {rho:g}"])


def write_tradeoff(path, rows, cfg: ExperimentConfig):
    header = ["rho", "snr_db", "solver", "avg_sum_rate_bps_hz", "avg_beam_mse_w2"]
    write_csv(path, header, rows, cfg, [BEAM_NOTE])


def write_timing(path, rows, cfg: ExperimentConfig):
    header = ["solver", "n", "per_channel_seconds", "flops", "model"]
    notes = [
        "communications-only case (rho = 1); median of repeats after warm-up, one channel per run",
        "timings are machine dependent and not reproducible byte for byte",
    ]
    write_csv(path, header, rows, cfg, notes)
