import os
import time

import numpy as np
import pytest

from jcas_unfold import harness, kernels
from jcas_unfold.network import forward, training_loss
from jcas_unfold.problem import JcasProblem, decompose_columns
from jcas_unfold.signals import chirp_benchmark, sample_channel, sample_qpsk_frame

BACKENDS = [kernels.python] + ([kernels.compiled] if kernels.compiled is not None else [])

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _criteria[num] = (text, rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        text, outcome = _criteria[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {text}")


@pytest.fixture(params=BACKENDS, ids=lambda m: m.BACKEND)
def backend(request):
    return request.param


def random_problem(rng, k=4, n=8, m=20, rho=0.5, p_t=1.0):
    h = sample_channel(k, n, rng)
    s = sample_qpsk_frame(k, m, rng)
    phases = rng.uniform(0, 2 * np.pi, (n, m))
    x0 = np.sqrt(p_t / n) * np.exp(1j * phases)
    return JcasProblem(h, s, x0, rho, p_t)


def random_column(rng, k=4, n=8, rho=0.5, p_t=1.0):
    return decompose_columns(random_problem(rng, k, n, 1, rho, p_t))[0]


def chirp_problem(rng, k=4, n=8, m=20, rho=0.5, p_t=1.0):
    return JcasProblem(sample_channel(k, n, rng), sample_qpsk_frame(k, m, rng), chirp_benchmark(n, m, p_t), rho, p_t)


# wall-clock seconds spent in the session fixtures below
FIXTURE_SECONDS = {}


@pytest.fixture(scope="session")
def default_models(tmp_path_factory):
    """Models trained with the default config for every rho, trained once per session."""
    model_dir = tmp_path_factory.mktemp("models")
    cfg = harness.default_config().replace(model_dir=os.fspath(model_dir))
    t0 = time.perf_counter()
    models = {rho: harness.get_model(cfg, rho) for rho in cfg.rho_grid}
    FIXTURE_SECONDS["train"] = time.perf_counter() - t0
    return cfg, models


@pytest.fixture(scope="session")
def default_sweep(default_models):
    cfg, models = default_models
    t0 = time.perf_counter()
    sweep = harness.run_rate_sweep(cfg, models)
    FIXTURE_SECONDS["sweep"] = time.perf_counter() - t0
    return cfg, sweep


def fd_param_grads(model, batch, h=1e-5):
    """Central finite differences of the training loss for every weight and bias entry."""
    out = []
    for arr in (model.weights, model.biases):
        g = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            keep = arr[idx]
            arr[idx] = keep + h
            up = training_loss(model, batch)
            arr[idx] = keep - h
            down = training_loss(model, batch)
            arr[idx] = keep
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def kink_margin(model, batch):
    return float(np.min(np.abs(np.abs(forward(model, batch).pre) - 0.5)))


def max_rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
