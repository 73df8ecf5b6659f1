import json
import os

import numpy as np
import pytest

from jcas_unfold import harness
from jcas_unfold.errors import ConfigurationError, MissingModelError
from jcas_unfold.metrics import beam_pattern, per_user_sinr, sum_rate
from jcas_unfold.network import flops_per_layer, projection_flops
from jcas_unfold.signals import noise_power


@pytest.fixture
def small(tmp_path):
    return harness.default_config().replace(
        n=4, k=2, m=8, layers=3, snr_grid_db=[0.0, 10.0], rho_grid=[0.0, 0.5, 1.0], batch_count=3,
        model_dir=os.fspath(tmp_path / "models"), out_dir=os.fspath(tmp_path / "out"),
        **{"train.steps": 20, "train.batch_size": 8},
    )


def test_default_config_values():
    cfg = harness.default_config()
    assert (cfg.n, cfg.k, cfg.m, cfg.layers, cfg.p_t_dbm) == (8, 4, 20, 10, 30.0)
    assert cfg.p_t == 1.0
    assert cfg.snr_grid_db == [-2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0]
    assert cfg.rho_grid == [0.0, 0.2, 0.5, 0.8, 1.0]
    assert cfg.angle_grid.size == 361 and cfg.batch_count == 100


def test_config_json_roundtrip(tmp_path):
    cfg = harness.default_config().replace(seed=9, **{"train.steps": 7})
    path = tmp_path / "c.json"
    path.write_text(harness.dump_config(cfg))
    back = harness.load_config(path)
    assert back == cfg and back.digest() == cfg.digest()
    assert back.train.steps == 7


@pytest.mark.parametrize(
    "change",
    [{"rho_grid": []}, {"rho_grid": [1.5]}, {"solvers": ["bnb"]}, {"batch_count": 0}, {"schema_version": 2},
     {"angle_grid_deg": [0, 1]}, {"train.learning_rate": -1.0}],
)
def test_config_validation(change):
    with pytest.raises(ConfigurationError):
        harness.default_config().replace(**change)


def test_config_unknown_keys(tmp_path):
    d = harness.default_config().to_dict()
    d["bogus"] = 1
    with pytest.raises(ConfigurationError, match="bogus"):
        harness.ExperimentConfig.from_dict(d)
    d = harness.default_config().to_dict()
    d["train"]["bogus"] = 1
    with pytest.raises(ConfigurationError, match="bogus"):
        harness.ExperimentConfig.from_dict(d)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        harness.load_config(bad)
    with pytest.raises(ConfigurationError):
        harness.load_config(tmp_path / "missing.json")


def test_missing_model_names_rho(small):
    cfg = small.replace(auto_train=False, rho_grid=[0.5])
    with pytest.raises(MissingModelError, match="rho=0.5"):
        harness.run_rate_sweep(cfg)


def test_models_trained_once_and_reused(small):
    m1 = harness.get_model(small, 0.5)
    path = harness.model_path(small, 0.5)
    stamp = os.path.getmtime(path)
    m2 = harness.get_model(small, 0.5)
    assert os.path.getmtime(path) == stamp
    assert np.array_equal(m1.weights, m2.weights)
    # a different training config maps to a different file
    assert harness.model_path(small.replace(**{"train.steps": 21}), 0.5) != path


def test_sweep_shape_and_direct_oracle(small):
    cfg = small.replace(solvers=["pgd", "reference", "unfolded"])
    res = harness.run_rate_sweep(cfg)
    assert len(res.rows) == 3 * 2 * 3
    x0 = cfg.scenario().chirp()
    for snr in cfg.snr_grid_db:
        rates = []
        for c in range(cfg.batch_count):
            p = harness.channel_problem(cfg, c, 0.0, x0)
            rates.append(sum_rate(per_user_sinr(p.h, x0, p.s, noise_power(cfg.p_t, snr))))
        direct = float(np.mean(rates))
        assert res.cell(0.0, snr, "reference").avg_sum_rate == pytest.approx(direct, rel=1e-12)
        assert res.cell(0.0, snr, "pgd").avg_sum_rate == pytest.approx(direct, rel=1e-9)
    for r in res.rows:
        assert r.max_modulus_err < 1e-9
        assert np.isfinite([r.avg_sum_rate, r.avg_mui, r.avg_beam_mse, r.avg_wall_time]).all()


def test_sweep_rate_increases_with_snr(small):
    res = harness.run_rate_sweep(small.replace(snr_grid_db=[-2.0, 4.0, 12.0]))
    for rho in small.rho_grid:
        for solver in small.solvers:
            rates = [res.cell(rho, s, solver).avg_sum_rate for s in (-2.0, 4.0, 12.0)]
            assert rates[0] < rates[1] < rates[2]


def test_sweep_common_random_numbers(small):
    a = harness.run_rate_sweep(small.replace(solvers=["pgd"]))
    b = harness.run_rate_sweep(small.replace(solvers=["pgd"], rho_grid=[1.0, 0.0]))
    assert a.cell(1.0, 10.0, "pgd").avg_sum_rate == b.cell(1.0, 10.0, "pgd").avg_sum_rate


def test_beam_reference_flat(small):
    table = harness.run_beam_pattern(small.replace(solvers=["pgd"]), 0.5)
    assert set(table) == {"angle_deg", "pgd", "reference"}
    assert np.max(np.abs(table["reference"] - small.p_t)) < 1e-9 * small.p_t
    assert table["angle_deg"][0] == -90 and table["angle_deg"][-1] == 90


def test_tradeoff_sorted_by_rho(small):
    rows = harness.run_tradeoff(small.replace(solvers=["pgd"]))
    assert [r[0] for r in rows] == sorted(r[0] for r in rows)
    assert len(rows) == 6


def test_timing_rows(small):
    cfg = small.replace(**{"timing.repeats": 2, "timing.warmup": 1, "timing.pgd_iters": 20, "timing.antennas": [4]})
    rows = harness.run_timing(cfg)
    (unf, pgd) = rows
    assert unf[0] == "unfolded" and pgd[0] == "pgd"
    assert all(0 < r[2] < np.inf for r in rows)
    assert unf[3] == cfg.m * cfg.layers * flops_per_layer(4) + cfg.m * projection_flops(4)


def test_write_csv_format_and_atomicity(tmp_path, small):
    path = tmp_path / "x.csv"
    harness.write_csv(path, ["a", "b_w"], [(1, 0.1234567890123), (2, "s")], small, ["note"])
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1] == f"# config_sha256: {small.digest()}"
    assert "a,b_w" in lines and "1,0.123456789" in lines
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.csv"]

    class Boom:
        def __str__(self):
            raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        harness.write_csv(tmp_path / "y.csv", ["a"], [(Boom(),)], small)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.csv"]


def test_dump_config_is_json():
    d = json.loads(harness.dump_config(harness.default_config()))
    assert d["schema_version"] == harness.SCHEMA_VERSION and d["layers"] == 10


# -- examples that need the default trained models --------------------------


def test_rho0_unfolded_beam_matches_reference(default_models):
    cfg, models = default_models
    table = harness.run_beam_pattern(cfg.replace(batch_count=20), 0.0, models)
    rel = np.abs(table["unfolded"] - table["reference"]) / table["reference"]
    assert np.max(rel) < 0.01


def test_lower_rho_smaller_beam_mse(default_sweep):
    cfg, sweep = default_sweep
    for solver in cfg.solvers:
        assert sweep.cell(0.2, 10.0, solver).avg_beam_mse < sweep.cell(0.8, 10.0, solver).avg_beam_mse


def test_tradeoff_endpoints(default_sweep):
    cfg, sweep = default_sweep
    rows = harness.run_tradeoff(cfg, sweep=sweep)
    for snr in cfg.snr_grid_db:
        for solver in cfg.solvers:
            sel = {r[0]: r for r in rows if r[1] == snr and r[2] == solver}
            assert sel[0.0][4] < 1e-6 * cfg.p_t**2
            assert sel[1.0][3] == max(r[3] for r in sel.values())


def test_rho0_unfolded_rate_matches_benchmark(default_sweep):
    cfg, sweep = default_sweep
    for snr in cfg.snr_grid_db:
        assert sweep.cell(0.0, snr, "unfolded").avg_sum_rate == pytest.approx(
            sweep.cell(0.0, snr, "pgd").avg_sum_rate, rel=1e-6
        )


def test_reference_pattern_is_the_benchmark(default_models):
    cfg, _ = default_models
    ref = beam_pattern(cfg.scenario().chirp(), cfg.angle_grid).power
    assert np.max(np.abs(ref - cfg.p_t)) < 1e-9
