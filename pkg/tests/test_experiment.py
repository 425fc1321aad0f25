import numpy as np
import pytest

from beamalloc.cli import main
from beamalloc.experiment import (
    ConfigError,
    gen_dataset,
    eval_model,
    make_trial,
    parse_config,
    run_campaign,
    train_and_eval,
    train_models,
)
from beamalloc.config import SystemConfig
from beamalloc.surrogate import load_dataset

SMALL_CONFIG = """
# desk-scale smoke campaign
system.n_beams = 7
system.n_users = 7
qos.sweep = 300, 900
strategies = equal, sumopt, satisset, joint
precoders = zf, rzf
n_trials = 3
base_seed = 11
output.dir = {out}
surrogate.n_train = 40
surrogate.n_test = 10
surrogate.xi_mbps = 250
surrogate.hidden = 16
surrogate.epochs = 8
surrogate.batch_size = 32
"""


def _write_config(tmp_path, text=None, **fmt):
    p = tmp_path / "run.cfg"
    p.write_text((text or SMALL_CONFIG).format(out=tmp_path / "out", **fmt))
    return str(p)


def test_parse_config_round_trip(tmp_path):
    cfg = parse_config(_write_config(tmp_path))
    assert cfg.system.n_beams == 7
    assert cfg.qos_sweep == (300.0, 900.0)
    assert cfg.strategies == ("equal", "sumopt", "satisset", "joint")
    assert cfg.n_trials == 3
    assert cfg.base_seed == 11
    assert cfg.surrogate.hidden == (16,)
    assert cfg.surrogate.n_train == 40


def test_parse_config_unknown_key_is_line_precise(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("system.n_beams = 7\nsystem.bogus = 1\n")
    with pytest.raises(ConfigError, match=r"bad\.cfg:2.*bogus"):
        parse_config(str(p))


def test_parse_config_rejects_garbage_and_missing(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("just some words\n")
    with pytest.raises(ConfigError, match=r"bad\.cfg:1"):
        parse_config(str(p))
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "nope.cfg"))


def test_parse_config_validates_strategy(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("strategies = equal, turbo\n")
    with pytest.raises(ConfigError, match="turbo"):
        parse_config(str(p))


def test_make_trial_deterministic():
    sys_cfg = SystemConfig()
    t1 = make_trial(sys_cfg, 5)
    t2 = make_trial(sys_cfg, 5)
    assert np.array_equal(t1.channel.H, t2.channel.H)
    assert t1.seed == 5


def test_campaign_outputs_and_determinism(tmp_path):
    cfg = parse_config(_write_config(tmp_path))
    out = run_campaign(cfg)
    per_trial = open(out["per_trial"]).read()
    agg = open(out["aggregate"]).read()
    lines = per_trial.strip().splitlines()
    # golden schema, version 1
    assert lines[0] == (
        "trial,seed,precoder,strategy,xi_mbps,sum_rate_mbps,"
        "n_satisfied,congested,jain,lambda_obj,runtime_ms"
    )
    # trials x precoders x sweep points x strategies
    assert len(lines) - 1 == 3 * 2 * 2 * 4
    assert agg.splitlines()[0] == (
        "precoder,strategy,xi_mbps,n_trials,congestion_prob,satisfaction_prob,"
        "mean_sum_rate_mbps,mean_sum_rate_satisfied_mbps,mean_sum_rate_unsatisfied_mbps,"
        "mean_jain,mean_lambda"
    )
    assert len(agg.strip().splitlines()) - 1 == 2 * 2 * 4
    seeds = {line.split(",")[1] for line in lines[1:]}
    assert seeds == {"11", "12", "13"}
    # timing is off by default, so reruns are byte-identical
    assert all(line.rsplit(",", 1)[1] == "0" for line in lines[1:])
    rerun = run_campaign(cfg)
    assert open(rerun["per_trial"]).read() == per_trial
    assert open(rerun["aggregate"]).read() == agg


def test_campaign_records_timing_when_asked(tmp_path):
    text = SMALL_CONFIG + "output.record_timing = true\n"
    cfg = parse_config(_write_config(tmp_path, text))
    cfg.n_trials = 1
    out = run_campaign(cfg)
    times = [
        float(line.rsplit(",", 1)[1])
        for line in open(out["per_trial"]).read().strip().splitlines()[1:]
    ]
    assert any(t > 0 for t in times)


def test_gen_dataset_and_labels(tmp_path):
    cfg = parse_config(_write_config(tmp_path))
    cfg.surrogate.n_train = 4
    cfg.surrogate.n_test = 2
    path = gen_dataset(cfg)
    records = load_dataset(path)
    assert len(records) == 6 * 2  # both precoders
    k, n = cfg.system.n_users, cfg.system.n_beams
    for r in records:
        assert r.x.shape == (k * n,)
        assert np.all(r.x >= 0)
        assert r.p_star.sum() <= cfg.system.p_max_w * (1 + 1e-9)
        assert r.strategy in ("joint_zf", "joint_rzf")
    assert {r.strategy for r in records} == {"joint_zf", "joint_rzf"}
    # regeneration is identical
    again = load_dataset(gen_dataset(cfg))
    assert all(np.array_equal(a.x, b.x) for a, b in zip(records, again))


def test_train_and_eval_pipeline(tmp_path):
    text = SMALL_CONFIG.replace("precoders = zf, rzf", "precoders = zf")
    cfg = parse_config(_write_config(tmp_path, text))
    gen_dataset(cfg)
    trained = train_models(cfg)
    assert set(trained) == {"joint_zf"}
    model_path, report = trained["joint_zf"]
    assert report.train_losses
    eval_path = eval_model(cfg, model_path)
    lines = open(eval_path).read().strip().splitlines()
    assert lines[0] == "method,qos,time_ms,sum_rate,satisfaction_pct"
    rows = [line.split(",") for line in lines[1:]]
    assert {r[0] for r in rows} == {"model_zf", "surrogate_zf"}
    for r in rows:
        assert float(r[1]) == 250.0
        assert float(r[2]) > 0  # time_ms
        assert 0.0 <= float(r[4]) <= 100.0


def test_cli_run_and_exit_codes(tmp_path, capsys):
    cfg_path = _write_config(tmp_path)
    assert main(["run", "--config", cfg_path, "--trials", "1"]) == 0
    assert (tmp_path / "out" / "per_trial.csv").exists()

    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense here\n")
    assert main(["run", "--config", str(bad)]) == 1
    assert main(["eval", "--model", str(tmp_path / "missing.json"), "--config", cfg_path]) == 2
    capsys.readouterr()


def test_cli_overrides(tmp_path):
    cfg_path = _write_config(tmp_path)
    alt = tmp_path / "alt"
    assert main(["run", "--config", cfg_path, "--trials", "2", "--seed", "99", "--out", str(alt)]) == 0
    lines = open(alt / "per_trial.csv").read().strip().splitlines()
    assert {line.split(",")[1] for line in lines[1:]} == {"99", "100"}


def test_per_user_demand_point(tmp_path):
    text = SMALL_CONFIG + "qos.per_user = 200, 200, 400, 400, 600, 600, 800\n"
    cfg = parse_config(_write_config(tmp_path, text))
    cfg.n_trials = 1
    out = run_campaign(cfg)
    lines = open(out["per_trial"]).read().strip().splitlines()
    # two sweep points plus the per-user list
    assert len(lines) - 1 == 1 * 2 * 3 * 4
    xi_values = {line.split(",")[4] for line in lines[1:]}
    assert "457.1428571" in xi_values  # mean of the per-user list


def test_train_and_eval_convenience(tmp_path):
    text = SMALL_CONFIG.replace("precoders = zf, rzf", "precoders = rzf")
    cfg = parse_config(_write_config(tmp_path, text))
    gen_dataset(cfg)
    out = train_and_eval(cfg)
    assert set(out) == {"joint_rzf"}
    entry = out["joint_rzf"]
    assert (tmp_path / "out" / "model_joint_rzf.json").exists()
    assert (tmp_path / "out" / "eval_rzf.csv").exists()
    assert entry["report"].train_losses


def test_sum_rate_split_adds_up(tmp_path):
    cfg = parse_config(_write_config(tmp_path))
    cfg.n_trials = 2
    for rec in run_campaign(cfg)["records"]:
        assert rec.sum_rate_satisfied_mbps + rec.sum_rate_unsatisfied_mbps == pytest.approx(
            rec.sum_rate_mbps, rel=1e-12
        )
