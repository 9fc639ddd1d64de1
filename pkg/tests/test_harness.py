import io
import json
import os

import numpy as np
import pytest

from rsma_gmi import cli
from rsma_gmi.errors import ConfigError, DomainError
from rsma_gmi.harness import (
    CSV_HEADER,
    ExperimentConfig,
    SchemeSpec,
    default_config_path,
    load_config,
    parse_config,
    run_convergence_trace,
    run_sweep,
)
from rsma_gmi.optimizer import OptimizerConfig

SMALL = """
[experiment]
nt = 2
k_users = 2
snr_db = 10
sigma_e2 = 0.05
n_trials = 3
master_seed = 7
schemes = RSMA, OMA, SDMA/no_info

[optimizer]
n_random = 50
"""


def small_cfg(**kw):
    return parse_config(SMALL).__class__(**{**parse_config(SMALL).__dict__, **kw})


def test_bundled_configs_parse():
    cfg = load_config(default_config_path())
    assert cfg.snr_db_list == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    assert cfg.sigma_e2_list == (0.05,)
    assert (cfg.nt, cfg.k_users, cfg.n_trials) == (2, 2, 50)
    assert SchemeSpec("OMA", True) in cfg.schemes
    here = os.path.dirname(default_config_path())
    for name in ("fig2.cfg", "fig4.cfg"):
        load_config(os.path.join(here, name))


def test_parse_ranges_and_schemes():
    cfg = parse_config(SMALL.replace("snr_db = 10", "snr_db = 0:10:5"))
    assert cfg.snr_db_list == (0.0, 5.0, 10.0)
    assert [s.label for s in cfg.schemes] == ["RSMA", "OMA", "SDMA/no_info"]
    assert cfg.optimizer.n_random == 50
    assert cfg.p_t(20) == pytest.approx(100.0)


@pytest.mark.parametrize(
    "old,new,field,line",
    [
        ("nt = 2", "nt = two", "experiment.nt", 3),
        ("sigma_e2 = 0.05", "sigma_e2 = 1.5", "experiment.sigma_e2", 6),
        ("schemes = RSMA, OMA, SDMA/no_info", "schemes = RSMA, FOO", "experiment.schemes", 9),
    ],
)
def test_field_errors_name_line_and_field(old, new, field, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(SMALL.replace(old, new))
    assert exc.value.field == field
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value) and field in str(exc.value)


def test_missing_required_field():
    with pytest.raises(ConfigError, match="experiment.n_trials"):
        parse_config(SMALL.replace("n_trials = 3", ""))
    with pytest.raises(ConfigError):
        parse_config("nt = 2\n")


def test_experiment_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(2, 2, (10.0,), (0.05,), 0, 1, (SchemeSpec("RSMA"),))
    with pytest.raises(DomainError):
        ExperimentConfig(2, 2, (10.0,), (1.0,), 1, 1, (SchemeSpec("RSMA"),))


def test_single_row_sweep_and_csv(tmp_path):
    out = tmp_path / "s.csv"
    cfg = small_cfg(output_path=str(out))
    res = run_sweep(cfg)
    lines = out.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 3
    row = res.row("RSMA", 10.0, 0.05)
    samples = res.samples[("RSMA", 10.0, 0.05)]
    assert row.n_trials == 3 and row.failures == 0
    assert row.mean_sum_rate == pytest.approx(float(np.mean(samples)), rel=1e-12)
    assert row.stderr == pytest.approx(float(np.std(samples, ddof=1) / np.sqrt(3)))
    assert res.row("OMA", 10.0, 0.05).mean_iters == 0
    assert res.row("SDMA", 10.0, 0.05, no_info=True).no_info
    assert lines[3].startswith("SDMA,1,10,0.05,")


def test_sweep_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_sweep(small_cfg(output_path=str(a)))
    run_sweep(small_cfg(output_path=str(b), workers=2))
    assert a.read_bytes() == b.read_bytes()


def test_jsonl_output(tmp_path):
    out = tmp_path / "s.jsonl"
    run_sweep(small_cfg(output_path=str(out), output_format="jsonl", n_trials=1))
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["scheme"] for r in recs] == ["RSMA", "OMA", "SDMA"]
    assert recs[2]["no_info"] is True
    assert set(recs[0]) == set(CSV_HEADER.split(","))


def test_unwritable_path_fails_before_work(tmp_path, monkeypatch):
    import rsma_gmi.harness as harness

    def boom(*a, **k):
        raise AssertionError("computation started")

    monkeypatch.setattr(harness, "_trial_records", boom)
    with pytest.raises(OSError):
        run_sweep(small_cfg(output_path=str(tmp_path / "missing" / "x.csv")))


def test_convergence_trace_cap(tmp_path):
    cfg = small_cfg(optimizer=OptimizerConfig(max_iters=1, n_random=10), n_trials=2, output_path=str(tmp_path / "t.csv"))
    traces = run_convergence_trace(cfg, [(2, 2)])
    assert [len(t) for t in traces[(2, 2)]] == [1, 1]
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "nt,k,trial,iteration,objective" and len(lines) == 3


def test_convergence_trace_monotone():
    cfg = small_cfg(n_trials=2, optimizer=OptimizerConfig(n_random=50))
    traces = run_convergence_trace(cfg, [(2, 2), (3, 2)])
    for per_trial in traces.values():
        for t in per_trial:
            assert np.all(np.diff(t) >= -1e-6)


# CLI


def test_cli_missing_config(tmp_path):
    assert cli.main(["sweep", "--config", str(tmp_path / "nope.cfg")], out=io.StringIO()) == cli.EXIT_CONFIG


def test_cli_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(SMALL.replace("nt = 2", "nt = x"))
    assert cli.main(["sweep", "--config", str(bad)], out=io.StringIO()) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 3" in err and "experiment.nt" in err


def test_cli_unwritable_output(tmp_path):
    good = tmp_path / "good.cfg"
    good.write_text(SMALL)
    code = cli.main(["sweep", "--config", str(good), "--out", str(tmp_path / "no" / "x.csv")], out=io.StringIO())
    assert code == cli.EXIT_IO


def test_cli_sweep_to_stdout(tmp_path):
    good = tmp_path / "good.cfg"
    good.write_text(SMALL)
    buf = io.StringIO()
    assert cli.main(["sweep", "--config", str(good), "--trials", "1"], out=buf) == cli.EXIT_OK
    assert buf.getvalue().splitlines()[0] == CSV_HEADER


def test_cli_single_deterministic():
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        assert cli.main(["single", "--n-random", "50", "--seed", "3"], out=buf) == cli.EXIT_OK
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]
    assert "R_s" in outs[0] and "P_c=" in outs[0]


def test_cli_single_bad_argument():
    assert cli.main(["single", "--sigma-e2", "1.5"], out=io.StringIO()) == cli.EXIT_CONFIG
    assert cli.main(["single", "--scheme", "ZZZ"], out=io.StringIO()) != cli.EXIT_OK


def test_cli_converge(tmp_path):
    good = tmp_path / "good.cfg"
    good.write_text(SMALL)
    buf = io.StringIO()
    code = cli.main(["converge", "--config", str(good), "--pairs", "2x2", "--trials", "1"], out=buf)
    assert code == cli.EXIT_OK
    assert buf.getvalue().startswith("Nt=2 K=2:")
