import json
from importlib import resources

import pytest

from ucr_lab import cli


def _fixture(name):
    return json.loads(resources.files("ucr_lab").joinpath(f"fixtures/{name}").read_text())


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _small_mixed(job="spectrum", **extra):
    cfg = {
        "job": job,
        "seed": 4,
        "channel": {"type": "mixed_bsc", "alpha": 0.3, "p_a": 0.25, "p_b": 0.05},
        "inputs": [{"type": "uniform", "alphabet": 2}],
        "blocklengths": [100, 200],
        "trials": 500,
        "band": 0.03,
    }
    cfg.update(extra)
    return cfg


def test_bounds_on_noiseless_fixture(tmp_path, capsys):
    cfg = _fixture("dsbs_noiseless.json")
    code = cli.run(["bounds", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "bounds.json").read_text())
    assert doc["schema"] == "ucr-lab/1" and doc["job"] == "bounds"
    assert doc["lower_bits"] == pytest.approx(1.0, abs=1e-6)
    assert doc["upper_bits"] == pytest.approx(1.0, abs=1e-6)
    assert "lower=1" in capsys.readouterr().out


def test_verify_default_suite_passes(tmp_path):
    cfg = {"seed": 3, "fixtures_per_lemma": 5}
    assert cli.run(["verify", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["failures"] == 0 and len(doc["suites"]) == 10
    assert all(s["fixtures"] == 5 for s in doc["suites"].values())


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "verify_suite", lambda seed, per: {"suites": {}, "failures": 1, "passed": False})
    assert cli.run(["verify", "--config", _write(tmp_path, {"seed": 0}), "--out", str(tmp_path)]) == 4


def test_config_errors(tmp_path):
    out = ["--out", str(tmp_path)]
    assert cli.run(["bounds"] + out) == 2
    bad = _small_mixed(extra_key=1)
    assert cli.run(["spectrum", "--config", _write(tmp_path, bad)] + out) == 2
    wrong_job = _small_mixed(job="bounds", epsilon=0.1)
    assert cli.run(["spectrum", "--config", _write(tmp_path, wrong_job)] + out) == 2
    no_seed = _small_mixed(epsilon=0.1)
    del no_seed["seed"]
    assert cli.run(["spectrum", "--config", _write(tmp_path, no_seed)] + out) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert cli.run(["spectrum", "--config", str(tmp_path / "broken.json")] + out) == 2
    unknown = _small_mixed(epsilon=0.1, channel={"type": "mixed_bsc", "alpha": 1.5, "p_a": 0.1, "p_b": 0.2})
    assert cli.run(["spectrum", "--config", _write(tmp_path, unknown)] + out) == 2


def test_unsorted_grid_is_a_config_error(tmp_path):
    cfg = _small_mixed(job="sweep", source={"type": "dsbs", "p": 0.11}, epsilon_grid=[0.5, 0.1])
    assert cli.run(["sweep", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_numeric_failure_exit_code(tmp_path):
    cfg = _fixture("protocol_xy.json")
    cfg.update({"N1": 300, "N2": 300, "trials": 10})
    assert cli.run(["simulate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 3


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, _small_mixed(epsilon=[0.1, 0.3]))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["spectrum", "--config", cfg, "--out", str(a)]) == 0
    assert cli.run(["spectrum", "--config", cfg, "--out", str(b), "--threads", "3"]) == 0
    for name in ("spectrum.json", "spectrum_samples_0.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_override(tmp_path):
    cfg = _write(tmp_path, _small_mixed(epsilon=0.3))
    cli.run(["spectrum", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.run(["spectrum", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
    doc = json.loads((tmp_path / "b" / "spectrum.json").read_text())
    assert doc["seed"] == 99
    assert (tmp_path / "a" / "spectrum_samples_0.csv").read_bytes() != (tmp_path / "b" / "spectrum_samples_0.csv").read_bytes()


def test_sweep_rows_are_monotone(tmp_path):
    grid = [round(0.05 * k, 2) for k in range(1, 20)]
    cfg = _small_mixed(job="sweep", source={"type": "dsbs", "p": 0.11}, epsilon_grid=grid, card_u=3)
    assert cli.run(["sweep", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "sweep.json").read_text())["rows"]
    for key in ("l_hat", "u_hat", "lower_bits", "upper_bits"):
        vals = [r[key] for r in rows]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:])), key
    csv = (tmp_path / "sweep.csv").read_text().splitlines()
    assert csv[0] == "epsilon,l_hat,u_hat,lower_bits,upper_bits" and len(csv) == 20


def test_sweep_noiseless_is_constant_and_single_row(tmp_path):
    cfg = {
        "seed": 0,
        "source": {"type": "dsbs", "p": 0.11},
        "channel": {"type": "noiseless"},
        "blocklengths": [20],
        "trials": 100,
        "epsilon_grid": [0.2, 0.4, 0.6],
        "card_u": 3,
    }
    assert cli.run(["sweep", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "sweep.json").read_text())["rows"]
    assert [r["lower_bits"] for r in rows] == pytest.approx([1.0] * 3)
    cfg["epsilon_grid"] = [0.5]
    assert cli.run(["sweep", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    assert len(json.loads((tmp_path / "sweep.json").read_text())["rows"]) == 1


def test_simulate_with_event_log(tmp_path):
    cfg = _fixture("protocol_xy.json")
    cfg.update({"trials": 200, "event_log": True, "n": 100})
    assert cli.run(["simulate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "simulate.json").read_text())
    assert doc["key_size"] == 33
    assert any("unreliable" in w for w in doc["warnings"])
    assert len((tmp_path / doc["events_csv"]).read_text().splitlines()) == 201


def test_simulate_identity_aux_shorthand(tmp_path):
    cfg = _fixture("protocol_xy.json")
    cfg.update({"trials": 50, "n": 40, "aux": {"type": "identity", "alphabet": 2}})
    assert cli.run(["simulate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0


def test_shipped_fixtures_validate():
    for name, job in (
        ("dsbs_noiseless.json", "bounds"),
        ("mixed_bsc.json", "spectrum"),
        ("mixed_bsc_sweep.json", "sweep"),
        ("protocol_xy.json", "simulate"),
        ("verify.json", "verify"),
    ):
        path = str(resources.files("ucr_lab").joinpath(f"fixtures/{name}"))
        assert cli.load_config(job, path, None)["seed"] >= 0
