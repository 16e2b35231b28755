import json

import pytest

from chtbench.cli import dispatch, load_config


def run_args(tmp_path, *extra):
    return ["run", "--problem", "g24", "--runs", "2", "--max-fes", "400", "--seed", "5",
            "--out", str(tmp_path), "--jobs", "1", *extra]


def test_run_writes_outputs(tmp_path, capsys):
    assert dispatch(run_args(tmp_path)) == 0
    assert (tmp_path / "results_G24_qpc.csv").read_text().startswith("problem,cht,run_index")
    data = json.loads((tmp_path / "aggregate_G24_qpc.json").read_text())
    assert data["fr"] == 1.0
    assert "FR=100%" in capsys.readouterr().out


def test_unknown_problem_exit_code(capsys):
    assert dispatch(["run", "--problem", "nosuch"]) == 2
    assert "nosuch" in capsys.readouterr().err


def test_missing_problem_exit_code():
    assert dispatch(["run", "--runs", "1"]) == 2


def test_unknown_subcommand_exit_code():
    assert dispatch(["frobnicate"]) == 2


def test_bad_values_exit_code(tmp_path):
    assert dispatch(run_args(tmp_path, "--max-fes", "5")) == 2
    assert dispatch(run_args(tmp_path, "--xi-max", "2")) == 2
    assert dispatch(["relax", "--c", "1"]) == 2


def test_malformed_config_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "problem": "g24",\n  "runs": 2,,\n}')
    assert dispatch(["run", "--config", str(cfg)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_config_unknown_field_and_wrong_type(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "g24", "de": {"npop": 10}}))
    assert dispatch(["run", "--config", str(cfg)]) == 2
    assert "de.npop" in capsys.readouterr().err
    cfg.write_text(json.dumps({"problem": "g24", "cht": {"xi_max": "big"}}))
    assert dispatch(["run", "--config", str(cfg)]) == 2
    assert "cht.xi_max" in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "g08", "cht": {"cht": "frules"},
                               "de": {"np": 10, "f": 0.5, "cr": 0.8, "xover": "bin", "max_fes": 300},
                               "runs": 3, "seed": 1}))
    flat = load_config(cfg)
    assert flat == {"problem": "g08", "kind": "frules", "pop_size": 10, "scale_factor": 0.5,
                    "crossover_rate": 0.8, "crossover_kind": "bin", "max_fes": 300, "runs": 3, "seed": 1}
    assert dispatch(["run", "--config", str(cfg), "--runs", "2", "--out", str(tmp_path), "--jobs", "1"]) == 0
    lines = (tmp_path / "results_G08_frules.csv").read_text().splitlines()
    assert len(lines) == 3


def test_inline_overrides(tmp_path):
    assert dispatch(run_args(tmp_path, "--set", "de.np=10", "--set", "cht.cht=eps", "--set", "cht.eps=0.1")) == 0
    assert (tmp_path / "results_G24_eps.csv").exists()
    assert dispatch(run_args(tmp_path, "--set", "de.np=ten")) == 2
    assert dispatch(run_args(tmp_path, "--set", "novalue")) == 2


def test_env_output_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("CHTBENCH_OUT", str(tmp_path / "env"))
    args = ["run", "--problem", "g24", "--runs", "1", "--max-fes", "100", "--jobs", "1"]
    assert dispatch(args) == 0
    assert (tmp_path / "env" / "results_G24_qpc.csv").exists()


def test_verify_and_relax_exit_codes(capsys):
    assert dispatch(["verify", "--pairs", "500", "--problems", "g24,ring5"]) == 0
    assert "[PASS]" in capsys.readouterr().out
    assert dispatch(["relax", "--points", "20000"]) == 0


def test_relax_failure_exit_code(monkeypatch):
    from chtbench import harness

    real = harness.verify_relaxation

    def strict(*args, **kw):
        rep = real(*args, **kw)
        return harness.RelaxReport(rep.n, rep.c, rep.xi, 1.0, rep.mu, rep.bound, rep.n, 0)

    monkeypatch.setattr(harness, "verify_relaxation", strict)
    assert dispatch(["relax", "--points", "1000"]) == 1


def test_verify_failure_exit_code(monkeypatch):
    from chtbench import harness

    monkeypatch.setattr(harness, "pi_values", lambda f, v, ctx: -f)
    assert dispatch(["verify", "--pairs", "200", "--problems", "g24"]) == 1


def test_sortbench_and_sweep_and_list(tmp_path, capsys):
    assert dispatch(["sortbench", "--sizes", "10:30:10", "--repeats", "1", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "sortbench.csv").read_text().splitlines()) == 4
    assert dispatch(["sweep", "--problem", "g24", "--max-fes", "200", "--xi-values", "1,0.01",
                     "--out", str(tmp_path), "--jobs", "1"]) == 0
    assert (tmp_path / "trace_G24_xi0.01.csv").exists()
    capsys.readouterr()
    assert dispatch(["list"]) == 0
    out = capsys.readouterr().out
    assert "RING5" in out and "dim=5" in out and "-5.508013271593" in out


@pytest.mark.parametrize("bad", ["--sizes=a:b:c", "--sizes=1"])
def test_sortbench_bad_sizes(bad):
    assert dispatch(["sortbench", bad]) == 2


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "chtbench", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "G24" in proc.stdout
