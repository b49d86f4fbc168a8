import json
import os

import pytest

from gausstree import cantor, cli, verdict
from gausstree.cli import CliConfig, main


def run_cli(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out


def data_files(out):
    return sorted(p.name for p in out.iterdir() if p.name != "manifest.json")


# ---------------------------------------------------------------------------
# criterion

def test_criterion_geometric(tmp_path, capsys):
    code, out = run_cli(["criterion", "--family", "geometric:0.5", "--tree", "binary"], tmp_path)
    text = capsys.readouterr().out
    assert code == cli.EXIT_OK
    assert "decision: bounded" in text and "L=1 " in text and "c-1" in text
    rep = json.loads((out / "verdict_00.json").read_text())
    assert rep["decision"] == "bounded"
    assert data_files(out) == ["table_00_conditions.csv", "verdict_00.json"]


def test_criterion_lacunary(tmp_path, capsys):
    code, _ = run_cli(["criterion", "--family", "remark-lacunary"], tmp_path)
    assert code == 0 and "decision: unbounded" in capsys.readouterr().out


def test_criterion_zero_file(tmp_path, capsys):
    f = tmp_path / "zeros.txt"
    f.write_text("0\n0\n0\n")
    code, out = run_cli(["criterion", "--seq-file", str(f)], tmp_path)
    text = capsys.readouterr().out
    assert code == 0 and "decision: bounded" in text
    rep = json.loads((out / "verdict_00.json").read_text())
    assert rep["evidence"]["Q"]["value"] == 0.0


def test_criterion_general_tree(tmp_path, capsys):
    code, _ = run_cli(["criterion", "--family", "power:2", "--dmax", "4", "--dmin", "2"],
                      tmp_path)
    assert code == 0 and "Thm1.6-general" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# simulate

SIM = ["simulate", "--family", "power:1", "--tree", "binary", "--depth", "10",
       "--replicas", "100", "--seed", "7"]


def test_simulate_rerun_and_workers_identical(tmp_path):
    a = run_cli(SIM, tmp_path, "a")[1]
    b = run_cli(SIM, tmp_path, "b")[1]
    c = run_cli(SIM + ["--workers", "4"], tmp_path, "c")[1]
    name = "table_00_runstats.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["config"]["out"] != mb["config"]["out"]
    for m in (ma, mb):
        m.pop("timing"), m["config"].pop("out")
    assert ma == mb


def test_simulate_zero_table(tmp_path):
    code, out = run_cli(["simulate", "--family", "zero", "--depth", "5", "--replicas", "10"],
                        tmp_path)
    assert code == 0
    lines = (out / "table_00_runstats.csv").read_text().splitlines()
    head = lines[0].split(",")
    assert len(lines) == 6
    for row in lines[1:]:
        r = dict(zip(head, map(float, row.split(","))))
        assert r.pop("replicas") == 10 and r.pop("depth") >= 1
        assert all(v == 0 for v in r.values())


def test_simulate_single_ray_jensen(tmp_path):
    code, out = run_cli(["simulate", "--family", "power:1", "--tree", "constant:1",
                         "--depth", "6", "--replicas", "200"], tmp_path)
    assert code == 0
    lines = (out / "table_00_runstats.csv").read_text().splitlines()
    head = lines[0].split(",")
    for row in lines[1:]:
        r = dict(zip(head, map(float, row.split(","))))
        assert r["mean"] ** 2 <= r["second_moment"]


def test_simulate_budget_exit_3(tmp_path, capsys):
    code, out = run_cli(["simulate", "--family", "spike", "--depth", "40"], tmp_path)
    assert code == cli.EXIT_RESOURCE
    assert "reduce the depth" in capsys.readouterr().err
    assert not out.exists()  # nothing written, not even partially


# ---------------------------------------------------------------------------
# verify

def test_verify_default_passes(tmp_path, capsys):
    code, out = run_cli(["verify"], tmp_path)
    assert code == 0 and "checks passed" in capsys.readouterr().out
    assert data_files(out) == ["verify_results.csv"]


def test_verify_injected_fault(tmp_path, capsys):
    code, _ = run_cli(["verify", "--families", "spike", "--inject", "parseval=1e-6"], tmp_path)
    assert code == cli.EXIT_VIOLATION
    assert "FAIL parseval [spike]" in capsys.readouterr().out


def test_verify_empty_family_list(tmp_path, capsys):
    code, out = run_cli(["verify", "--families"], tmp_path)
    assert code == 0 and "warning" in capsys.readouterr().out
    assert (out / "verify_results.csv").read_text().count("\n") == 1


def test_verify_workers_identical(tmp_path):
    a = run_cli(["verify", "--format", "json"], tmp_path, "a")[1]
    b = run_cli(["verify", "--format", "json", "--workers", "4"], tmp_path, "b")[1]
    assert (a / "verify_results.json").read_bytes() == (b / "verify_results.json").read_bytes()


# ---------------------------------------------------------------------------
# cantor

def test_cantor_spike(tmp_path, capsys):
    code, out = run_cli(["cantor", "--family", "spike", "--format", "json"], tmp_path)
    assert code == 0
    d = json.loads((out / "cantor.json").read_text())
    assert d["entropy_quadrature"] == pytest.approx(0.52924, abs=1e-5)
    assert d["entropy_diff"] <= 1e-8 * (1 + d["entropy_quadrature"])
    assert d["parseval_diff"] == 0.0 or d["parseval_diff"] < 1e-15


def test_cantor_zero(tmp_path):
    code, out = run_cli(["cantor", "--family", "zero", "--format", "json"], tmp_path)
    d = json.loads((out / "cantor.json").read_text())
    assert code == 0
    assert all(v == 0 for k, v in d.items() if k != "K")


def test_cantor_dump(tmp_path, capsys):
    dump = tmp_path / "field.bin"
    code, out = run_cli(["cantor", "--family", "finite:1,1,1", "--dump", str(dump),
                         "--replicas", "4000", "--format", "json"], tmp_path)
    assert code == 0
    x = cantor.load_field(dump)
    assert x.size == 2 ** 3
    d = json.loads((out / "cantor.json").read_text())
    # sample variance of 4000 draws: relative sd sqrt(2/3999) ~ 0.022
    assert d["variance_at_identity"] == pytest.approx(3.0, rel=0.1)


def test_cantor_needs_finite_support(tmp_path):
    code, out = run_cli(["cantor", "--family", "harmonic"], tmp_path)
    assert code == cli.EXIT_USAGE and not out.exists()


def test_cantor_field_budget(tmp_path):
    code, out = run_cli(["cantor", "--family", "spike", "--K", "30", "--dump",
                         str(tmp_path / "f.bin")], tmp_path)
    assert code == cli.EXIT_RESOURCE
    assert not (tmp_path / "f.bin").exists() and not out.exists()


# ---------------------------------------------------------------------------
# report

def test_report(tmp_path, capsys):
    code, out = run_cli(["report", "--family", "geometric:0.5", "--depths", "4,6",
                         "--replicas", "200"], tmp_path)
    assert code == 0 and "ratio spread" in capsys.readouterr().out
    assert data_files(out) == ["table_00_sandwich.csv", "verdict_00.json"]


# ---------------------------------------------------------------------------
# configs and manifests

def test_manifest_round_trip(tmp_path):
    code, out = run_cli(["simulate", "--family", "geometric:0.5", "--depth", "4",
                         "--replicas", "20", "--statistic", "tail_sup", "--tail-n", "2"],
                        tmp_path)
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    cfg = CliConfig.from_dict(man["config"])
    assert cfg.to_dict() == man["config"]
    assert cfg.statistic == "tail_sup" and cfg.tail_n == 2
    assert man["seed"] == cli.DEFAULT_SEED and man["files"] == ["table_00_runstats.csv"]


def test_config_file_flags_win(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"subcommand": "simulate", "family": "power:2", "depth": 3,
                                "replicas": 5, "seed": 1}))
    cfg = cli.config_from_args(["simulate", "--config", str(conf), "--seed", "9"])
    assert cfg.family == "power:2" and cfg.depth == 3 and cfg.seed == 9
    # a manifest config replays the original run
    code, out = run_cli(["simulate", "--config", str(conf)], tmp_path, "a")
    man = json.loads((out / "manifest.json").read_text())
    conf2 = tmp_path / "c2.json"
    conf2.write_text(json.dumps(man["config"]))
    code2, out2 = run_cli(["simulate", "--config", str(conf2)], tmp_path, "b")
    assert code == code2 == 0
    assert (out / "table_00_runstats.csv").read_bytes() == \
        (out2 / "table_00_runstats.csv").read_bytes()


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert main(["criterion", "--family", "spike"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


@pytest.mark.parametrize("argv", [
    ["bogus"],
    [],
    ["criterion"],
    ["criterion", "--family", "nonsense"],
    ["criterion", "--family", "spike", "--seq-file", "x.txt"],
    ["simulate", "--family", "spike", "--replicas", "0"],
    ["simulate", "--family", "spike", "--statistic", "median"],
    ["criterion", "--family", "spike", "--dmax", "2"],
    ["report", "--family", "spike", "--depths", "a,b"],
    ["verify", "--inject", "parseval"],
    ["criterion", "--family", "spike", "--format", "xml"],
])
def test_usage_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "o")] if argv else argv) == cli.EXIT_USAGE
    assert not (tmp_path / "o").exists()


def test_config_errors(tmp_path):
    assert main(["criterion", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_RESOURCE
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["criterion", "--config", str(bad)]) == cli.EXIT_USAGE
    bad.write_text(json.dumps({"subcommand": "criterion", "nope": 1}))
    assert main(["criterion", "--config", str(bad)]) == cli.EXIT_USAGE
    bad.write_text(json.dumps({"subcommand": "simulate"}))
    assert main(["criterion", "--config", str(bad)]) == cli.EXIT_USAGE
    assert main(["criterion", "--seq-file", str(tmp_path / "none.txt")]) == cli.EXIT_RESOURCE


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["criterion", "--family", "spike", "--out", str(blocker / "o")]) == \
        cli.EXIT_RESOURCE


def test_failed_rename_leaves_no_partial_file(tmp_path, monkeypatch):
    def boom(src, dst):
        raise OSError("disk full")
    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(Exception):
        verdict.atomic_write(tmp_path / "t.csv", "a,b\n")
    assert list(tmp_path.iterdir()) == []


def test_python_module_entry_point(tmp_path):
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "gausstree", "criterion", "--family", "harmonic",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0 and "unbounded" in r.stdout
    r = subprocess.run([sys.executable, "-m", "gausstree", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and r.stdout.startswith("gausstree")
