import csv
import json
import subprocess
import sys

import pytest

from nsl.cli import main
from nsl.harness import COMPARE_COLUMNS, CONVERGE_COLUMNS, ERROR_COLUMNS, RunConfig

# cheap NSL overrides for plumbing tests
FAST = ["--init-epochs", "20", "--iter-epochs", "2", "--nc", "200", "--layers", "6",
        "--nprobe", "2000", "--threads", "1"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def error_record(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def test_missing_scenario(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path)]) == 2
    rec = error_record(capsys)
    assert rec["kind"] == "config" and "scenario" in rec["message"]


def test_unknown_flag_and_bad_values(tmp_path, capsys):
    assert main(["run", "--scenario", "constant_1d", "--bogus"]) == 2
    error_record(capsys)
    assert main(["run", "--scenario", "constant_1d", "--nt", "-1", "--out", str(tmp_path)]) == 2
    error_record(capsys)
    assert main(["run", "--scenario", "rotating_2d", "--dim", "3", "--out", str(tmp_path)]) == 2
    error_record(capsys)
    assert main(["run", "--scenario", "rotating_2d", "--sigma", "0.1", "--out", str(tmp_path)]) == 2
    error_record(capsys)


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[scenario]\nname = 'constant_1d'\ncolour = 3\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "scenario.colour" in error_record(capsys)["message"]
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    error_record(capsys)


def test_duplicate_nt_rejected(tmp_path, capsys):
    code = main(["converge", "--scenario", "heat_1d", "--solver", "classical",
                 "--nt", "4,8,8", "--out", str(tmp_path)])
    assert code == 2
    assert "duplicate" in error_record(capsys)["message"]
    assert main(["converge", "--scenario", "heat_1d", "--nt", "4,8", "--out", str(tmp_path)]) == 2


def test_converge_heat_slope(tmp_path):
    assert main(["converge", "--scenario", "heat_1d", "--solver", "classical",
                 "--nt", "4,8,16,32", "--nx", "512", "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "converge.csv")
    assert tuple(table[0]) == CONVERGE_COLUMNS == ("n_t", "e_l2", "e_linf", "wall_ms")
    assert [int(r[0]) for r in table[1:]] == [4, 8, 16, 32]
    slope = json.loads((tmp_path / "slope.json").read_text())["slope_e_l2"]
    assert -1.3 <= slope <= -0.7


def test_converge_nsl_plumbing(tmp_path):
    assert main(["converge", "--scenario", "ad_periodic", "--dim", "1", "--nt", "1,2,3",
                 "--out", str(tmp_path)] + FAST) == 0
    assert len(rows(tmp_path / "converge.csv")) == 4
    assert json.loads((tmp_path / "manifest.json").read_text())["n_t_values"] == [1, 2, 3]


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "r"
    assert main(["run", "--scenario", "ad_periodic", "--dim", "1", "--nt", "2", "--out", str(out)]
                + FAST) == 0
    for name in ("errors.csv", "diagnostics.csv", "steps.csv", "manifest.json", "plot_errors.py",
                 "checkpoints/step_0000.bin", "checkpoints/step_0002.bin"):
        assert (out / name).exists(), name
    table = rows(out / "errors.csv")
    assert tuple(table[0]) == ERROR_COLUMNS
    assert [int(r[4]) for r in table[1:]] == [0, 1, 2]
    raw = (out / "errors.csv").read_bytes()
    assert raw.endswith(b"\n") and b"\r" not in raw
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["scenario"]["name"] == "ad_periodic"
    assert manifest["config"]["nsl"]["seed"] == 0


def test_run_is_byte_reproducible(tmp_path):
    args = ["run", "--scenario", "constant_1d", "--nt", "4", "--seed", "7", "--threads", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "errors.csv").read_bytes()
    assert a == (tmp_path / "b" / "errors.csv").read_bytes()
    assert (tmp_path / "a" / "diagnostics.csv").exists()


def test_manifest_reproduces_run(tmp_path):
    first = tmp_path / "first"
    assert main(["run", "--scenario", "ad_periodic", "--dim", "2", "--nt", "3", "--seed", "3",
                 "--out", str(first)] + FAST) == 0
    again = tmp_path / "again"
    assert main(["run", "--config", str(first / "manifest.json"), "--out", str(again)]) == 0
    assert (first / "errors.csv").read_bytes() == (again / "errors.csv").read_bytes()


def test_periodic_run_accuracy(tmp_path):
    assert main(["run", "--scenario", "ad_periodic", "--dim", "2", "--nt", "16",
                 "--out", str(tmp_path)]) == 0
    final = rows(tmp_path / "errors.csv")[-1]
    assert int(final[4]) == 16 and float(final[6]) < 1e-2


def test_toml_config_with_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[scenario]\nname = 'ad_periodic'\ndim = 1\n\n[nsl]\nseed = 5\nn_t = 2\n"
                   "init_epochs = 20\niter_epochs = 2\nn_collocation = 200\nlayers = [6]\n"
                   "n_probe = 2000\n\n[output]\nthreads = 1\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--seed", "6", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["nsl"]["seed"] == 6
    assert manifest["config"]["nsl"]["n_t"] == 2
    rc = RunConfig.from_file(out / "manifest.json")
    assert rc.scenario == "ad_periodic" and rc.layers == (6,)


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("NSL_OUT_DIR", str(tmp_path / "env"))
    assert main(["converge", "--scenario", "heat_1d", "--solver", "classical",
                 "--nt", "2,4,8", "--nx", "64"]) == 0
    assert (tmp_path / "env" / "converge.csv").exists()


def test_compare_classical_rows(tmp_path):
    assert main(["compare-sl", "--scenario", "ad_gaussian", "--dims", "2", "--nx", "64",
                 "--classical-only", "--out", str(tmp_path / "g")]) == 0
    table = rows(tmp_path / "g" / "compare.csv")
    assert tuple(table[0]) == COMPARE_COLUMNS
    e_l2 = float(table[1][COMPARE_COLUMNS.index("e_l2")])
    assert abs(e_l2 - 9.39e-4) <= 0.25 * 9.39e-4
    assert main(["compare-sl", "--scenario", "ad_periodic", "--dims", "1", "--nx", "36",
                 "--nt", "20", "--classical-only", "--out", str(tmp_path / "p")]) == 0
    e_l2 = float(rows(tmp_path / "p" / "compare.csv")[1][COMPARE_COLUMNS.index("e_l2")])
    assert abs(e_l2 - 1.57e-3) <= 0.25 * 1.57e-3


def test_compare_pairs_and_records_failures(tmp_path):
    assert main(["compare-sl", "--scenario", "ad_gaussian", "--dims", "2,6", "--nx", "16,40",
                 "--out", str(tmp_path)] + FAST) == 0
    table = [dict(zip(COMPARE_COLUMNS, r)) for r in rows(tmp_path / "compare.csv")[1:]]
    d2 = [r for r in table if r["d"] == "2"]
    assert {r["solver"] for r in d2} == {"classical", "nsl"}
    assert len({(r["scenario"], r["seed"]) for r in d2}) == 1
    big = [r for r in table if r["d"] == "6" and r["solver"] == "classical"]
    assert big[0]["status"] != "ok" and big[0]["message"]
    assert [r["status"] for r in table if r["d"] == "6" and r["solver"] == "nsl"] == ["ok"]


def test_vlasov_reference_command(tmp_path):
    assert main(["vlasov-ref", "--nx", "32", "--nt", "30", "--out", str(tmp_path)]) == 0
    masses = [float(r[1]) for r in rows(tmp_path / "vlasov_mass.csv")[1:]]
    assert len(masses) == 4
    assert max(masses) - min(masses) < 1e-10
    assert (tmp_path / "vlasov_t4.500.grid").exists()
    assert main(["vlasov-ref", "--nx", "2", "--out", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nsl.cli", "run"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip())["status"] == "error"


@pytest.mark.parametrize("bad", ["--nt=a,b", "--dims=x"])
def test_list_parsing_errors(bad, capsys):
    assert main(["compare-sl" if "dims" in bad else "converge", "--scenario", "heat_1d", bad]) == 2
    error_record(capsys)
