import subprocess
import sys

import pytest

from abssgd.cli import main
from abssgd.runner import read_csv


def write_cfg(path, **kw):
    base = dict(seed=7, iterations=20, samples=200, theory_report="false")
    base.update(kw)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


def test_run_writes_csv_and_summary(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "abs.cfg")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "abs.csv")]) == 0
    out = capsys.readouterr().out
    assert "policy=abs" in out and "final_loss=" in out
    assert len(read_csv(tmp_path / "abs.csv")) == 20
    assert (tmp_path / "abs.summary.txt").read_text() == out


def test_compare_writes_table_and_runs(tmp_path, capsys):
    paths = [str(write_cfg(tmp_path / f"{p}.cfg", policy=p, threshold=0.69)) for p in ("abs", "bsp", "ssp")]
    runs = tmp_path / "runs"
    assert main(["compare", "--configs", *paths, "--out", str(tmp_path / "cmp.csv"), "--runs-dir", str(runs)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[1].startswith("Only static")
    lines = (tmp_path / "cmp.csv").read_text().splitlines()
    assert lines[0] == "name,policy,cluster,converged_time,speedup"
    assert len(lines) == 4
    assert sorted(f.name for f in runs.iterdir()) == sorted(
        f"{p}_static-1234{ext}" for p in ("abs", "bsp", "ssp") for ext in (".csv", ".summary.txt"))


def test_compare_disambiguates_duplicate_names(tmp_path):
    a = write_cfg(tmp_path / "one.cfg", threshold=0.69)
    b = write_cfg(tmp_path / "two.cfg", threshold=0.69)
    assert main(["compare", "--configs", str(a), str(b), "--out", str(tmp_path / "c.csv")]) == 0
    names = [l.split(",")[0] for l in (tmp_path / "c.csv").read_text().splitlines()[1:]]
    assert names == ["one", "two"]


def test_verify_theory_grid(capsys):
    assert main(["verify-theory"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("L,sigma_sq,delta")
    assert len(out) == 12
    assert out[-1].startswith("consistent=10/10")


def test_verify_theory_with_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "t.cfg", theory_gd_iters=2000, theory_probes=20, theory_sigma_samples=200)
    assert main(["verify-theory", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("config f(x0)=")
    assert out[-1].startswith("consistent=11/11")


@pytest.mark.parametrize(
    "argv_tail, kind",
    [
        (["run", "--config", "{d}/nope.cfg", "--out", "{d}/x.csv"], "ContractViolation"),
        (["run", "--config", "{d}/bad.cfg", "--out", "{d}/x.csv"], "ContractViolation"),
        (["run", "--config", "{d}/ok.cfg", "--out", "{d}/no/such/dir/x.csv"], "OSError"),
    ],
)
def test_errors_are_one_line_with_nonzero_exit(tmp_path, capsys, argv_tail, kind):
    (tmp_path / "bad.cfg").write_text("seed = 1\nflavour = mint\n")
    write_cfg(tmp_path / "ok.cfg", iterations=2)
    code = main([a.format(d=tmp_path) for a in argv_tail])
    err = capsys.readouterr().err
    assert code == 1
    assert err.count("\n") == 1 and err.startswith(f"error: {kind}: ")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "abssgd", "verify-theory"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "consistent=10/10" in proc.stdout
