import json
import subprocess
import sys

import pytest

from fsdalign import __version__
from fsdalign import penalty as pen
from fsdalign.cli import main
from fsdalign.data import read_dataset
from fsdalign.policy import TabularPolicy


def run(*argv):
    return subprocess.run([sys.executable, "-m", "fsdalign", *argv], capture_output=True, text=True)


def test_version():
    r = run("--version")
    assert r.returncode == 0 and r.stdout.strip() == f"fsdalign {__version__}"
    assert __version__ == "0.1.0"


def test_unknown_subcommand():
    r = run("frobnicate")
    assert r.returncode == 2 and "usage:" in r.stderr


def test_align_missing_data():
    r = run("align", "--out", "m.json")
    assert r.returncode == 2 and "--data" in r.stderr


def test_unknown_flag_is_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["gen", "--out", str(tmp_path / "d.jsonl"), "--bogus"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["gen", "--ou", str(tmp_path / "d.jsonl")])
    assert info.value.code == 2


@pytest.mark.parametrize("cmd", ["gen", "align", "dominance", "quantiles", "rate", "oracle-check"])
def test_help_everywhere(cmd, capsys):
    with pytest.raises(SystemExit) as info:
        main([cmd, "--help"])
    assert info.value.code == 0
    assert "usage:" in capsys.readouterr().out


def test_bad_penalty_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["dominance", "--u", "a", "--v", "b", "--h", "cubic"])
    assert info.value.code == 2


def test_missing_file_is_runtime_error(tmp_path, capsys):
    assert main(["dominance", "--u", str(tmp_path / "no.csv"), "--v", str(tmp_path / "no.csv")]) == 1
    assert "ERROR" in capsys.readouterr().err


def test_gen_writes_only_named_paths(tmp_path):
    out = tmp_path / "d.jsonl"
    assert main(["gen", "--k", "3", "--m", "4", "--n", "50", "--seed", "5", "--out", str(out)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["d.jsonl"]
    assert main(["gen", "--n", "50", "--out", str(out), "--meta", str(tmp_path / "d.meta")]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["d.jsonl", "d.meta"]
    ds = read_dataset(out, meta_file=tmp_path / "d.meta")
    assert (ds.k, ds.m, len(ds)) == (4, 8, 50)


def test_dominance_json(tmp_path, capsys):
    (tmp_path / "a.csv").write_text("value,weight\n0,0.5\n2,0.5\n")
    (tmp_path / "b.csv").write_text("1,1\n")
    assert main(["dominance", "--u", str(tmp_path / "a.csv"), "--v", str(tmp_path / "b.csv"), "--h", "hinge2:0"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["fsd_holds"] is False
    assert rep["zero_one_area"] == rep["w1_violation"] == rep["w2_violation"] == rep["ot_cost"] == 0.5
    assert rep["h"] == "hinge2:0.0"


def test_quantiles_csv(tmp_path):
    (tmp_path / "a.csv").write_text("0.1,1\n0.30000000000000004,1\n")
    (tmp_path / "b.csv").write_text("0,1\n")
    out = tmp_path / "q.csv"
    assert main(["quantiles", "--u", str(tmp_path / "a.csv"), "--v", str(tmp_path / "b.csv"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "percentile,q_u,q_v,margin" and len(lines) == 100
    assert lines[-1] == "0.99,0.30000000000000004,0.0,0.30000000000000004"


def test_rate_output(capsys):
    assert main(["rate", "--ns", "16,64,256", "--reps", "20", "--seed", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("slope,") and lines[1] == "n,mean_abs_error"
    assert [int(line.split(",")[0]) for line in lines[2:]] == [16, 64, 256]
    with pytest.raises(SystemExit):
        main(["rate", "--ns", "16,x"])
    assert main(["rate", "--ns", "16"]) == 1


def test_oracle_check_passes(capsys):
    assert main(["oracle-check", "--trials", "1", "--seed", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2 and all(line.startswith("PASS") and "max error" in line for line in out)


def test_oracle_check_catches_corrupted_derivative(monkeypatch, capsys):
    good = pen.derivative
    monkeypatch.setattr(pen, "derivative", lambda h, x: good(h, x) * 1.01)
    assert main(["oracle-check", "--trials", "1", "--seed", "0"]) == 1
    out = capsys.readouterr().out
    assert "FAIL gradients" in out and "PASS ot_sorted" in out


def test_oracle_check_rejects_zero_trials():
    assert main(["oracle-check", "--trials", "0"]) == 1


def test_align_end_to_end(tmp_path):
    data, held = tmp_path / "d.jsonl", tmp_path / "h.jsonl"
    assert main(["gen", "--k", "3", "--m", "4", "--n", "256", "--seed", "2", "--out", str(data)]) == 0
    assert main(["gen", "--k", "3", "--m", "4", "--n", "256", "--seed", "9", "--reward-seed", "2", "--out", str(held)]) == 0
    ref = tmp_path / "ref.json"
    TabularPolicy.uniform(3, 4).save(ref)
    base = ["align", "--data", str(data), "--eval-data", str(held), "--ref", str(ref), "--steps", "60", "--batch", "16", "--eval-every", "20", "--seed", "4"]
    for tag in ("a", "b"):
        assert main(base + ["--out", str(tmp_path / f"{tag}.json"), "--metrics", str(tmp_path / f"{tag}.csv")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "step,loss,w2_violation,min_margin,median_margin,ms"
    assert TabularPolicy.load(tmp_path / "a.json").shape == (3, 4)
    assert main(base + ["--mode", "unpaired", "--sort", "soft", "--soft-eps", "0.2", "--out", str(tmp_path / "s.json")]) == 0
    assert main(base + ["--loss", "dpo", "--mode", "unpaired", "--out", str(tmp_path / "x.json")]) == 1
    assert main(base + ["--init", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x.json")]) == 1


def test_align_unpaired_data_cannot_train_paired(tmp_path):
    data = tmp_path / "u.jsonl"
    assert main(["gen", "--k", "2", "--m", "3", "--n", "40", "--mode", "unpaired", "--out", str(data)]) == 0
    assert main(["align", "--data", str(data), "--mode", "paired", "--k", "2", "--m", "3", "--out", str(tmp_path / "m.json")]) == 1
