import csv
import subprocess
import sys

import pytest

from ganqp import cli
from ganqp.harness import HISTORY_HEADER, RunHistory, TrainConfig
from ganqp.harness.training import HistoryRow

SMALL = """\
critic_hidden = 16,
generator_hidden = 16,
batch_size = 32
eval_samples = 200
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_verify_lemmas_prints_dirac_line(capsys):
    assert cli.main(["verify", "lemmas", "--trials", "10"]) == 0
    out = capsys.readouterr().out
    line = next(l for l in out.splitlines() if "qp_div dirac: expected 0.5*lambda*d" in l)
    assert "pass" in line


def test_verify_gradcheck_prints_max_error(capsys, tmp_path):
    assert cli.main(["verify", "--suite", "gradcheck", "--trials", "3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
    assert (tmp_path / "verify_gradcheck.csv").exists()


def test_verify_negative_control_exits_one(capsys):
    assert cli.main(["verify", "axioms", "--negative-control", "--trials", "20"]) == 1


def test_verify_usage_errors(capsys):
    assert cli.main(["verify"]) == 2
    assert cli.main(["verify", "--suite", "nope"]) == 2
    assert cli.main(["verify", "lemmas", "--negative-control"]) == 2
    assert cli.main(["verify", "lemmas", "--trials", "0"]) == 2


def test_verify_conjecture_always_exits_zero(tmp_path, capsys):
    assert cli.main(["verify", "conjecture", "--trials", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "conjecture_findings.txt").exists()
    assert rows(tmp_path / "conjecture_counterexamples.csv")[0][0] == "kind"


def test_estimate_dirac(tmp_path, capsys):
    cfg = write(tmp_path, "e.txt", "lam = 1\nhidden = 32, 32\nmax_steps = 1500\n")
    code = cli.main(["estimate", "--config", cfg, "--p", "dirac:0", "--q", "dirac:3", "--objective", "qp",
                     "--out", str(tmp_path / "o")])
    assert code == 0
    table = rows(tmp_path / "o" / "estimate.csv")
    header, rec = table[0], dict(zip(table[0], table[1]))
    assert header[:6] == ["objective", "p", "q", "estimate", "oracle", "relative_error"]
    assert float(rec["oracle"]) == 1.5
    assert float(rec["relative_error"]) <= 0.05


def test_estimate_specs_from_config_and_oracle_column(tmp_path, capsys):
    cfg = write(tmp_path, "e.txt", "p = discrete:0,0@0.5;1,0@0.5\nq = discrete:0,0@0.2;1,0@0.8\n"
                                   "hidden = 8,\nmax_steps = 20\n")
    assert cli.main(["estimate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rec = dict(zip(*rows(tmp_path / "o" / "estimate.csv")))
    assert rec["oracle"] != ""
    assert "not converged" in capsys.readouterr().out


def test_estimate_usage_errors(tmp_path, capsys):
    assert cli.main(["estimate", "--p", "dirac:0"]) == 2
    assert cli.main(["estimate", "--p", "dirac:0", "--q", "moons:1"]) == 2
    assert cli.main(["estimate", "--p", "dirac:0", "--q", "dirac:0,1"]) == 2
    cfg = write(tmp_path, "bad.txt", "widths = 3\n")
    assert cli.main(["estimate", "--config", cfg, "--p", "dirac:0", "--q", "dirac:1"]) == 2


def test_train_writes_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, "t.txt", SMALL + "total_gen_steps = 20\neval_every = 5\n")
    out = tmp_path / "run"
    assert cli.main(["train", "--config", cfg, "--out", str(out)]) == 0
    hist = rows(out / "history.csv")
    assert tuple(hist[0]) == HISTORY_HEADER
    assert len(hist) - 1 == 20 // 5 + 1
    for name in ("resolved_config.txt", "samples_fake.csv", "samples_real.csv", "critic.qpm", "generator.qpm"):
        assert (out / name).exists()
    assert rows(out / "samples_fake.csv")[0] == ["x0", "x1"]
    assert "best frechet2d" in capsys.readouterr().out


def test_train_resolved_config_reproduces_run(tmp_path, capsys):
    cfg = write(tmp_path, "t.txt", SMALL + "total_gen_steps = 6\neval_every = 3\nseed = 5\n")
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    again = str(tmp_path / "a" / "resolved_config.txt")
    assert cli.main(["train", "--config", again, "--out", str(tmp_path / "b")]) == 0
    a = RunHistory.from_csv(tmp_path / "a" / "history.csv")
    b = RunHistory.from_csv(tmp_path / "b" / "history.csv")
    assert [r.as_tuple()[:-1] for r in a.rows] == [r.as_tuple()[:-1] for r in b.rows]
    assert (tmp_path / "a" / "samples_fake.csv").read_text() == (tmp_path / "b" / "samples_fake.csv").read_text()


def test_train_dirac_writes_position(tmp_path, capsys):
    cfg = write(tmp_path, "t.txt", "data = dirac\nalpha = 0,\nbeta = 3,\nlam = 1\ncritic_hidden = 8,\n"
                                   "total_gen_steps = 4\neval_every = 2\neval_samples = 50\nbatch_size = 16\n")
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "generator_position.csv").exists()


def test_train_bigan_without_encoder_exits_two(tmp_path, capsys):
    cfg = write(tmp_path, "t.txt", "objective = bigan_qp\n")
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert "encoder" in capsys.readouterr().err


def test_train_config_errors(tmp_path, capsys):
    assert cli.main(["train", "--config", str(tmp_path / "missing.txt")]) == 2
    cfg = write(tmp_path, "t.txt", "total_gen_steps = many\n")
    assert cli.main(["train", "--config", cfg]) == 2


def test_vanishing_flag_needs_every_late_row():
    hist = RunHistory()
    for step, g in [(0, 1.0), (50, 0.5), (75, 1e-4), (100, 1e-5)]:
        hist.append(HistoryRow(step, 0, 0, 0, 0, 0, 0, 0), g)
    assert cli.vanishing_detected(hist, 100)
    hist.gen_grad_norms[2] = 2e-3
    assert not cli.vanishing_detected(hist, 100)


def test_sweep_exact_scaling(tmp_path, capsys):
    cfg = write(tmp_path, "s.txt", SMALL + "data = discrete\nsupport = 0,0, 1,0, 0,1\nprobs = 0.5, 0.3, 0.2\n"
                                           "total_gen_steps = 4\neval_every = 2\n")
    out = tmp_path / "sw"
    assert cli.main(["sweep-lambda", "--config", cfg, "--lambdas", "0.5,1,2", "--out", str(out)]) == 0
    table = rows(out / "sweep.csv")
    assert table[0][:4] == ["lambda", "best_frechet2d", "final_mode_coverage", "mean_lipschitz_ratio"]
    ratios = [float(dict(zip(table[0], r))["exact_ratio"]) for r in table[1:]]
    assert ratios == [0.5, 1.0, 2.0]
    for lam in ("0.5", "1", "2"):
        assert (out / f"lambda_{lam}" / "history.csv").exists()


def test_sweep_single_lambda_matches_train(tmp_path, capsys):
    cfg = write(tmp_path, "s.txt", SMALL + "lam = 1\ntotal_gen_steps = 4\neval_every = 2\n")
    assert cli.main(["sweep-lambda", "--config", cfg, "--lambdas", "1", "--out", str(tmp_path / "sw")]) == 0
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "tr")]) == 0
    a = RunHistory.from_csv(tmp_path / "sw" / "lambda_1" / "history.csv")
    b = RunHistory.from_csv(tmp_path / "tr" / "history.csv")
    assert [r.as_tuple()[:-1] for r in a.rows] == [r.as_tuple()[:-1] for r in b.rows]


@pytest.mark.parametrize("grid", ["", "0,1", "a,b", "-1"])
def test_sweep_bad_grid(tmp_path, capsys, grid):
    cfg = write(tmp_path, "s.txt", SMALL)
    assert cli.main(["sweep-lambda", "--config", cfg, "--lambdas", grid, "--out", str(tmp_path / "x")]) == 2


def test_sweep_rejects_other_objectives(tmp_path, capsys):
    cfg = write(tmp_path, "s.txt", SMALL + "objective = wgan_sn\n")
    assert cli.main(["sweep-lambda", "--config", cfg, "--lambdas", "1", "--out", str(tmp_path / "x")]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ganqp", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "sweep-lambda" in res.stdout
