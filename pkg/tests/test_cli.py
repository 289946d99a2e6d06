import csv
from pathlib import Path

import numpy as np
import pytest

from levy_dividend.cli import main
from levy_dividend.solver import solution_from_text

MODELS = Path(__file__).resolve().parents[1] / "models"
CASE1 = str(MODELS / "case1.model")
CASE2 = str(MODELS / "case2.model")


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(c) for c in row] for row in rows[1:]])
    return header, data


class TestSolve:
    def test_case1_writes_solution(self, tmp_path):
        out = tmp_path / "sol.txt"
        assert main(["solve", "--model", CASE1, "--out", str(out)]) == 0
        sol = solution_from_text(out.read_text())
        assert sol.b_star > 0
        assert abs(sol.g_residual) <= 1e-8

    def test_case2_zero_threshold(self, tmp_path):
        out = tmp_path / "sol.txt"
        assert main(["solve", "--model", CASE2, "--out", str(out)]) == 0
        sol = solution_from_text(out.read_text())
        assert sol.zero_threshold and sol.b_star == 0.0

    def test_malformed_model_exits_2(self, tmp_path):
        bad = tmp_path / "bad.model"
        bad.write_text("c = 4\nwhat even is this\n")
        assert main(["solve", "--model", str(bad), "--out", str(tmp_path / "x")]) == 2

    def test_invalid_assumptions_exit_2(self, tmp_path):
        bad = tmp_path / "bad.model"
        # bounded variation with drift below the dividend cap
        bad.write_text(
            "c = 0.5\nkappa = 2\njumps = exp(2)\nq = 0.05\nbeta = 1.5\ndelta = 1\n"
        )
        assert main(["solve", "--model", str(bad), "--out", str(tmp_path / "x")]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["solve", "--model", str(tmp_path / "nope"), "--out", "-"]) == 2


class TestGcurve:
    def test_columns_and_threshold_row(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["gcurve", "--model", CASE1, "--grid", "0:40:0.5",
                     "--out", str(out)]) == 0
        header, data = read_csv(out)
        assert header == ["b", "g", "h", "g_over_h", "is_b_star"]
        starred = data[data[:, 4] == 1]
        assert starred.shape[0] == 1
        assert abs(starred[0, 1]) <= 1e-8  # g vanishes at the threshold
        assert np.all(data[:, 2] > 0)  # h positive
        tail = data[np.argmax(data[:, 0] >= 40.0), 3]
        assert -1 - 1e-3 < tail < -0.5

    def test_empty_grid_exits_2(self, tmp_path):
        assert main(["gcurve", "--model", CASE1, "--grid", "5:1:0.5",
                     "--out", str(tmp_path / "g.csv")]) == 2
        assert main(["gcurve", "--model", CASE1, "--grid", "0:40:-1",
                     "--out", str(tmp_path / "g.csv")]) == 2

    def test_curves_ordered_in_beta(self, tmp_path):
        # higher injection cost lifts the whole g/h curve
        base = Path(CASE1).read_text()
        curves = []
        for beta in (1.1, 1.5, 2.0):
            mf = tmp_path / f"b{beta}.model"
            mf.write_text(base.replace("beta = 1.5", f"beta = {beta}"))
            out = tmp_path / f"g{beta}.csv"
            assert main(["gcurve", "--model", str(mf), "--grid", "0:10:0.5",
                         "--out", str(out)]) == 0
            _, data = read_csv(out)
            curves.append(data[data[:, 4] == 0][:, 3])  # g/h off the marker row
        assert np.all(curves[0] < curves[1]) and np.all(curves[1] < curves[2])


class TestValue:
    def test_dominance_and_slope(self, tmp_path):
        out = tmp_path / "v.csv"
        assert main(["value", "--model", CASE2, "--grid=-1:4:0.5",
                     "--b-list", "0.25,0.5,0.75,1", "--out", str(out)]) == 0
        header, data = read_csv(out)
        assert header[0] == "x"
        assert len(header) == 1 + 2 * 5  # optimum + four alternatives
        xs = data[:, 0]
        assert xs[1] - xs[0] == pytest.approx(0.5)
        v_star = data[:, 1]
        for j in range(3, len(header), 2):
            assert np.all(v_star >= data[:, j] - 1e-9)
        # below zero the value continues with the injection slope
        neg = xs < 0
        assert np.all(np.abs(data[neg, 2] - 1.5) < 1e-9)

    def test_optimum_included_once(self, tmp_path):
        out = tmp_path / "v.csv"
        assert main(["value", "--model", CASE2, "--grid", "0:2:1",
                     "--b-list", "0", "--out", str(out)]) == 0
        header, _ = read_csv(out)
        assert len(header) == 3  # x plus one column pair


class TestSweep:
    def test_beta_ordering(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["sweep", "--model", CASE1, "--sweep", "beta=1.05,1.5,2.5",
                     "--grid", "0:10:2", "--out", str(out)]) == 0
        header, data = read_csv(out)
        assert header[:2] == ["beta", "b_star"]
        assert np.all(np.diff(data[:, 1]) >= -1e-9)  # threshold grows with beta
        for j in range(2, data.shape[1]):
            assert np.all(np.diff(data[:, j]) <= 1e-9)  # value falls with beta

    def test_delta_ordering(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["sweep", "--model", CASE1, "--sweep", "delta=0.5,1,2",
                     "--grid", "0:10:2", "--out", str(out)]) == 0
        _, data = read_csv(out)
        for j in range(2, data.shape[1]):
            assert np.all(np.diff(data[:, j]) >= -1e-9)  # value grows with delta

    def test_singleton_matches_solve(self, tmp_path):
        sweep_out = tmp_path / "s.csv"
        solve_out = tmp_path / "sol.txt"
        assert main(["sweep", "--model", CASE1, "--sweep", "beta=1.5",
                     "--grid", "0:2:1", "--out", str(sweep_out)]) == 0
        assert main(["solve", "--model", CASE1, "--out", str(solve_out)]) == 0
        _, data = read_csv(sweep_out)
        sol = solution_from_text(solve_out.read_text())
        assert data[0, 1] == pytest.approx(sol.b_star, rel=1e-10)

    def test_bad_sweep_spec_exits_2(self, tmp_path):
        assert main(["sweep", "--model", CASE1, "--sweep", "gamma=1,2",
                     "--out", str(tmp_path / "s.csv")]) == 2
        assert main(["sweep", "--model", CASE1, "--sweep", "beta=-1,2",
                     "--out", str(tmp_path / "s.csv")]) == 2

    def test_thread_env_cap(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LEVY_DIVIDEND_THREADS", "2")
        out = tmp_path / "s.csv"
        assert main(["sweep", "--model", CASE2, "--sweep", "beta=1.2,1.8",
                     "--grid", "0:2:1", "--out", str(out)]) == 0
        _, data = read_csv(out)
        assert data.shape[0] == 2


class TestVerify:
    def test_case2_passes(self, tmp_path):
        out = tmp_path / "rep.txt"
        grid_out = tmp_path / "rep.csv"
        code = main(["verify", "--model", CASE2, "--out", str(out),
                     "--grid-out", str(grid_out)])
        assert code == 0
        assert "pass = 1" in out.read_text()
        header, data = read_csv(grid_out)
        assert header == ["x", "residual", "v", "dv"]
        assert np.max(np.abs(data[:, 1])) <= 1e-4

    def test_forced_wrong_threshold_fails(self, tmp_path):
        out = tmp_path / "rep.txt"
        code = main(["verify", "--model", CASE2, "--b", "0.5", "--out", str(out)])
        assert code == 1
        assert "pass = 0" in out.read_text()


class TestSimulate:
    def test_seed_repeat_identical_output(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        args = ["simulate", "--model", CASE2, "--x0", "1.0", "--b", "1.0",
                "--paths", "2000", "--seed", "7"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_text() == b.read_text()

    def test_ruin_target_with_paths_dump(self, tmp_path):
        out = tmp_path / "est.txt"
        dump = tmp_path / "paths.csv"
        assert main(["simulate", "--model", CASE2, "--target", "ruin",
                     "--x0", "0.5", "--b", "1.0", "--paths", "1000",
                     "--seed", "3", "--out", str(out),
                     "--paths-out", str(dump)]) == 0
        text = out.read_text()
        assert "mean = " in text and "bias_note = " in text
        lines = dump.read_text().strip().splitlines()
        assert len(lines) == 1001

    def test_stdout_when_no_out(self, capsys):
        assert main(["solve", "--model", CASE2]) == 0
        captured = capsys.readouterr()
        assert "b_star = 0" in captured.out
