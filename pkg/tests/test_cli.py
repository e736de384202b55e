import json
import subprocess
import sys

import numpy as np
import pytest

from randbeta.cli import run


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def records(out):
    return {r["name"]: r for r in json.loads(out)}


class TestExpand:
    def test_greedy_expansion_of_one(self, capsys):
        code, out, _ = call(capsys, "expand", "--beta", "golden", "--mode", "greedy", "--x", "1", "--digits", "4")
        assert code == 0
        assert out.splitlines()[0] == "1 1 0 0"
        assert "error bound" in out

    def test_integer_beta(self, capsys):
        code, _, err = call(capsys, "expand", "--beta", "2.0", "--x", "1")
        assert code == 2
        assert "beta must be non-integer" in err

    def test_point_outside_domain(self, capsys):
        code, _, err = call(capsys, "expand", "--beta", "golden", "--x", "5")
        assert code == 2 and "x must lie in J" in err

    def test_random_is_reproducible(self, capsys):
        argv = ("expand", "--beta", "silver", "--mode", "random", "--seed", "7", "--x", "0.9", "--digits", "40")
        first = call(capsys, *argv)
        assert first == call(capsys, *argv)
        assert first[0] == 0

    def test_json(self, capsys):
        code, out, _ = call(capsys, "expand", "--beta", "golden", "--x", "1", "--digits", "4", "--format", "json")
        doc = json.loads(out)
        assert doc["digits"] == [1, 1, 0, 0] and doc["coins_used"] == 0


class TestDensity:
    def test_three_halves_uniform(self, capsys):
        code, out, _ = call(capsys, "density", "--beta", "1.5", "--p", "0.5")
        doc = json.loads(out)
        assert code == 0 and doc["method"] == "ulam"
        values = np.array([r["value"] for r in doc["rows"]])
        assert np.all(np.abs(values - 0.5) <= 0.02)

    def test_golden_markov(self, capsys):
        code, out, _ = call(capsys, "density", "--beta", "golden", "--p", "0.5", "--method", "markov")
        doc = json.loads(out)
        assert doc["method"] == "markov-exact"
        np.testing.assert_allclose([r["value"] for r in doc["rows"]], [0.585410, 0.723607, 0.585410], atol=1e-6)
        assert doc["residual"] <= 1e-10 and doc["lower_bound"] > 0.58

    def test_auto_picks_markov(self, capsys):
        _, out, _ = call(capsys, "density", "--beta", "tribonacci")
        assert json.loads(out)["method"] == "markov-exact"

    def test_csv_and_json_agree(self, capsys):
        argv = ("density", "--beta", "2.5", "--p", "0.3", "--grid", "256")
        _, out_json, _ = call(capsys, *argv)
        _, out_csv, err = call(capsys, *argv, "--format", "csv")
        rows = [line.split(",") for line in out_csv.splitlines()[1:]]
        from_csv = [float(r[2]) for r in rows]
        from_json = [r["value"] for r in json.loads(out_json)["rows"]]
        assert from_csv == from_json
        assert "method=ulam" in err

    def test_markov_method_needs_hypothesis(self, capsys):
        code, _, err = call(capsys, "density", "--beta", "1.5", "--method", "markov")
        assert code == 4 and "b_i >= 1" in err

    def test_non_convergence(self, capsys):
        code, _, err = call(capsys, "density", "--beta", "1.8", "--grid", "512", "--tol", "1e-16", "--max-iter", "50")
        assert code == 3 and "residual" in err

    def test_output_file(self, capsys, tmp_path):
        path = tmp_path / "d.csv"
        code, out, _ = call(capsys, "density", "--beta", "golden", "--format", "csv", "--output", str(path))
        assert code == 0 and out == ""
        assert path.read_text().startswith("x_lo,x_hi,value")


class TestMarkov:
    def test_golden_document(self, capsys):
        code, out, _ = call(capsys, "markov", "--beta", "golden", "--p", "0.5")
        doc = json.loads(out)
        g = (5**0.5 - 1) / 2
        np.testing.assert_allclose(doc["transition"], [[g, g * g, 0], [0.5, 0, 0.5], [0, g * g, g]], atol=1e-12)
        ent = doc["entropies"]
        assert ent["chain"] == pytest.approx(ent["closed_form"], abs=1e-9)
        assert doc["aperiodic"]

    def test_tribonacci_has_no_closed_form(self, capsys):
        _, out, _ = call(capsys, "markov", "--beta", "tribonacci")
        assert json.loads(out)["entropies"]["closed_form"] is None

    def test_three_halves(self, capsys):
        code, _, err = call(capsys, "markov", "--beta", "1.5")
        assert code == 4 and "no finite greedy expansion" in err


class TestSimulate:
    def test_diagnose(self, capsys):
        code, out, _ = call(capsys, "simulate", "diagnose", "--beta", "golden", "--samples", "100000")
        recs = records(out)
        assert code == 0
        assert recs["singularity.markov_ratio"]["target"] == pytest.approx(0.763932, abs=1e-6)
        assert recs["singularity.max_entropy_ratio"]["target"] == 1.0

    def test_diagnose_needs_fair_coin(self, capsys):
        code, _, err = call(capsys, "simulate", "diagnose", "--beta", "golden", "--p", "0.3")
        assert code == 4 and "p = 1/2" in err

    def test_switch_frequency(self, capsys):
        code, out, _ = call(capsys, "simulate", "switch-freq", "--beta", "golden", "--samples", "1000000")
        rec = records(out)["switch_frequency.switch_frequency"]
        assert set(rec) == {"name", "estimate", "target", "stderr", "n", "seed"}
        assert abs(rec["estimate"] - 0.276393) <= 4 * rec["stderr"]

    def test_blocks(self, capsys):
        argv = ("simulate", "blocks", "--beta", "golden", "--digits", "1000000", "--max-block", "5")
        code, out, _ = call(capsys, *argv)
        assert records(out)["block_census.universal"]["estimate"] == 1.0

    def test_normality_deterministic(self, capsys):
        argv = ("simulate", "normality", "--beta", "golden", "--digits", "20000", "--seed", "3")
        assert call(capsys, *argv) == call(capsys, *argv)


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "randbeta", "expand", "--beta", "golden", "--x", "1", "--digits", "4"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("1 1 0 0")
