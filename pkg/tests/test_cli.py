import csv
import io
import subprocess
import sys

import pytest
import yaml

from adrc.analysis import metrics
from adrc.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from adrc.engine import run
from adrc.scenario_io import builtin, parse_scenario, read_csv, serialize_scenario

INTEGRATOR = """
name: integ
plant: {type: linear, params: {coefficients: [0.0]}}
timing: {duration: 1.0, sample_time: 0.01}
channels:
  - controller: {n: 1, b_hat: 1.0, omega_o: 20, omega_c: 4}
    reference: {kind: step, amplitude: 1.0}
    noise_variance: 1.0e-6
"""


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "integ.yaml"
    path.write_text(INTEGRATOR)
    return path


class TestRun:
    def test_determinism(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert cli("run", "example1", "--seed", "7", "--duration", "1", "--out", str(a))[0] == EXIT_OK
        assert cli("run", "example1", "--seed", "7", "--duration", "1", "--out", str(b))[0] == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_noisy_output(self, tmp_path, scenario_file):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli("run", str(scenario_file), "--seed", "1", "--out", str(a))
        cli("run", str(scenario_file), "--seed", "2", "--out", str(b))
        assert a.read_bytes() != b.read_bytes()

    def test_two_channel_csv(self, tmp_path):
        out = tmp_path / "ex2.csv"
        code, stdout, _ = cli("run", "example2", "--duration", "1", "--out", str(out))
        assert code == EXIT_OK
        tr = read_csv(out)
        assert len(tr.channels) == 2 and len(tr) == 500
        assert "ch1:" in stdout and "ch2:" in stdout

    def test_default_output_name(self, tmp_path, scenario_file, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert cli("run", str(scenario_file), "--quiet")[0] == EXIT_OK
        assert (tmp_path / "integ.csv").exists()

    def test_quiet(self, tmp_path, scenario_file):
        code, stdout, _ = cli("run", str(scenario_file), "--quiet", "--out", str(tmp_path / "x.csv"))
        assert code == EXIT_OK and stdout == ""

    def test_overrides(self, tmp_path, scenario_file):
        out = tmp_path / "x.csv"
        cli("run", str(scenario_file), "--duration", "0.5", "--dt", "0.005", "--out", str(out))
        assert len(read_csv(out)) == 50

    def test_config_error(self, tmp_path):
        doc = yaml.safe_load(INTEGRATOR)
        doc["channels"][0]["controller"]["saturation"] = {"u_min": 1.0, "u_max": 0.0}
        broken = tmp_path / "broken.cfg"
        broken.write_text(yaml.safe_dump(doc))
        code, _, err = cli("run", str(broken), "--out", str(tmp_path / "x.csv"))
        assert code == EXIT_CONFIG and "u_min < u_max" in err

    def test_bad_override(self, tmp_path, scenario_file):
        code, _, err = cli("run", str(scenario_file), "--dt", "0.003", "--out", str(tmp_path / "x.csv"))
        assert code == EXIT_CONFIG and "timing.integrator_dt" in err

    def test_divergence(self, tmp_path):
        doc = yaml.safe_load(INTEGRATOR)
        doc["channels"][0]["controller"]["b_hat"] = -1.0
        doc["timing"]["duration"] = 2000.0
        path = tmp_path / "div.yaml"
        path.write_text(yaml.safe_dump(doc))
        out = tmp_path / "div.csv"
        code, _, err = cli("run", str(path), "--out", str(out))
        assert code == EXIT_DIVERGED and "diverged" in err
        assert 0 < len(read_csv(out)) < 200000

    def test_io_error(self, tmp_path, scenario_file):
        code, _, err = cli("run", str(scenario_file), "--out", str(tmp_path / "missing" / "x.csv"))
        assert code == EXIT_IO and "cannot write" in err

    def test_unknown_source(self):
        assert cli("run", "no_such_thing")[0] == EXIT_CONFIG


class TestUsage:
    @pytest.mark.parametrize(
        "argv",
        [[], ["fly"], ["run"], ["run", "example1", "--seed", "-1"], ["run", "example1", "--duration", "0"],
         ["gains", "-n", "0", "--omega-o", "1", "--omega-c", "1"], ["gains", "-n", "2"]],
    )
    def test_usage_errors(self, argv):
        assert cli(*argv)[0] == EXIT_USAGE

    def test_help(self):
        assert cli("--help")[0] == EXIT_OK


class TestGains:
    def test_n2(self):
        code, out, _ = cli("gains", "-n", "2", "--omega-o", "10", "--omega-c", "2")
        assert code == EXIT_OK
        assert "l = [30, 300, 1000]" in out and "k = [4, 4]" in out
        assert out.count("-> pass") == 2 and "(0, 3)" in out

    def test_n1(self):
        code, out, _ = cli("gains", "-n", "1", "--omega-o", "1", "--omega-c", "1")
        assert code == EXIT_OK and "l = [2, 1]" in out and "k = [1]" in out


class TestSweep:
    def _rows(self, text):
        return list(csv.DictReader(io.StringIO(text)))

    def test_single_point_matches_run(self, scenario_file):
        code, out, _ = cli("sweep", str(scenario_file), "--omega-o", "20", "--T", "0.5", "--epsilon", "0.05")
        assert code == EXIT_OK
        (row,) = self._rows(out)
        m = metrics(run(parse_scenario(scenario_file)), 0.5, 0.05)
        assert float(row["iae"]) == m.iae and float(row["max_abs_error_after"]) == m.max_abs_error_after
        assert int(row["practically_stabilized"]) == m.practically_stabilized

    def test_invalid_point_reported_others_run(self, scenario_file):
        code, out, err = cli("sweep", str(scenario_file), "--omega-c", "0,2,4")
        rows = self._rows(out)
        assert code == EXIT_CONFIG and len(rows) == 3
        assert rows[0]["status"].startswith("invalid") and "omega_c" in rows[0]["status"]
        assert [r["status"] for r in rows[1:]] == ["ok", "ok"]
        assert "point 0" in err

    def test_grid_and_seeds(self, scenario_file):
        code, out, _ = cli("sweep", str(scenario_file), "--omega-o", "10,20", "--b-hat", "0.5,1", "--seeds", "2")
        rows = self._rows(out)
        assert code == EXIT_OK and len(rows) == 8
        assert {r["seed"] for r in rows} == {"0", "1"}

    def test_parallel_matches_serial(self, scenario_file):
        args = ["sweep", str(scenario_file), "--omega-o", "10,20,40", "--seeds", "2"]
        assert cli(*args)[1] == cli(*args, "--jobs", "2")[1]

    def test_writes_file(self, tmp_path, scenario_file):
        out = tmp_path / "sweep.csv"
        code, stdout, _ = cli("sweep", str(scenario_file), "--omega-o", "20", "--out", str(out), "--quiet")
        assert code == EXIT_OK and stdout == "" and len(self._rows(out.read_text())) == 1

    def test_divergent_point(self, scenario_file):
        code, out, _ = cli("sweep", str(scenario_file), "--b-hat", "-1", "--duration", "2000")
        assert code == EXIT_DIVERGED and self._rows(out)[0]["status"].startswith("diverged")

    def test_requires_axis(self, scenario_file):
        assert cli("sweep", str(scenario_file))[0] == EXIT_USAGE


class TestExamples:
    def test_list(self):
        code, out, _ = cli("examples")
        assert code == EXIT_OK and [line.split()[0] for line in out.splitlines()] == [f"example{i}" for i in range(1, 6)]

    def test_dump_round_trips(self):
        code, out, _ = cli("examples", "--dump", "example3")
        assert code == EXIT_OK and out == serialize_scenario(builtin("example3"))
        assert parse_scenario(out) == builtin("example3")

    def test_dump_unknown(self):
        assert cli("examples", "--dump", "example0")[0] == EXIT_CONFIG


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "adrc", "gains", "-n", "1", "--omega-o", "3", "--omega-c", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "l = [6, 9]" in proc.stdout
