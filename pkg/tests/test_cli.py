import json
import subprocess
import sys

import pytest

from psml.cli import EXIT_CONFIG, EXIT_FAILURES, EXIT_OK, main
from psml.harness import PRESETS, read_csv

TINY = """
[experiment]
scenario = linear-gaussian
theta = gaussian
M = 4
sweep = N
grid = 20, 40
trials = 5
estimators = ml, 2b-psml
[sa]
K = 100
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return str(path)


class TestCli:
    def test_presets_list(self, capsys):
        assert main(["presets", "list"]) == EXIT_OK
        out = capsys.readouterr().out
        assert all(name in out for name in PRESETS)

    def test_run_writes_csv_and_meta(self, tiny, tmp_path):
        out = str(tmp_path / "r.csv")
        assert main(["run", "--config", tiny, "--seed", "3", "--out", out]) == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 4
        meta = json.loads(open(out + ".meta.json").read())
        assert meta["seed"] == 3 and "seed = 3" in meta["config"]

    def test_run_to_stdout(self, tiny, capsys):
        assert main(["run", "--config", tiny, "--trials", "2"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("sweep_var,sweep_value,estimator") and len(lines) == 5

    def test_flags_override_file(self, tiny, tmp_path):
        out = str(tmp_path / "r.csv")
        main(["run", "--config", tiny, "--trials", "2", "--seed", "9", "--out", out])
        meta = json.loads(open(out + ".meta.json").read())
        assert "trials = 2" in meta["config"] and meta["seed"] == 9

    def test_config_overrides_preset(self, tmp_path):
        path = tmp_path / "o.ini"
        path.write_text("[experiment]\ngrid = 40\ntrials = 2\nestimators = ml\nemit_crb = false\n")
        out = str(tmp_path / "r.csv")
        assert main(["run", "--preset", "gaussian-desk", "--config", str(path), "--out", out]) == EXIT_OK
        assert len(read_csv(out)) == 1

    def test_workers_bit_identical(self, tiny, tmp_path):
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        main(["run", "--config", tiny, "--out", a, "--workers", "1"])
        main(["run", "--config", tiny, "--out", b, "--workers", "2"])
        assert open(a, "rb").read() == open(b, "rb").read()

    @pytest.mark.parametrize("args", [
        ["run"],
        ["run", "--preset", "no-such-preset"],
        ["run", "--config", "/nonexistent/path.ini"],
    ])
    def test_config_errors(self, args, capsys):
        assert main(args) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_invalid_config_value(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[experiment]\nscenario = poisson\n")
        assert main(["run", "--config", str(path)]) == EXIT_CONFIG

    def test_bench_needs_m_sweep(self, tiny):
        assert main(["bench", "--config", tiny]) == EXIT_CONFIG

    def test_bench_runs(self, tmp_path):
        out = str(tmp_path / "b.csv")
        path = tmp_path / "b.ini"
        path.write_text("[experiment]\ntheta = ones\nsweep = M\ngrid = 3, 4\ntrials = 2\n"
                        "estimators = 2b-psml\nN = 50\n")
        assert main(["bench", "--config", str(path), "--out", out]) == EXIT_OK
        assert all(r["runtime_ms"] > 0 for r in read_csv(out))

    def test_failure_rate_exit_code(self, tmp_path):
        path = tmp_path / "f.ini"
        path.write_text("[experiment]\nscenario = spectrum\ntheta = ones\nM = 3\nN = 14\ngrid = 14\n"
                        "split_x = 0.85\ntrials = 200\nseed = 1\nestimators = 2b-psml\nfail_tolerance = 0\n"
                        "[estimator]\nupdate_mode = score-solve\n")
        out = str(tmp_path / "f.csv")
        assert main(["run", "--config", str(path), "--out", out]) == EXIT_FAILURES
        assert read_csv(out)[0]["fail_rate"] > 0

    @pytest.mark.parametrize("args", [["run", "--seed", "-1"], ["run", "--trials", "0"], ["frobnicate"]])
    def test_bad_flags_exit_via_argparse(self, args):
        with pytest.raises(SystemExit) as info:
            main(args)
        assert info.value.code == 2

    def test_console_module(self, tiny):
        proc = subprocess.run([sys.executable, "-m", "psml.cli", "run", "--config", tiny, "--trials", "1"],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0 and proc.stdout.startswith("sweep_var")
