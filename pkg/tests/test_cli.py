"""Command-line entry points and exit codes."""

import subprocess
import sys

import pytest

from coagentrl.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, main


class TestTrain:
    def test_experiment_with_overrides(self, tmp_path, capsys):
        out = tmp_path / "g.csv"
        code = main(["train", "--experiment", "gridworld5-ising", "--out", str(out),
                     "--set", "episodes=2", "--set", "seeds=[0]"])
        assert code == EXIT_OK
        assert out.read_text().count("\n") == 3
        assert str(out) in capsys.readouterr().out

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "c.toml"
        out = tmp_path / "c.csv"
        cfg.write_text(f'experiment = "gridworld5-ising"\nepisodes = 2\nseeds = [3]\noutput = "{out}"\n')
        assert main(["train", "--config", str(cfg)]) == EXIT_OK
        assert out.read_text().splitlines()[1].startswith("3,1,")

    def test_bad_key_exit_code(self, tmp_path, capsys):
        code = main(["train", "--experiment", "gridworld5-ising", "--out", str(tmp_path / "x.csv"),
                     "--set", "learner.alpah=0.1"])
        assert code == EXIT_CONFIG
        assert "unknown key" in capsys.readouterr().err

    def test_missing_source(self):
        assert main(["train"]) == EXIT_CONFIG


class TestCompare:
    def test_table(self, tmp_path, capsys):
        paths = []
        for seed in (0, 1):
            p = tmp_path / f"r{seed}.csv"
            main(["train", "--experiment", "gridworld5-ising", "--out", str(p),
                  "--set", "episodes=2", "--set", f"seeds=[{seed}]"])
            paths.append(str(p))
        capsys.readouterr()
        assert main(["compare", *paths, "--threshold", "0"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3 and lines[1].startswith("r0")

    def test_single_file_rejected(self, tmp_path, capsys):
        p = tmp_path / "a.csv"
        p.write_text("seed,episode,return,steps,moving_avg_100\n0,1,1,1,1\n")
        assert main(["compare", str(p)]) == EXIT_CONFIG

    def test_bad_schema(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        a.write_text("nope\n")
        b.write_text("nope\n")
        assert main(["compare", str(a), str(b)]) == EXIT_CONFIG


class TestVerify:
    def test_nan_alpha_fails(self, capsys):
        assert main(["verify", "--alpha", "nan"]) == EXIT_VERIFY
        assert "failed:" in capsys.readouterr().out


class TestList:
    def test_ids(self, capsys):
        assert main(["list-experiments"]) == EXIT_OK
        assert "cartpole-reparam-a2c" in capsys.readouterr().out.split()

    def test_show_round_trips(self, capsys):
        main(["list-experiments", "--show"])
        assert 'experiment = "gridworld5-ising"' in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "coagentrl", "list-experiments"], capture_output=True, text=True)
    assert res.returncode == 0 and "gridworld5-ising" in res.stdout
