"""Training orchestration, curve files, and summaries."""

import io

import numpy as np
import pytest

from coagentrl.config import build_config
from coagentrl.experiments import (
    HEADER,
    SchemaError,
    compare,
    curves_text,
    episodes_to_threshold,
    format_summary,
    moving_average,
    read_curves,
    run_experiment,
    summarize,
    variants,
    write_curves,
)


def _cfg(name="gridworld5-ising", **kw):
    values = {"experiment": name, "episodes": 3, "seeds": [0, 1]}
    values.update(kw)
    return build_config(values)


class TestCurves:
    def test_header_and_rows(self):
        text = curves_text(_cfg())
        lines = text.splitlines()
        assert lines[0] == ",".join(HEADER)
        assert len(lines) == 1 + 2 * 3
        assert [line.split(",")[1] for line in lines[1:4]] == ["1", "2", "3"]

    def test_moving_average_column(self):
        rows = [line.split(",") for line in curves_text(_cfg()).splitlines()[1:4]]
        returns = [float(r[2]) for r in rows]
        assert float(rows[2][4]) == pytest.approx(np.mean(returns))

    def test_deterministic(self):
        assert curves_text(_cfg()) == curves_text(_cfg())

    @pytest.mark.parametrize("name", ["gridworld10-glm", "mountaincar-ising", "cartpole-ising",
                                      "cartpole-reparam-a2c"])
    def test_each_environment_runs(self, name):
        over = {"episodes": 2, "seeds": [0], "env.max_steps": 30}
        text = curves_text(_cfg(name, **over))
        assert len(text.splitlines()) == 3

    def test_stop_at_ends_seed_early(self):
        cfg = _cfg("cartpole-reparam-a2c", episodes=150, seeds=[0], stop_at=0.0)
        assert len(curves_text(cfg).splitlines()) == 1 + 100

    def test_truncation_marker(self):
        class Boom(io.StringIO):
            rows = 0

            def write(self, s):
                if not s.startswith("#"):
                    Boom.rows += 1
                    if Boom.rows > 3:
                        raise OSError("disk full")
                return super().write(s)

        buf = Boom()
        with pytest.raises(OSError):
            write_curves(_cfg(), buf)
        assert buf.getvalue().splitlines()[-1].startswith("# truncated: OSError")


class TestSweeps:
    def test_variant_expansion(self):
        cfg = build_config({"experiment": "cartpole-population-sweep"})
        out = variants(cfg)
        assert [label for label, _ in out] == ["N1", "N5", "N10", "N20"]
        assert [v.network.population for _, v in out] == [1, 5, 10, 20]

    def test_run_writes_one_file_per_variant(self, tmp_path):
        cfg = _cfg("cartpole-modular-vs-full", episodes=2, seeds=[0], **{"env.max_steps": 20})
        paths = run_experiment(cfg, tmp_path / "cp.csv", svg=True)
        assert [p.name for p in paths] == ["cp_modular.csv", "cp_full.csv"]
        assert all(p.with_suffix(".svg").read_text().startswith("<svg") for p in paths)


class TestSummaries:
    def test_moving_average(self):
        np.testing.assert_allclose(moving_average([1, 2, 3, 4], window=2), [1, 1.5, 2.5, 3.5])

    def test_episodes_to_threshold(self):
        assert episodes_to_threshold([0, 0, 10, 10], 5, window=2) == 3
        assert episodes_to_threshold([0, 0], 5) is None

    def _write(self, path, seeds_returns):
        lines = [",".join(HEADER)]
        for seed, rets in seeds_returns.items():
            for i, r in enumerate(rets, start=1):
                lines.append(f"{seed},{i},{r},{r},{np.mean(rets[max(0, i - 100):i])}")
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_summary_and_ratio(self, tmp_path):
        a = self._write(tmp_path / "a.csv", {0: [10.0] * 5, 1: [20.0] * 5})
        b = self._write(tmp_path / "b.csv", {0: [30.0] * 5, 1: [30.0] * 5})
        rows = compare([a, b], metric="steps", threshold=25)
        assert rows[0].final_mean == 15.0 and rows[0].final_std == 5.0
        assert rows[0].reached == 0 and rows[0].to_threshold == 5.0
        assert rows[1].reached == 2 and rows[1].to_threshold == 1.0
        text = format_summary(rows, "steps", 25)
        assert "2.00" in text.splitlines()[2]

    def test_compare_needs_two(self, tmp_path):
        a = self._write(tmp_path / "a.csv", {0: [1.0]})
        with pytest.raises(ValueError):
            compare([a])

    def test_bad_header(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("seed,ep\n0,1\n")
        with pytest.raises(SchemaError):
            read_curves(p)

    def test_gap_rejected(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text(",".join(HEADER) + "\n0,1,1,1,1\n0,3,1,1,1\n")
        with pytest.raises(SchemaError):
            read_curves(p)

    def test_truncated_file_readable(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text(",".join(HEADER) + "\n0,1,1,1,1\n# truncated: KeyboardInterrupt: \n")
        curve = read_curves(p)
        assert curve.truncated and len(curve.rows[0]) == 1
        assert summarize(curve).n_seeds == 1
