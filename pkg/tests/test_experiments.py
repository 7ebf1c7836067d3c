import json
import math

import numpy as np
import pytest

from specdtn.cli import main as cli_main
from specdtn.experiments import (ROW_COLUMNS, ExperimentConfig, ResultRow,
                                 run_experiment, write_csv)
from specdtn.geometry import build_uniform_tree
from specdtn.model import catalog
from specdtn.reference import (ReferenceSolution, boundary_probe_points,
                               compute_reference, linf_error)
from specdtn.solver import build_stage

UNIT = (0.0, 1.0, 0.0, 1.0)


class TestLinfError:
    def setup_method(self):
        self.spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        self.tree = build_uniform_tree(UNIT, 2)
        self.solver = build_stage(self.tree, self.spec, 9, 8)
        self.state = self.solver.solve()

    def test_state_vs_itself(self):
        ref = ReferenceSolution.from_state(self.state)
        assert linf_error(self.state, ref) <= 1e-12

    def test_constant_offset(self):
        own = ReferenceSolution.from_state(self.state)
        shifted = ReferenceSolution(lambda pts: own.evaluate(pts) + 0.25)
        assert linf_error(self.state, shifted) == pytest.approx(0.25, abs=1e-10)

    def test_probe_points_on_leaf_boundaries(self):
        pts = boundary_probe_points(self.tree, 9, 8)
        assert len(pts) == 4 * 4 * (9 - 1)
        on_lines = (np.isclose(pts[:, 0] % 0.5, 0.0)
                    | np.isclose(pts[:, 1] % 0.5, 0.0))
        assert on_lines.all()


class TestComputeReference:
    def test_manufactured_uses_analytic(self):
        spec = catalog("manufactured", u="x1*x2")
        tree = build_uniform_tree(UNIT, 2)
        ref = compute_reference(spec, tree, n=2, p=9, q=8)
        assert ref.meta["kind"] == "analytic"
        np.testing.assert_allclose(ref.evaluate(np.array([[0.5, 0.4]])), [0.2])

    def test_self_convergence_budget_enforced(self):
        spec = catalog("indicator_poisson")
        tree = build_uniform_tree(UNIT, 4)
        with pytest.raises(ValueError, match="budget"):
            compute_reference(spec, tree, n=4, p=9, q=8, ref_n=2)

    def test_self_convergence_reference(self):
        spec = catalog("indicator_poisson")
        tree = build_uniform_tree(UNIT, 4)
        ref = compute_reference(spec, tree, n=4, p=9, q=8)
        assert ref.meta["n"] == 8
        solver = build_stage(tree, spec, 9, 8)
        err = linf_error(solver.solve(), ref)
        assert err < 1e-4     # aligned indicator converges fast

    def test_determinism(self):
        spec = catalog("indicator_poisson")
        tree = build_uniform_tree(UNIT, 2)
        r1 = compute_reference(spec, tree, n=2, p=9, q=8)
        r2 = compute_reference(spec, tree, n=2, p=9, q=8)
        pts = np.array([[0.3, 0.3], [0.7, 0.6], [0.1, 0.9]])
        assert np.abs(r1.evaluate(pts) - r2.evaluate(pts)).max() <= 1e-14


class TestConfigAndCsv:
    def test_orders_default_q(self):
        assert ExperimentConfig("speed").orders(8) == (9, 8)
        assert ExperimentConfig("speed", p=17).orders(8) == (17, 16)
        assert ExperimentConfig("speed", q=4).orders(8) == (5, 4)
        with pytest.raises(ValueError):
            ExperimentConfig("speed", p=8, q=8).orders(8)

    def test_csv_schema(self, tmp_path):
        rows = [ResultRow(N=100, p=9, q=8, n=2, n_ref=0, build_seconds=0.1,
                          solve_seconds=0.01, memory_floats=1234,
                          linf_error=1e-10, mode="stored")]
        out = tmp_path / "rows.csv"
        write_csv(rows, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == ",".join(ROW_COLUMNS)
        assert lines[1].startswith("100,9,8,2,0,")

    def test_config_file_roundtrip(self, tmp_path):
        doc = {"experiment": "speed", "q": 4, "n": 2, "mode": "econ",
               "repetitions": 1, "params": {"ns": [2]}}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        config = ExperimentConfig.from_file(path)
        assert config.q == 4 and config.mode == "econ"
        assert config.params == {"ns": [2]}

    def test_unknown_experiment(self):
        with pytest.raises(ValueError, match="unknown experiment"):
            run_experiment(ExperimentConfig("warp_drive"))


class TestDrivers:
    def test_speed_rows(self, tmp_path):
        out = tmp_path / "speed.csv"
        config = ExperimentConfig("speed", q=4, repetitions=1, out=str(out),
                                  params={"ns": [2, 4]})
        rows = run_experiment(config)
        assert [r.n for r in rows] == [2, 4]
        assert all(r.linf_error < 1e-9 for r in rows)      # u = x1 is exact
        assert all(r.N == (r.n * 4 + 1) ** 2 for r in rows)
        assert out.exists()

    def test_parabolic_rows(self):
        config = ExperimentConfig("parabolic", q=6, n=4, repetitions=1,
                                  params={"ks": [1 / 10, 1 / 20], "t_end": 0.1})
        rows = run_experiment(config)
        assert rows[0].linf_error > rows[1].linf_error

    def test_varcoef_small(self):
        config = ExperimentConfig("varcoef", n=2, repetitions=1,
                                  params={"qs": [4, 8], "ref_n": 4, "kappa": 4.0})
        rows = run_experiment(config)
        assert rows[0].linf_error > rows[1].linf_error


class TestCli:
    def test_verify_subcommand(self, capsys):
        assert cli_main(["verify"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_speed_subcommand(self, tmp_path, capsys):
        out = tmp_path / "rows.csv"
        code = cli_main(["speed", "--q", "4", "--reps", "1", "--out", str(out)])
        assert code == 0
        assert out.exists()
        printed = capsys.readouterr().out
        assert printed.splitlines()[0] == ",".join(ROW_COLUMNS)

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": "speed", "q": 4,
                                   "repetitions": 1, "params": {"ns": [2]}}))
        code = cli_main(["speed", "--config", str(cfg), "--mode", "econ"])
        assert code == 0
        assert ",econ" in capsys.readouterr().out

    def test_bad_config_fails_cleanly(self, tmp_path, capsys):
        code = cli_main(["speed", "--p", "3", "--q", "8"])
        assert code == 1
        assert "error" in capsys.readouterr().err
        code = cli_main(["varcoef", "--p", "3", "--q", "8"])
        assert code == 1
