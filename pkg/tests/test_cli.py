import json

import numpy as np
import pytest

from nbspectra.cli import main
from nbspectra.graphs import read_edge_list
from nbspectra.model import write_params


def run(args):
    return main(args)


class TestConfigErrors:
    def test_unknown_preset(self, tmp_path):
        assert run(["spectrum", "--preset", "nosuch", "--out", str(tmp_path)]) == 2

    def test_missing_params_file(self, tmp_path):
        assert run(["detect", "--params", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_bad_n(self, tmp_path):
        assert run(["spectrum", "--preset", "er4", "--n", "0", "--out", str(tmp_path)]) == 2

    def test_bad_kappa(self, tmp_path):
        assert run(
            ["spectrum", "--preset", "er4", "--kappa", "0.9", "--out", str(tmp_path)]
        ) == 2


class TestGenerate:
    def test_writes_readable_edge_lists(self, tmp_path):
        rc = run(["generate", "--preset", "er4", "--n", "60", "--seeds", "1", "4", "--out", str(tmp_path)])
        assert rc == 0
        for seed in (1, 4):
            g = read_edge_list(tmp_path / f"graph_{seed}.txt")
            assert g.n == 60


class TestSpectrum:
    def test_er_summary_and_reproducibility(self, tmp_path):
        args = ["spectrum", "--preset", "er4", "--n", "400", "--seeds", "0", "--out", str(tmp_path)]
        assert run(args) == 0
        csv1 = (tmp_path / "spectrum_0.csv").read_bytes()
        summary = json.loads((tmp_path / "spectrum_summary.json").read_text())
        lam1 = summary["per_seed"]["0"]["lambda1"]
        assert 3.2 <= lam1 <= 4.8
        assert summary["sqrt_alpha"] == pytest.approx(2.0)
        # rows equal oriented edge count
        g = None
        rc = run(["generate", "--preset", "er4", "--n", "400", "--seeds", "0", "--out", str(tmp_path / "g")])
        assert rc == 0
        g = read_edge_list(tmp_path / "g" / "graph_0.txt")
        rows = csv1.decode().strip().split("\n")
        assert len(rows) - 2 == 2 * g.edge_count  # comment + header
        # bit-reproducible rerun
        assert run(args) == 0
        assert (tmp_path / "spectrum_0.csv").read_bytes() == csv1

    def test_sbm_second_outlier_near_three(self, tmp_path):
        rc = run(
            ["spectrum", "--preset", "sbm-2x-7-1", "--n", "500", "--seeds", "0", "1", "2",
             "--out", str(tmp_path)]
        )
        assert rc == 0
        summary = json.loads((tmp_path / "spectrum_summary.json").read_text())
        lam2 = [summary["per_seed"][s]["abs_lambda2"] for s in ("0", "1", "2")]
        assert 2.4 <= np.mean(lam2) <= 3.6

    def test_forest_spectrum_is_all_zero(self, tmp_path):
        # hunt a seed whose sparse 3-vertex graph is the 2-edge path
        from nbspectra.graphs import generate_er
        from nbspectra.model import SbmParams

        seed = next(
            s for s in range(200)
            if generate_er(3, 1.0, s).edge_count == 2
            and max(generate_er(3, 1.0, s).degrees) == 2
        )
        params_path = tmp_path / "er1.json"
        write_params(SbmParams(r=1, pi=np.array([1.0]), W=np.array([[1.0]])), params_path)
        rc = run(
            ["spectrum", "--params", str(params_path), "--n", "3", "--seeds", str(seed),
             "--out", str(tmp_path / "p")]
        )
        assert rc == 0
        rows = (tmp_path / "p" / f"spectrum_{seed}.csv").read_text().strip().split("\n")[2:]
        vals = np.array([[float(x) for x in row.split(",")] for row in rows])
        assert np.allclose(vals, 0.0, atol=1e-12)


class TestDetect:
    def test_detects_above_threshold(self, tmp_path):
        rc = run(
            ["detect", "--preset", "sbm-2x-7-1", "--n", "1500", "--seeds", "0", "1",
             "--ell", "2", "--samples", "4000", "--out", str(tmp_path)]
        )
        assert rc == 0
        summary = json.loads((tmp_path / "detect_summary.json").read_text())
        assert summary["mean_overlap"] >= 0.15
        csv0 = (tmp_path / "assignment_0.csv").read_text().strip().split("\n")
        assert csv0[1] == "vertex,label"
        assert len(csv0) - 2 == 1500

    def test_below_threshold_record(self, tmp_path):
        rc = run(
            ["detect", "--preset", "sbm-2x-5-3", "--n", "2000", "--seeds", "0", "1", "2",
             "--out", str(tmp_path)]
        )
        assert rc == 0
        summary = json.loads((tmp_path / "detect_summary.json").read_text())
        assert all(rec["below_threshold"] for rec in summary["per_seed"].values())
        assert abs(summary["mean_overlap"]) <= 0.05
        note = summary["per_seed"]["0"]["note"]
        assert "below threshold" in note


class TestBpVerify:
    def test_small_sample_report_well_formed(self, tmp_path):
        rc = run(
            ["bp-verify", "--preset", "sbm-2x-7-1", "--samples", "10", "--ell", "2",
             "--out", str(tmp_path)]
        )
        report = json.loads((tmp_path / "mc_report.json").read_text())
        assert rc in (0, 4)
        for check in report["checks"]:
            assert set(check) == {"name", "estimate", "se", "target", "pass"}

    def test_er_model_passes(self, tmp_path):
        rc = run(
            ["bp-verify", "--preset", "er4", "--samples", "4000", "--ell", "4",
             "--out", str(tmp_path)]
        )
        assert rc == 0


class TestDiagnostics:
    def test_er_diagnostics(self, tmp_path):
        rc = run(
            ["diagnostics", "--preset", "er4", "--n", "500", "--ell", "1", "--k", "2",
             "--out", str(tmp_path)]
        )
        assert rc == 0
        d = json.loads((tmp_path / "diagnostics.json").read_text())
        assert d["weak_ramanujan"]["lhs"] >= d["weak_ramanujan"]["rhs"] - 1e-6
        assert d["bp_identity_max_deviation"] < 1e-8
        assert d["s1"] >= d["s2"]
        assert "cycle_vertex_count" in d
        assert len(d["tiny_suite"]) >= 10
