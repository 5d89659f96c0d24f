import csv
import json

import numpy as np
import pytest

from pddopt import ioformats
from pddopt.cli import main
from pddopt.errors import InvalidInputError


def run_cli(*args):
    return main([str(a) for a in args])


class TestVminFormat:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((5, 9))
        path = tmp_path / "m.vmin"
        ioformats.write_vmin(path, A)
        np.testing.assert_array_equal(ioformats.read_vmin(path), A)

    def test_header(self, tmp_path):
        path = tmp_path / "m.vmin"
        ioformats.write_vmin(path, np.zeros((3, 4)))
        raw = path.read_bytes()
        assert raw[:4] == b"VMIN"
        assert int.from_bytes(raw[4:8], "little") == 3
        assert int.from_bytes(raw[8:12], "little") == 4
        assert len(raw) == 12 + 8 * 12

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.vmin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(InvalidInputError):
            ioformats.read_vmin(path)

    def test_csv_dispatch(self, tmp_path):
        A = np.arange(6.0).reshape(2, 3)
        path = tmp_path / "m.csv"
        ioformats.write_matrix_csv(path, A)
        np.testing.assert_allclose(ioformats.read_dense_matrix(path), A)

    def test_complex_pairs_roundtrip(self):
        rng = np.random.default_rng(1)
        M = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        np.testing.assert_array_equal(
            ioformats.pairs_to_complex(ioformats.complex_to_pairs(M)), M)


class TestGen:
    def test_deterministic_multicast(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert run_cli("gen", "--app", "multicast", "--nt", 4, "--groups", 2,
                           "--users-per-group", 1, "--seed", 5, "--out", out) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_deterministic_volmin_binary(self, tmp_path):
        a, b = tmp_path / "a.vmin", tmp_path / "b.vmin"
        for out in (a, b):
            assert run_cli("gen", "--app", "volmin", "--n", 6, "--k", 2, "--l", 20,
                           "--snr-db", "inf", "--seed", 7, "--out", out) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_relay_snr_maps_to_power(self, tmp_path):
        out = tmp_path / "r.json"
        run_cli("gen", "--app", "relay", "--ns", 2, "--nr", 2, "--k", 2,
                "--snr-db", 10, "--seed", 0, "--out", out)
        data = json.loads(out.read_text())
        assert data["P_S"] == pytest.approx(10.0)
        assert data["P_R"] == pytest.approx(10.0)

    def test_multicast_pbs_db(self, tmp_path):
        out = tmp_path / "m.json"
        run_cli("gen", "--app", "multicast", "--nt", 8, "--groups", 4,
                "--users-per-group", 2, "--pbs-db", 10, "--seed", 0, "--out", out)
        data = json.loads(out.read_text())
        assert data["P_BS"] == pytest.approx(10.0)
        assert len(data["channels"]) == 8
        assert data["sigma2"] == [1.0] * 8


class TestSolve:
    def test_multicast_end_to_end(self, tmp_path):
        inst = tmp_path / "mc.json"
        run_cli("gen", "--app", "multicast", "--nt", 4, "--groups", 2,
                "--users-per-group", 1, "--seed", 3, "--out", inst)
        outdir = tmp_path / "run"
        code = run_cli("solve", "--app", "multicast", "--instance", inst,
                       "--seed", 3, "--out", outdir)
        results = json.loads((outdir / "results.json").read_text())
        assert set(results) == {"w", "min_rate_bits", "kkt_residual",
                                "feasibility_gap", "iterations"}
        with open(outdir / "trace.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "k"
        assert len(rows) - 1 == results["iterations"]
        # exit code 0 iff converged before the cap
        assert code == (0 if results["feasibility_gap"] <= 1e-4 else 1)

    def test_relay_end_to_end(self, tmp_path):
        inst = tmp_path / "rel.json"
        run_cli("gen", "--app", "relay", "--ns", 2, "--nr", 2, "--k", 2,
                "--snr-db", 10, "--seed", 1, "--out", inst)
        outdir = tmp_path / "run"
        code = run_cli("solve", "--app", "relay", "--instance", inst,
                       "--seed", 1, "--out", outdir)
        assert code == 0
        results = json.loads((outdir / "results.json").read_text())
        assert set(results) == {"V", "F", "sum_rate_nats", "feasibility_gap",
                                "repair_scale", "iterations"}
        assert results["sum_rate_nats"] > 0

    def test_volmin_end_to_end_with_truth(self, tmp_path):
        inst = tmp_path / "v.vmin"
        truth = tmp_path / "truth.json"
        run_cli("gen", "--app", "volmin", "--n", 10, "--k", 3, "--l", 100,
                "--snr-db", "inf", "--seed", 2, "--out", inst,
                "--truth-out", truth)
        outdir = tmp_path / "run"
        run_cli("solve", "--app", "volmin", "--instance", inst, "--k", 3,
                "--truth", truth, "--seed", 2, "--restarts", 2, "--out", outdir)
        results = json.loads((outdir / "results.json").read_text())
        assert set(results) == {"X", "S", "mse_db", "feasibility_gap", "f_eps",
                                "restarts_used"}
        assert results["mse_db"] <= -25.0
        assert results["restarts_used"] == 2

    def test_config_overrides(self, tmp_path):
        inst = tmp_path / "mc.json"
        run_cli("gen", "--app", "multicast", "--nt", 4, "--groups", 2,
                "--users-per-group", 1, "--seed", 3, "--out", inst)
        outdir = tmp_path / "run"
        run_cli("solve", "--app", "multicast", "--instance", inst, "--seed", 3,
                "--max-outer", 2, "--out", outdir)
        results = json.loads((outdir / "results.json").read_text())
        assert results["iterations"] <= 2

    def test_config_file_precedence(self, tmp_path):
        inst = tmp_path / "mc.json"
        run_cli("gen", "--app", "multicast", "--nt", 4, "--groups", 2,
                "--users-per-group", 1, "--seed", 3, "--out", inst)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"max_outer": 3}))
        outdir = tmp_path / "run1"
        run_cli("solve", "--app", "multicast", "--instance", inst, "--seed", 3,
                "--config", cfg, "--out", outdir)
        assert json.loads((outdir / "results.json").read_text())["iterations"] <= 3
        outdir2 = tmp_path / "run2"  # CLI flag wins over the config file
        run_cli("solve", "--app", "multicast", "--instance", inst, "--seed", 3,
                "--config", cfg, "--max-outer", 1, "--out", outdir2)
        assert json.loads((outdir2 / "results.json").read_text())["iterations"] == 1

    def test_generated_instance_without_file(self, tmp_path):
        outdir = tmp_path / "run"
        code = run_cli("solve", "--app", "relay", "--ns", 2, "--nr", 2, "--k", 2,
                       "--snr-db", 10, "--seed", 1, "--out", outdir)
        assert code == 0


class TestBench:
    def test_rows_and_aggregates(self, tmp_path):
        outdir = tmp_path / "bench"
        code = run_cli("bench", "--app", "relay", "--ns", 2, "--nr", 2, "--k", 2,
                       "--snr-db", 10, "--seeds", "1,2,3", "--out", outdir)
        assert code == 0
        with open(outdir / "summary.csv") as fh:
            rows = list(csv.reader(fh))
        per_seed = [r for r in rows[1:] if not r[0].startswith("aggregate")]
        agg = [r for r in rows[1:] if r[0].startswith("aggregate")]
        assert [r[0] for r in per_seed] == ["1", "2", "3"]
        assert {r[0] for r in agg} == {"aggregate_mean", "aggregate_median",
                                       "aggregate_p10", "aggregate_p90"}
        objs = [float(r[2]) for r in per_seed]
        med = [float(r[2]) for r in agg if r[0] == "aggregate_median"][0]
        assert med == pytest.approx(float(np.median(objs)))

    def test_seed_order_invariance(self, tmp_path):
        rows = {}
        for tag, seeds in (("a", "1,2"), ("b", "2,1")):
            outdir = tmp_path / tag
            run_cli("bench", "--app", "relay", "--ns", 2, "--nr", 2, "--k", 2,
                    "--snr-db", 10, "--seeds", seeds, "--out", outdir)
            with open(outdir / "summary.csv") as fh:
                for r in csv.reader(fh):
                    if r and r[0] in ("1", "2"):
                        rows.setdefault(tag, {})[r[0]] = r[2:5]
        assert rows["a"] == rows["b"]

    def test_seed_range_syntax(self, tmp_path):
        outdir = tmp_path / "bench"
        run_cli("bench", "--app", "relay", "--ns", 1, "--nr", 1, "--k", 1,
                "--snr-db", 5, "--seeds", "0..2", "--out", outdir)
        with open(outdir / "summary.csv") as fh:
            rows = list(csv.reader(fh))
        per_seed = [r for r in rows[1:] if not r[0].startswith("aggregate")]
        assert len(per_seed) == 3


class TestVerify:
    def test_numerics_suite_exit_zero(self, capsys):
        assert run_cli("verify", "numerics") == 0
        out = capsys.readouterr().out
        assert "PASS numerics/" in out
        assert "FAIL" not in out

    def test_all_lists_every_suite_once(self):
        from pddopt.verify import SUITES, run_suites

        results = run_suites("all")
        seen = []
        for r in results:
            if r.suite not in seen:
                seen.append(r.suite)
        assert seen == list(SUITES)

    def test_unknown_suite_rejected(self):
        with pytest.raises(SystemExit):
            run_cli("verify", "nonsense")
