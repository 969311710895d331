import csv
import json

import numpy as np
import pytest

from qstatemc.cli import RunConfig, RunReport, build_parser, run
from qstatemc.io import read_sample, write_csv, write_sample
from qstatemc.samplers.weighted import WeightedSample


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _sample(tmp_path, name, *extra, method="reject", pom="trine", n=100, seed=7):
    out = tmp_path / name
    code = run(["sample", "--pom", pom, "--target", "prior-primitive", "--method", method,
                "-n", str(n), "--seed", str(seed), "--out", str(out), *extra])
    assert code == 0
    return out


class TestDeterminism:
    @pytest.mark.parametrize("method,extra", [
        ("reject", ()), ("importance", ()), ("mcmc", ("--chains", "2")), ("mcmc", ("--tune",)),
    ])
    def test_same_seed_same_bytes(self, tmp_path, method, extra):
        out = _sample(tmp_path, "s.jsonl", *extra, method=method)
        first = out.read_bytes()
        out.unlink()
        _sample(tmp_path, "s.jsonl", *extra, method=method)
        assert out.read_bytes() == first

    def test_different_seed_differs(self, tmp_path):
        a = _sample(tmp_path, "a.jsonl", seed=1)
        b = _sample(tmp_path, "b.jsonl", seed=2)
        pa, _ = read_sample(a)
        pb, _ = read_sample(b)
        assert not np.array_equal(pa.points, pb.points)

    def test_threads_do_not_change_output(self, tmp_path, monkeypatch):
        out = _sample(tmp_path, "s.jsonl", pom="tat", n=50)
        first = out.read_bytes()
        monkeypatch.setenv("QSS_THREADS", "3")
        _sample(tmp_path, "s.jsonl", pom="tat", n=50)
        second = out.read_bytes()
        # the thread count is recorded, the points are not affected
        strip = lambda raw: raw.split(b"\n", 1)[1]
        assert strip(first) == strip(second)


class TestSampleFiles:
    def test_header_round_trip(self, tmp_path):
        out = _sample(tmp_path, "s.jsonl", "--chains", "2", method="mcmc")
        sample, header = read_sample(out)
        cfg = RunConfig.from_dict(header["config"])
        ns = build_parser().parse_args(["sample", "--pom", "trine", "--target", "prior-primitive",
                                        "--method", "mcmc", "-n", "100", "--seed", "7",
                                        "--out", str(out), "--chains", "2"])
        assert cfg == RunConfig.from_namespace(ns)
        assert RunConfig.from_dict(cfg.to_dict()) == cfg
        assert header["count"] == len(sample) == 100
        assert set(np.unique(sample.chain)) == {0, 1}

    def test_records(self, tmp_path):
        out = tmp_path / "post.jsonl"
        assert run(["sample", "--pom", "tetra", "--target", "posterior-primitive", "--data", "5,3,2,2",
                    "--method", "importance", "-n", "200", "--seed", "3", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert "header" in json.loads(lines[0])
        recs = [json.loads(line) for line in lines[1:]]
        assert len(recs) == 200
        assert all(set(r) == {"p", "w", "logL"} for r in recs)
        for r in recs:
            if r["w"] > 0:
                p = np.array(r["p"])
                assert r["logL"] == pytest.approx(float(np.dot([5, 3, 2, 2], np.log(p))))

    def test_count_mismatch_detected(self, tmp_path):
        out = _sample(tmp_path, "s.jsonl")
        lines = out.read_text().splitlines()
        out.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ValueError, match="declares"):
            read_sample(out)

    def test_io_round_trip(self, tmp_path):
        s = WeightedSample(np.array([[0.5, 0.5], [0.2, 0.8]]), np.array([1.0, 2.0]), np.array([0, 1]),
                           {"method": "mcmc", "x": float("nan")})
        path = tmp_path / "x.jsonl"
        write_sample(path, s, {"config": {}})
        back, header = read_sample(path)
        assert np.array_equal(back.points, s.points)
        assert np.array_equal(back.weights, s.weights)
        assert np.array_equal(back.chain, s.chain)
        assert header["meta"]["x"] is None

    def test_csv_na(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b"], [(0.5, None), (1, float("nan"))])
        head, rows = _read_csv(path)
        assert head == ["a", "b"]
        assert rows == [["0.5", "NA"], ["1", "NA"]]


class TestCheck:
    def test_physical(self, capsys):
        assert run(["check", "--pom", "trine", "--point", "0.34,0.33,0.33"]) == 0
        assert capsys.readouterr().out.splitlines()[0] == "physical"

    def test_unphysical(self, capsys):
        assert run(["check", "--pom", "trine", "--point", "1,0,0"]) == 1
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "unphysical"
        assert float(out[1].split("=")[1]) == pytest.approx(np.log(2 / 3), abs=1e-6)

    @pytest.mark.parametrize("argv", [
        ["check", "--pom", "trine", "--point", "0.5,0.5"],
        ["check", "--pom", "nope", "--point", "1,0,0"],
        ["check", "--pom", "trine", "--point", "0.5,0.6,0.1"],
        ["sample", "--pom", "trine", "--target", "posterior-primitive", "--method", "reject", "-n", "5"],
        ["sample", "--pom", "trine", "--target", "prior-primitive", "--method", "mcmc", "-n", "5",
         "--sigma", "0.1", "--tune"],
        ["bench", "--strategies", "fastest"],
        [],
    ])
    def test_bad_flags_exit_2(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            run(argv)
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_runtime_error_exit_1(self, tmp_path, capsys):
        code = run(["analyze", "size-curve", "--in", str(tmp_path / "missing.jsonl"), "--data", "1,1,1"])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_bad_thread_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QSS_THREADS", "many")
        code = run(["sample", "--pom", "trine", "--target", "prior-primitive", "--method", "reject",
                    "-n", "5", "--seed", "1", "--out", str(tmp_path / "x.jsonl")])
        assert code == 1


class TestReport:
    def test_acceptance_rate_exact(self):
        r = RunReport(RunConfig(("sample",)), proposed=7, accepted=3)
        assert r.acceptance_rate == 3 / 7
        assert "acceptance_rate" in r.summary()

    def test_summary_on_stderr(self, tmp_path, capsys):
        _sample(tmp_path, "s.jsonl")
        err = capsys.readouterr().err
        assert "proposed=" in err and "rng=" in err and "version=" in err

    def test_missing_seed_is_generated(self, tmp_path, capsys):
        out = tmp_path / "s.jsonl"
        run(["sample", "--pom", "trine", "--target", "prior-primitive", "--method", "reject", "-n", "5",
             "--out", str(out)])
        err = capsys.readouterr().err
        seed = int(err.split("using --seed ")[1].split()[0])
        _, header = read_sample(out)
        assert header["config"]["seed"] == seed


class TestAnalyze:
    def test_purity(self, tmp_path):
        src = _sample(tmp_path, "s.jsonl", pom="tetra", n=2000)
        out = tmp_path / "purity.csv"
        assert run(["analyze", "purity", "--in", str(src), "--prior", "II", "--dim", "2", "--bins", "10",
                    "--out", str(out)]) == 0
        head, rows = _read_csv(out)
        assert head == ["bin_center", "empirical_density", "analytic_density_or_NA"]
        assert len(rows) == 10
        assert all(r[2] != "NA" for r in rows)

    def test_size_curve(self, tmp_path):
        src = _sample(tmp_path, "s.jsonl", pom="tetra", n=2000)
        out = tmp_path / "size.csv"
        assert run(["analyze", "size-curve", "--in", str(src), "--data", "5,3,2,2", "--pom", "tetra",
                    "--out", str(out)]) == 0
        head, rows = _read_csv(out)
        assert head == ["lambda", "size", "std_error"]
        assert len(rows) == 21
        sizes = [float(r[1]) for r in rows]
        assert sizes[0] == 1.0 and np.all(np.diff(sizes) <= 0)

    def test_separable(self, tmp_path):
        src = _sample(tmp_path, "s.jsonl", pom="tetra2", n=20)
        out = tmp_path / "sep.csv"
        assert run(["analyze", "separable", "--in", str(src), "--bins", "3", "--out", str(out)]) == 0
        head, rows = _read_csv(out)
        assert head[:3] == ["purity_low", "purity_high", "separable_fraction"]
        assert len(rows) == 4


BENCH_COLUMNS = ["strategy", "points", "wall_time_s", "iterations", "acceptance_rate"]


def _bench(tmp_path, n, strategies):
    out = tmp_path / "bench.csv"
    assert run(["bench", "-n", str(n), "--seed", "5", "--strategies", ",".join(strategies),
                "--out", str(out)]) == 0
    head, rows = _read_csv(out)
    assert head == BENCH_COLUMNS
    return {r[0]: r for r in rows}


class TestBench:
    def test_check_strategies(self, tmp_path):
        rows = _bench(tmp_path, 300, ["check-dg", "check-cg", "check-param"])
        assert int(rows["check-cg"][3]) < int(rows["check-dg"][3])
        assert float(rows["check-param"][2]) <= 3 * float(rows["check-cg"][2])
        # all three strategies classify the same points
        assert rows["check-param"][4] == rows["check-cg"][4] == rows["check-dg"][4]

    @pytest.mark.slow
    def test_mcmc_cg_fewer_iterations(self, tmp_path):
        rows = _bench(tmp_path, 300, ["mcmc-dg-primitive", "mcmc-cg-primitive"])
        assert int(rows["mcmc-cg-primitive"][3]) < int(rows["mcmc-dg-primitive"][3])

    def test_primitive_vs_jeffreys(self, tmp_path):
        rows = _bench(tmp_path, 3000, ["mcmc-param-primitive", "mcmc-param-jeffreys"])
        prim, jeff = rows["mcmc-param-primitive"], rows["mcmc-param-jeffreys"]
        assert prim[1] == jeff[1]
        ratio = float(jeff[2]) / float(prim[2])
        assert 0.5 <= ratio <= 2.0, f"time ratio {ratio:.2f}"
