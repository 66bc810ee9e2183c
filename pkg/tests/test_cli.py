import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given
import hypothesis.strategies as st

from jlforge.cli import TAIL_FIELDS, emit_records, main, parse_records, sweep_record
from jlforge.estimator import SweepRow

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


class TestGolden:
    @pytest.mark.parametrize("name,argv", [
        ("tail.csv", ["tail", "--eps", "0.5", "--m", "16", "--k", "2", "--trials", "5000", "--seed", "7"]),
        ("sweep_dense.csv", ["sweep", "--eps", "0.5", "--m-grid", "16,64", "--trials", "3000", "--seed", "1",
                             "--transform", "dense"]),
        ("gamma.json", ["gamma", "--m", "4", "--s", "4", "--k", "2", "--format", "json"]),
    ])
    def test_matches_golden(self, name, argv):
        code, out, _ = run(*argv)
        assert code == 0
        assert out == (GOLDEN / name).read_text()

    def test_header(self):
        assert (GOLDEN / "tail.csv").read_text().splitlines()[0] == (
            "transform,epsilon,m,k,trials,failures,p_hat,ci_low,ci_high,seed,wall_time_s"
        )


class TestRecords:
    def test_empty(self):
        assert emit_records([]) == ",".join(TAIL_FIELDS) + "\n"

    def test_one_row(self):
        row = SweepRow("dense", 0.5, 64, 4, 100, 3, 0.03, 0.01, 0.08, 9)
        text = emit_records([sweep_record(row)])
        assert len(text.splitlines()) == 2

    @given(st.lists(st.tuples(st.sampled_from(["toeplitz", "circulant", "dense"]),
                              st.floats(0, 1, exclude_min=True, exclude_max=True),
                              st.integers(1, 10**6), st.integers(0, 10**6),
                              st.floats(0, 1), st.floats(0, 1e4)), max_size=5))
    def test_round_trip(self, specs):
        rows = [sweep_record(SweepRow(t, e, m, 2, 10**6, f, p, p / 3, p, m, w)) for t, e, m, f, p, w in specs]
        for fmt in ("csv", "json"):
            assert parse_records(emit_records(rows, fmt), fmt) == rows

    def test_seventeen_digits(self):
        row = sweep_record(SweepRow("toeplitz", 0.1, 8, 2, 10, 1, 0.1, 0.1, 0.1, 0))
        assert "0.10000000000000001" in emit_records([row])

    def test_to_file(self, tmp_path):
        path = tmp_path / "rows.csv"
        emit_records([], path=path)
        assert path.read_text().startswith("transform,")


class TestCommands:
    def test_tail_twice(self):
        argv = ["tail", "--eps", "0.5", "--m", "16", "--k", "2", "--trials", "100000", "--seed", "7"]
        assert run(*argv) == run(*argv)

    def test_gamma(self):
        code, out, _ = run("gamma", "--m", "2", "--s", "2", "--k", "2")
        assert code == 0 and parse_records(out)[0]["count"] == 8

    def test_min_m_vacuous(self):
        code, out, _ = run("min-m", "--eps", "0.25", "--delta", "1", "--transform", "toeplitz")
        assert parse_records(out)[0]["m"] == 1

    def test_embed(self, tmp_path):
        vec = tmp_path / "x.txt"
        vec.write_text("0.6\n0\n-0.8\n0\n")
        code, out, _ = run("embed", "--n", "4", "--m", "2", "--transform", "circulant", "--seed", "3", "--input", str(vec))
        rows = parse_records(out)
        assert code == 0 and [r["index"] for r in rows] == [1, 2]
        assert sum(r["value"] ** 2 for r in rows) > 0

    def test_embed_wrong_length(self, tmp_path):
        vec = tmp_path / "x.txt"
        vec.write_text("1\n0\n")
        code, _, err = run("embed", "--n", "4", "--m", "2", "--seed", "3", "--input", str(vec))
        assert code == 2 and json.loads(err)["error"] == "invalid-argument"

    def test_nvec(self):
        code, out, _ = run("nvec", "--n", "400", "--m", "16", "--k", "2", "--N", "8", "--C", "2", "--eps", "0.5",
                           "--trials", "2000", "--seed", "1")
        rec = parse_records(out)[0]
        assert code == 0 and rec["disjoint"] is True and rec["spacing"] == 24

    def test_codec_check(self):
        code, out, _ = run("codec-check", "--m", "4", "--s", "4", "--k", "1")
        rec = parse_records(out)[0]
        assert code == 0 and rec["tuples"] == rec["round_trip"] == rec["distinct"] == 96

    def test_oracle_suite(self):
        code, out, _ = run("oracle-suite")
        rows = parse_records(out)
        assert code == 0 and all(r["status"] == "ok" for r in rows)

    def test_oracle_suite_small_budget_skips(self):
        code, out, _ = run("oracle-suite", "--budget", "100")
        assert code == 0 and any(r["status"] == "skipped" for r in parse_records(out))

    def test_output_flag(self, tmp_path):
        path = tmp_path / "g.json"
        code, out, _ = run("gamma", "--m", "2", "--s", "2", "--k", "2", "--format", "json", "--output", str(path))
        assert code == 0 and out == ""
        assert json.loads(path.read_text())[0]["count"] == 8


class TestErrors:
    @pytest.mark.parametrize("argv", [
        [], ["bogus"], ["tail", "--eps", "0.5"], ["gamma", "--m", "-1", "--s", "2", "--k", "2"],
        ["sweep", "--eps", "0.5", "--m-grid", "a,b", "--trials", "1", "--seed", "0"],
        ["tail", "--eps", "0.5", "--m", "16", "--k", "3", "--trials", "10", "--seed", "0"],
        ["tail", "--eps", "1.5", "--m", "16", "--k", "2", "--trials", "10", "--seed", "0"],
    ])
    def test_usage(self, argv):
        code, out, err = run(*argv)
        assert code == 2 and out == ""
        assert json.loads(err)["exit_code"] == 2

    def test_resource_limit(self):
        code, _, err = run("gamma", "--m", "8", "--s", "8", "--k", "6")
        assert code == 3 and json.loads(err)["error"] == "resource-limit"

    def test_family_does_not_fit(self):
        code, _, err = run("nvec", "--n", "50", "--m", "16", "--k", "2", "--N", "8", "--C", "2", "--eps", "0.5",
                           "--trials", "10", "--seed", "1")
        assert code == 2 and "maximum feasible N" in json.loads(err)["message"]

    def test_unwritable(self, tmp_path):
        code, _, err = run("gamma", "--m", "2", "--s", "2", "--k", "2", "--output", str(tmp_path / "no" / "x.csv"))
        assert code == 4 and json.loads(err)["error"] == "io"


def test_subprocess_threads_do_not_matter():
    argv = [sys.executable, "-m", "jlforge", "sweep", "--eps", "0.5", "--m-grid", "16,64", "--trials", "20000",
            "--seed", "3"]
    outs = []
    for threads in ("1", "4"):
        env = dict(os.environ, JLFORGE_THREADS=threads)
        outs.append(subprocess.run(argv, env=env, capture_output=True, check=True).stdout)
    assert outs[0] == outs[1]
