import os
from pathlib import Path

import pytest

from hetsim.cli import main

SCENARIO = """\
users: 8
pbs_count: 4
rng_seed: 5
"""


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(SCENARIO)
    return str(path)


def _run(args):
    return main(args)


class TestRunCommand:
    def test_zero_slots_header_only(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        code = _run(["run", "--scenario", scenario_file, "--algo", "lcuas",
                     "--slots", "0", "--seeds", "1", "--out", str(out)])
        assert code == 0
        run_csv = (out / "run_lcuas_seed1.csv").read_text()
        lines = run_csv.strip().splitlines()
        assert lines[0].startswith("# scenario_hash=")
        assert lines[2] == "slot,overall_bps,effective_bps,satisfied,decision_us"
        assert len(lines) == 3
        agg = (out / "aggregate.csv").read_text().strip().splitlines()
        assert len(agg) == 2  # hash comment + header only

    def test_byte_identical_reruns(self, scenario_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            code = _run(["run", "--scenario", scenario_file, "--algo", "omsc",
                         "--slots", "4", "--seeds", "1,2", "--out", str(out)])
            assert code == 0
        for name in ("run_omsc_seed1.csv", "run_omsc_seed2.csv", "aggregate.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_sweep_rows_tagged(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        code = _run(["run", "--scenario", scenario_file, "--algo", "lcuas",
                     "--slots", "2", "--seeds", "1", "--out", str(out),
                     "--sweep", "users=6,8"])
        assert code == 0
        rows = [line for line in (out / "aggregate.csv").read_text().splitlines()
                if line and not line.startswith(("#", "algo,"))]
        assert len(rows) == 2
        assert rows[0].split(",")[1] == "users=6"
        assert rows[1].split(",")[1] == "users=8"
        hashes = {row.split(",")[-1] for row in rows}
        assert len(hashes) == 2  # different effective scenarios

    def test_bad_scenario_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("users: 8\nnot_a_key: 1\n")
        code = _run(["run", "--scenario", str(path), "--algo", "omsc",
                     "--slots", "1", "--out", str(tmp_path / "out")])
        assert code == 2
        err = capsys.readouterr().err
        assert "bad.yaml:2" in err
        assert "not_a_key" in err

    def test_missing_scenario_exits_2(self, tmp_path):
        code = _run(["run", "--scenario", str(tmp_path / "nope.yaml"),
                     "--algo", "omsc", "--slots", "1",
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_env_seed_override(self, scenario_file, tmp_path, monkeypatch):
        out = tmp_path / "out"
        monkeypatch.setenv("HETNET_SEED", "77")
        code = _run(["run", "--scenario", scenario_file, "--algo", "lcuas",
                     "--slots", "1", "--out", str(out)])
        assert code == 0
        assert (out / "run_lcuas_seed77.csv").exists()

    def test_timing_flag_populates_decision_column(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        _run(["run", "--scenario", scenario_file, "--algo", "omsc",
              "--slots", "2", "--seeds", "1", "--out", str(out), "--timing"])
        rows = (out / "run_omsc_seed1.csv").read_text().strip().splitlines()[3:]
        assert all(float(r.split(",")[4]) > 0.0 for r in rows)


def _write_fixture_run(path: Path, algo: str, seed: int, s_hash: str,
                       overall: float, effective: float, satisfied: int) -> None:
    path.mkdir(parents=True, exist_ok=True)
    lines = [f"# scenario_hash={s_hash}",
             f"# algo={algo} seed={seed} slots=2",
             "slot,overall_bps,effective_bps,satisfied,decision_us",
             f"0,{overall},{effective},{satisfied},100",
             f"1,{overall},{effective},{satisfied},100"]
    (path / f"run_{algo}_seed{seed}.csv").write_text("\n".join(lines) + "\n")


class TestSummarize:
    def test_single_run_reproduces_aggregates(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "out"
        _run(["run", "--scenario", scenario_file, "--algo", "omsc",
              "--slots", "3", "--seeds", "1", "--out", str(out)])
        code = _run(["summarize", str(out)])
        assert code == 0
        table = capsys.readouterr().out
        agg_row = [line for line in (out / "aggregate.csv").read_text().splitlines()
                   if line.startswith("omsc,")][0]
        overall_mean = agg_row.split(",")[4]
        assert f"omsc,overall_bps,{overall_mean}" in table

    def test_mean_of_two_seeds(self, tmp_path, capsys):
        fix = tmp_path / "fix"
        _write_fixture_run(fix, "omsc", 1, "cafe", 10.0, 8.0, 3)
        _write_fixture_run(fix, "omsc", 2, "cafe", 20.0, 16.0, 5)
        assert _run(["summarize", str(fix)]) == 0
        out = capsys.readouterr().out
        assert "omsc,overall_bps,15," in out
        assert "omsc,satisfied,4," in out

    def test_rank_ordering_from_fixture(self, tmp_path, capsys):
        fix = tmp_path / "fix"
        _write_fixture_run(fix, "omsc", 1, "cafe", 30.0, 28.0, 6)
        _write_fixture_run(fix, "sdmab-sc", 1, "cafe", 20.0, 18.0, 4)
        _write_fixture_run(fix, "lcuas", 1, "cafe", 10.0, 8.0, 2)
        assert _run(["summarize", str(fix)]) == 0
        out = capsys.readouterr().out
        ranks = {}
        for line in out.splitlines():
            if line.endswith(("1", "2", "3")) and "," in line:
                parts = line.split(",")
                if parts[1] == "overall_bps":
                    ranks[parts[0]] = int(parts[-1])
        assert ranks == {"omsc": 1, "sdmab-sc": 2, "lcuas": 3}

    def test_mixed_hashes_refused(self, tmp_path, capsys):
        fix1, fix2 = tmp_path / "one", tmp_path / "two"
        _write_fixture_run(fix1, "omsc", 1, "aaaa", 10.0, 8.0, 3)
        _write_fixture_run(fix2, "lcuas", 1, "bbbb", 10.0, 8.0, 3)
        code = _run(["summarize", str(fix1), str(fix2)])
        assert code == 2
        assert "mixed scenarios" in capsys.readouterr().err

    def test_output_file(self, tmp_path):
        fix = tmp_path / "fix"
        _write_fixture_run(fix, "omsc", 1, "cafe", 10.0, 8.0, 3)
        target = tmp_path / "summary.csv"
        assert _run(["summarize", str(fix), "--out", str(target)]) == 0
        assert target.read_text().splitlines()[1] == (
            "algo,metric,mean,ci95_lo,ci95_hi,n_seeds,rank")
