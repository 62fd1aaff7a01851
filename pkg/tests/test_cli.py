"""The batch front end: exit codes, report format, determinism."""

import json
import os
import subprocess
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PROBLEMS = os.path.join(ROOT, "problems")


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "diracgen.cli", *args],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )


def records(stdout: str):
    return [json.loads(line) for line in stdout.splitlines() if line]


def problem(name: str) -> str:
    return os.path.join(PROBLEMS, name)


class TestCheck:
    def test_e1_passes(self):
        out = run_cli("check", problem("e1.json"))
        assert out.returncode == 0
        recs = records(out.stdout)
        assert recs[0]["record"] == "provenance"
        assert recs[-1] == {"record": "verdict", "passed": True, "exit_code": 0}

    def test_leaf_form_component_rejected(self, tmp_path):
        data = json.load(open(problem("e1.json")))
        data["sections"]["D"][0]["form"] = ["exp(x1)", "0", "0"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        out = run_cli("check", str(path))
        assert out.returncode == 2
        assert "sections.D[0]" in out.stderr

    def test_malformed_expression_reports_position(self, tmp_path):
        data = json.load(open(problem("e1.json")))
        data["sections"]["D"][0]["vector"][1] = "exp(x1"
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        out = run_cli("check", str(path))
        assert out.returncode == 2
        assert "position" in out.stderr
        assert "sections.D[0].vector[1]" in out.stderr

    def test_invalid_json_reports_location(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{ not json")
        out = run_cli("check", str(path))
        assert out.returncode == 2
        assert "line" in out.stderr

    def test_wrong_format_version(self, tmp_path):
        data = json.load(open(problem("e1.json")))
        data["format_version"] = 99
        path = tmp_path / "v99.json"
        path.write_text(json.dumps(data))
        out = run_cli("check", str(path))
        assert out.returncode == 2


class TestInvariantGenerators:
    def test_e1_frame_matches_oracle(self):
        out = run_cli("invariant-generators", problem("e1.json"), "--samples", "4")
        assert out.returncode == 0
        frames = [r for r in records(out.stdout) if r["record"] == "frame"]
        assert frames
        for rec in frames:
            col = rec["columns"][0]
            assert abs(col[1] - 1.0) < 1e-6 and abs(col[4] - 1.0) < 1e-6
            for idx in (0, 2, 3, 5):
                assert abs(col[idx]) < 1e-6

    def test_e2_pi_column(self):
        out = run_cli(
            "invariant-generators", problem("e2.json"),
            "--samples", "4", "--dump-intermediates",
        )
        assert out.returncode == 0
        dumps = [r for r in records(out.stdout) if r["record"] == "intermediates"]
        assert dumps
        for rec in dumps:
            x1 = rec["point"][0]
            assert abs(rec["Pi"][0] + x1) < 1e-6
            assert abs(rec["Pi"][1] + x1) < 1e-6

    def test_hypothesis_violation_exit_one_with_stage(self):
        out = run_cli("invariant-generators", problem("bad_hypothesis.json"))
        assert out.returncode == 1
        assert "Step 1" in out.stderr


class TestDiracReduce:
    def test_translation_all_pass(self):
        out = run_cli("dirac-reduce", problem("translation_reduce.json"), "--samples", "8")
        assert out.returncode == 0
        verdict = records(out.stdout)[-1]
        assert verdict["passed"] is True

    def test_rotation_annulus_all_pass(self):
        out = run_cli("dirac-reduce", problem("rotation_reduce.json"), "--samples", "8")
        assert out.returncode == 0

    def test_rank_jump_fails_with_witnesses(self):
        out = run_cli("dirac-reduce", problem("rank_jump.json"), "--samples", "8")
        assert out.returncode == 1
        recs = records(out.stdout)
        scan = [r for r in recs if r.get("check") == "constant-rank-intersection"]
        assert scan and not scan[0]["passed"]
        assert "rank 1" in scan[0]["detail"] and "rank 2" in scan[0]["detail"]
        assert recs[-1]["failed_stage"] == "rank scan"

    def test_determinism_byte_identical(self):
        a = run_cli("dirac-reduce", problem("translation_reduce.json"), "--seed", "5")
        b = run_cli("dirac-reduce", problem("translation_reduce.json"), "--seed", "5")
        assert a.returncode == b.returncode == 0
        assert a.stdout == b.stdout

    def test_output_flag_writes_file(self, tmp_path):
        target = tmp_path / "report.jsonl"
        out = run_cli(
            "dirac-reduce", problem("translation_reduce.json"),
            "--samples", "4", "--output", str(target),
        )
        assert out.returncode == 0
        assert out.stdout == ""
        recs = [json.loads(line) for line in target.read_text().splitlines()]
        assert recs[0]["record"] == "provenance"
        assert recs[-1]["record"] == "verdict"
