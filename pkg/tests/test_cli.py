"""Command-line front end: exit codes, JSON reports and determinism."""

import io
import json
import subprocess
import sys

import pytest

from kktcert import fixtures
from kktcert.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, STATUS_EXIT, UsageError, parse_point, run
from kktcert.model import STATUSES


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


HYP1 = fixtures.path("hyp1")
DISK = fixtures.path("diskcomp")
DEGEN = fixtures.path("degen")


class TestExamples:
    def test_certify_hyp1(self):
        code, out, _ = cli("certify", HYP1, "--at", "1,1", "--seed", 42, "--json")
        doc = json.loads(out)
        assert code == EXIT_OK
        assert doc["result"]["status"] == "CERTIFIED_MODULO_SAMPLING"
        assert doc["seed"] == 42 and doc["version"].startswith("kktcert ")

    def test_falsify_diskcomp(self):
        code, out, _ = cli("falsify-convexity", DISK, "--samples", 1000)
        assert code == EXIT_FAILED
        witness_lines = [line for line in out.splitlines() if "witness" in line]
        assert len(witness_lines) == 1

    def test_missing_file(self):
        code, _, err = cli("solve", "nosuch.prob")
        assert code == EXIT_USAGE and "nosuch.prob" in err


class TestCommands:
    def test_solve(self):
        code, out, _ = cli("solve", HYP1, "--json")
        r = json.loads(out)["result"]
        assert code == EXIT_OK and r["converged"]
        assert r["fstar"] == pytest.approx(2.0, abs=1e-5)

    def test_solve_trace(self, tmp_path):
        trace = tmp_path / "trace.jsonl"
        code, _, _ = cli("solve", HYP1, "--trace", trace)
        records = [json.loads(line) for line in trace.read_text().splitlines()]
        assert code == EXIT_OK and len(records) == 40
        assert all(r["max_constraint"] < 0 for r in records)

    def test_check_slater(self):
        assert cli("check-slater", HYP1)[0] == EXIT_OK
        assert cli("check-slater", DEGEN)[0] == EXIT_FAILED

    def test_check_nondegeneracy(self):
        assert cli("check-nondegeneracy", HYP1, "--samples", 50)[0] == EXIT_OK
        code, out, _ = cli("check-nondegeneracy", DEGEN, "--samples", 50)
        assert code == EXIT_FAILED and "failure at (0)" in out

    def test_recover_multipliers(self):
        code, out, _ = cli("recover-multipliers", HYP1, "--at", "1,1", "--json")
        assert code == EXIT_OK
        assert json.loads(out)["result"]["lambda"][0] == pytest.approx(1.0, abs=1e-15)
        assert cli("recover-multipliers", HYP1, "--at", "2,2")[0] == EXIT_FAILED

    def test_fritz_john(self):
        code, out, _ = cli("fritz-john", DEGEN, "--at", "0", "--json")
        r = json.loads(out)["result"]
        assert code == EXIT_FAILED and r["status"] == "DEGENERATE_FJ" and r["lambda0"] == 0.0

    def test_oracle(self):
        code, out, _ = cli("oracle", HYP1, "--grid", 101, "--rounds", 4, "--json")
        assert code == EXIT_OK
        assert json.loads(out)["result"]["value"] == pytest.approx(2.0, abs=1e-3)

    def test_probe_lagrangian(self):
        code, out, _ = cli("probe-lagrangian", HYP1, "--at", "1,1", "--samples", 100, "--json")
        r = json.loads(out)["result"]
        assert code == EXIT_OK and r["convex_evidence"] is False
        assert r["min_hessian_eigenvalue_seen"] == pytest.approx(-1.0, abs=1e-6)

    def test_probe_needs_kkt_point(self):
        assert cli("probe-lagrangian", HYP1, "--at", "2,2")[0] == EXIT_FAILED

    def test_certify_without_point_uses_solver(self):
        code, out, _ = cli("certify", HYP1, "--samples", 100, "--json")
        c = json.loads(out)["result"]
        assert code == EXIT_OK and c["x"] == pytest.approx([1.0, 1.0], abs=1e-5)

    def test_degenerate_certify(self):
        code, out, _ = cli("certify", DEGEN, "--at", "0", "--json")
        assert code == EXIT_FAILED and json.loads(out)["result"]["status"] == "NO_SLATER"

    def test_tolerance_override(self):
        code, out, _ = cli("check-slater", HYP1, "--eps-kkt", "1e-8", "--json")
        assert json.loads(out)["tolerances"]["eps_kkt"] == 1e-8


class TestErrors:
    def test_unknown_command(self):
        assert cli("maximize", HYP1)[0] == EXIT_USAGE

    def test_malformed_point(self):
        code, _, err = cli("recover-multipliers", HYP1, "--at", "1,x")
        assert code == EXIT_USAGE and "malformed point" in err

    def test_point_length(self):
        assert cli("fritz-john", HYP1, "--at", "1,1,1")[0] == EXIT_USAGE

    def test_point_required(self):
        code, _, err = cli("fritz-john", HYP1)
        assert code == EXIT_USAGE and "--at" in err

    def test_infeasible_point(self):
        assert cli("recover-multipliers", HYP1, "--at", "0.5,0.5")[0] == EXIT_FAILED

    def test_malformed_problem_file(self, tmp_path):
        bad = tmp_path / "bad.prob"
        bad.write_text("n = 1\nbox = [0,1]\nminimize: x1 +\nsubject_to:\n  x1 <= 0\n")
        code, _, err = cli("solve", bad)
        assert code == EXIT_USAGE and "line 3" in err

    def test_parse_point(self):
        assert parse_point("1, 2.5e-1", 2) == (1.0, 0.25)
        with pytest.raises(UsageError):
            parse_point("", 1)


class TestInvariants:
    def test_exit_code_mapping_is_total(self):
        assert set(STATUS_EXIT) == set(STATUSES)
        assert STATUS_EXIT["CERTIFIED_MODULO_SAMPLING"] == EXIT_OK
        assert all(v == EXIT_FAILED for k, v in STATUS_EXIT.items() if k != "CERTIFIED_MODULO_SAMPLING")

    @pytest.mark.parametrize("path, at", [(HYP1, "1,1"), (DISK, "1,0")])
    def test_byte_identical_json(self, path, at):
        a = cli("certify", path, "--at", at, "--samples", 300, "--json")
        b = cli("certify", path, "--at", at, "--samples", 300, "--json")
        assert a == b

    def test_one_json_document(self):
        _, out, _ = cli("falsify-convexity", DISK, "--samples", 50, "--json")
        assert json.loads(out)["command"] == "falsify-convexity"

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "kktcert", "check-slater", str(HYP1), "--json"], capture_output=True, text=True
        )
        assert proc.returncode == EXIT_OK
        assert json.loads(proc.stdout)["result"]["type"] == "SlaterCertificate"
