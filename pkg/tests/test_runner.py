import io
import json

import pandas as pd
import pytest
from conftest import SYSTEMS

from runner.rmas_runner import EXIT_ERROR, EXIT_OK, EXIT_VIOLATION, build_parser, main, write_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, [json.loads(line) for line in out.splitlines() if line.strip()]


def test_validate(capsys):
    code, rows = run(capsys, "validate", SYSTEMS / "four_agents.yaml")
    assert code == EXIT_OK
    assert rows[0]["kind"] == "system"
    assert rows[0]["class_f"]
    assert len(rows[0]["edges"]) == 5


def test_validate_rejects_non_tlg(capsys):
    code, rows = run(capsys, "validate", SYSTEMS / "not_tlg.yaml")
    assert code == EXIT_ERROR
    assert rows == []


def test_line_eq_triangle(capsys):
    code, rows = run(capsys, "line-eq", SYSTEMS / "triangle.yaml")
    assert code == EXIT_OK
    assert len(rows) == 3
    assert all(r["inertia"] == [1, 3, 2] for r in rows)
    assert [r["case_vector"] for r in rows] == [["between"], ["left_outside"], ["right_outside"]]


def test_line_eq_flags_degenerate_orbit(capsys):
    code, rows = run(capsys, "line-eq", SYSTEMS / "degenerate_triangle.yaml")
    assert code == EXIT_VIOLATION
    assert sum(not r["nondegenerate"] for r in rows) == 1


def test_inertia_at_degenerate_start(capsys):
    code, rows = run(capsys, "inertia", SYSTEMS / "degenerate_triangle.yaml", "--no-refine")
    assert code == EXIT_VIOLATION
    assert rows[0]["inertia"] == [0, 4, 2]


def test_check_inertia_formula(capsys):
    code, rows = run(capsys, "check", "inertia-formula", SYSTEMS / "triangle.yaml")
    assert code == EXIT_OK
    assert len(rows) == 3
    between = next(r for r in rows if r["case"] == "between")
    assert between["difference"] == [1, 0, 1]
    assert between["s1"] == pytest.approx(2.0)


def test_check_inertia_formula_at_given_positions(capsys):
    pts = json.dumps([[0.0, 0.0], [1.4142135, 0.0], [0.7071068, 0.0]])
    code, rows = run(capsys, "check", "inertia-formula", SYSTEMS / "triangle.yaml", "--positions", pts)
    assert code == EXIT_OK
    assert len(rows) == 1
    assert rows[0]["case"] == "between"
    assert rows[0]["difference"] == [1, 0, 1]


def test_check_inertia_formula_reads_start(capsys):
    # start 0 flows to the equilateral orbit, which is not collinear
    code, rows = run(capsys, "check", "inertia-formula", SYSTEMS / "triangle.yaml", "--start", "0")
    assert code == EXIT_ERROR
    assert rows == []


def test_check_index_formula_at_given_positions(capsys):
    pts = json.dumps([[0.0, 0.0], [1.0, 0.0], [0.5, 3 ** 0.5 / 2]])
    code, rows = run(capsys, "check", "index-formula", SYSTEMS / "triangle.yaml", "--positions", pts, "--no-refine")
    assert code == EXIT_OK
    assert rows[0]["full"] == [0, 3, 3]
    assert rows[0]["parts"] == [[0, 3, 1]] * 3


def test_check_index_formula_off_equilibrium_is_an_error(capsys):
    pts = json.dumps([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]])
    code, _ = run(capsys, "check", "index-formula", SYSTEMS / "triangle.yaml", "--positions", pts, "--no-refine")
    assert code == EXIT_ERROR


def test_bad_positions_json(capsys):
    code, _ = run(capsys, "partition", SYSTEMS / "triangle.yaml", "--positions", "[[0, 0],")
    assert code == EXIT_ERROR


def test_partition_of_collinear_start(capsys):
    code, rows = run(capsys, "partition", SYSTEMS / "degenerate_triangle.yaml")
    assert code == EXIT_OK
    assert rows[0]["partition"] == [[[1, 2], [1, 3], [2, 3]]]


def test_flow_from_every_start(capsys):
    code, rows = run(capsys, "flow", SYSTEMS / "two_agents.yaml", "--refine")
    assert code == EXIT_OK
    assert [r["start"] for r in rows] == [0, 1]
    assert all(r["status"] == "converged" for r in rows)
    assert all("refined" in r for r in rows)


def test_tolerance_flags_override(capsys):
    code, rows = run(capsys, "report", SYSTEMS / "two_agents.yaml", "--tol-zero-eig", "1e-6")
    assert code == EXIT_OK
    assert rows[-1]["meta"]["tolerances"]["zero_tol"] == 1e-6
    assert rows[-1]["equivariant_morse"]


def test_scan_csv_has_aggregate_row(tmp_path):
    out = tmp_path / "scan.csv"
    code = main(["scan", str(SYSTEMS / "triangle.yaml"), "--samples", "3", "--format", "csv", "--out", str(out)])
    assert code == EXIT_OK
    df = pd.read_csv(out)
    assert df["id"].iloc[-1] == "__aggregate__"
    assert df["orbits"].iloc[-1] == pytest.approx(3.0)
    assert list(df["kind"].iloc[:4]) == ["sample"] * 3 + ["summary"]


def test_scan_with_injected_degenerate_ensemble(capsys):
    code, rows = run(
        capsys, "scan", SYSTEMS / "triangle.yaml", "--samples", "2", "--inject", SYSTEMS / "degenerate_triangle.yaml"
    )
    assert code == EXIT_VIOLATION
    assert rows[-1]["degenerate"] == 1
    assert rows[-1]["repaired"] == 1
    assert rows[-1]["tolerance_config"]["id"] == "rmas-tolerances-v1"


def test_scan_rejects_injection_on_other_graph(capsys):
    code, _ = run(capsys, "scan", SYSTEMS / "triangle.yaml", "--samples", "1", "--inject", SYSTEMS / "two_agents.yaml")
    assert code == EXIT_ERROR


def test_report_markdown(tmp_path):
    out = tmp_path / "report.md"
    assert main(["report", str(SYSTEMS / "two_agents.yaml"), "--format", "md", "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert text.startswith("# RMAS Scorecard")
    assert "**Verdict:** pass" in text


def test_triangle_report_passes(tmp_path):
    out = tmp_path / "triangle.md"
    assert main(["report", str(SYSTEMS / "triangle.yaml"), "--format", "md", "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "**Verdict:** pass" in text
    assert "flow_failure" not in text


def test_spec_from_stdin(capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO((SYSTEMS / "two_agents.yaml").read_text()))
    code, rows = run(capsys, "line-eq", "-")
    assert code == EXIT_OK
    assert rows[0]["distances"] == {"1-2": pytest.approx(1.0)}


def test_check_requires_known_formula():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["check", "morse", "x.yaml"])


def test_write_csv_flattens_nested_values(tmp_path):
    out = tmp_path / "rows.csv"
    write_csv([{"kind": "a", "inertia": [0, 3, 1], "residual": 1.0}, {"kind": "a", "residual": 3.0}], out)
    df = pd.read_csv(out)
    assert df["inertia"].iloc[0] == "[0, 3, 1]"
    assert list(df["id"]) == ["a-0", "a-1", "__aggregate__"]
    assert df["residual"].iloc[-1] == pytest.approx(2.0)
