from __future__ import annotations

import json
import subprocess
import sys

import pytest

from procoh.cli_reporting import (
    EXIT_FAIL,
    EXIT_INVALID,
    EXIT_OK,
    ScenarioError,
    evaluate_expression,
    extraspecial3_document,
    gl2_document,
    jordan_table,
    load_scenario,
    main,
    primitive_root,
    provenance,
    render_text,
    result_to_dict,
)


def run_main(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_jordan_tables(capsys):
    assert jordan_table(3, 1) == [1] * 7
    assert jordan_table(3, 3) == [1, 0, 0, 0, 0, 0, 0]
    assert jordan_table(5, 3) == [1] * 7
    assert jordan_table(5, 5) == [1, 0, 0, 0, 0, 0, 0]
    code, out, _ = run_main(capsys, "jordan-table", "--p", "3", "--k", "3")
    assert code == EXIT_OK and out.strip().endswith("1,0,0,0,0,0,0")
    code, _, err = run_main(capsys, "jordan-table", "--p", "3", "--k", "4")
    assert code == EXIT_INVALID and "block size" in err
    code, _, _ = run_main(capsys, "jordan-table", "--p", "4", "--k", "1")
    assert code == EXIT_INVALID


def test_primitive_roots():
    assert [primitive_root(p) for p in (3, 5, 7, 11)] == [2, 2, 3, 2]


def test_scenario_errors(capsys):
    with pytest.raises(ScenarioError):
        load_scenario("extraspecial3", 5)
    code, _, _ = run_main(capsys, "e2", "--scenario", "no-such-file.json")
    assert code == EXIT_INVALID
    with pytest.raises(SystemExit):
        main(["e2"])


def test_e2_json_mirrors_text(capsys):
    code, text, _ = run_main(capsys, "e2", "gl2", "--p", "5")
    assert code == EXIT_OK
    code, js, _ = run_main(capsys, "e2", "--scenario", "gl2", "--p", "5", "--format", "json")
    doc = json.loads(js)
    for line in text.splitlines()[1:]:
        cell, _, names = line.strip().partition(" dim ")
        n, m = cell.strip("()").split(",")
        listed = names.split(": ", 1)[1].split("  [")[0].split(", ")
        assert doc["cells"][f"{n},{m}"] == listed


def test_extraspecial_corner_dump(capsys):
    code, out, _ = run_main(capsys, "e2", "extraspecial3", "--format", "json")
    cells = json.loads(out)["cells"]
    for key, names in extraspecial3_document()["expected"]["e2_corner"].items():
        assert cells[key] == names


def test_stable_command(capsys):
    code, out, _ = run_main(capsys, "stable", "gl2", "--p", "3", "--format", "json")
    doc = json.loads(out)
    assert sorted(map(tuple, doc["generators"])) == sorted([("y1", 0, 1), ("y4", 0, 3), ("uv", 3, 0), ("v^2", 4, 0)])


def test_run_verify_exit_codes(capsys):
    code, out, _ = run_main(capsys, "run", "gl2", "--p", "3", "--verify")
    assert code == EXIT_OK and out.rstrip().endswith("PASS")


def test_verify_mismatch_reports_cells(tmp_path, capsys):
    doc = gl2_document(3)
    doc["expected"]["e2_corner"]["1,2"] = ["uy3"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    code, out, _ = run_main(capsys, "run", "--scenario", str(path), "--verify")
    assert code == EXIT_FAIL
    assert "MISMATCH E2 cell (1,2)" in out and out.rstrip().endswith("FAIL")


def test_json_scenario_file_matches_builtin(tmp_path, capsys):
    path = tmp_path / "gl2.json"
    path.write_text(json.dumps(gl2_document(3)))
    _, from_file, _ = run_main(capsys, "run", "--scenario", str(path), "--format", "json")
    _, builtin, _ = run_main(capsys, "run", "gl2", "--p", "3", "--format", "json")
    a, b = json.loads(from_file), json.loads(builtin)
    a.pop("timings", None), b.pop("timings", None)
    assert a == b


def test_provenance_lists_assumptions_verbatim(gl2_p3, extraspecial):
    for res in (gl2_p3, extraspecial):
        lines = provenance(res.scenario)
        text = render_text(res)
        for a in res.scenario.assumptions:
            assert any(a["note"] in line and f"[{a['tag']}]" in line for line in lines)
            assert a["note"] in text
    assert "collapse" in "\n".join(provenance(extraspecial.scenario)).lower()


def test_report_json_mirrors_sections(gl2_p5):
    doc = result_to_dict(gl2_p5)
    text = render_text(gl2_p5)
    assert doc["differentials"]["constraint"] == "alpha ≠ 0"
    assert "d2(y4) = alpha vy3 + beta vy1y2" in text
    for g in doc["stable_generators"]:
        assert g[0] in text


def test_expression_evaluation(gl2_p5):
    cell, vec = evaluate_expression(gl2_p5.e2, "1/2 uy4 - y1*uybar3")
    assert cell == (1, 3) and vec.any()
    with pytest.raises(Exception):
        evaluate_expression(gl2_p5.e2, "nonsense_name")


@pytest.mark.parametrize("argv", [["run", "gl2", "--p", "3"], ["run", "extraspecial3", "--format", "json"]])
def test_reports_byte_identical(argv):
    cmd = [sys.executable, "-m", "procoh.cli_reporting", *argv]
    first = subprocess.run(cmd, capture_output=True, check=True).stdout
    second = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert first == second and first
