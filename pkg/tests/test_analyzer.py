import json
import sys

import pytest

from conftest import FIXTURES, have_bandit
from sosecure.analyzer import (
    AnalysisRun,
    Analyzer,
    AnalyzerEnvironmentError,
    AnalyzerError,
    Finding,
    MockAnalyzer,
    SarifError,
    ToolTemplate,
    diff_findings,
    normalize_cwe,
    parse_sarif,
    run_analyzer,
    snapshot_id,
)

FAKE = f"{sys.executable} {FIXTURES / 'fake_analyzer.py'}"
LEFT = (FIXTURES / "shell_injection.py").read_text()
RIGHT = (FIXTURES / "shell_allowlist.py").read_text()


def _log(rules, results, version="2.1.0"):
    return {"version": version, "runs": [{"tool": {"driver": {"name": "t", "rules": rules}}, "results": results}]}


@pytest.mark.parametrize("raw,norm", [("cwe-78", "CWE-078"), ("CWE-078", "CWE-078"), (78, "CWE-078"),
                                      ("external/cwe/cwe-1333", "CWE-1333"), ("CWE-22", "CWE-022")])
def test_normalize_cwe(raw, norm):
    assert normalize_cwe(raw) == norm


def test_normalize_cwe_rejects_junk():
    with pytest.raises(ValueError):
        normalize_cwe("no digits")


def test_bandit_sarif_fixture():
    data = (FIXTURES / "bandit_shell_injection.sarif").read_bytes()
    findings = parse_sarif(data)
    assert [(f.rule_id, f.level) for f in findings] == [("B404", "note"), ("B602", "error")]
    b602 = findings[1]
    assert b602.cwes == {"CWE-078"} and b602.tool == "Bandit" and b602.line >= 1
    assert [f.rule_id for f in parse_sarif(data, min_level="warning")] == ["B602"]


def test_rule_tags_case_insensitive_and_untagged():
    rules = [{"id": "R1", "properties": {"tags": ["security", "EXTERNAL/CWE/CWE-78"]}}, {"id": "R2"}]
    results = [{"ruleId": "R1", "message": {"text": "a"}}, {"ruleId": "R1", "message": {"text": "b"}},
               {"ruleId": "R2", "message": {"text": "c"}}]
    f1, f2, f3 = parse_sarif(json.dumps(_log(rules, results)))
    assert f1.rule_id == f2.rule_id == "R1" and f1.cwes == {"CWE-078"}
    assert f3.cwes == frozenset() and f3.line == 1 and f3.level == "warning"


def test_rule_index_and_extension_rules():
    log = {"version": "2.1.0", "runs": [{
        "tool": {"driver": {"name": "codeql", "rules": []},
                 "extensions": [{"name": "pack", "rules": [{"id": "py/command-line-injection",
                                                            "properties": {"tags": ["external/cwe/cwe-078",
                                                                                    "external/cwe/cwe-088"]}}]}]},
        "results": [{"rule": {"index": 0}, "message": {"text": "x"},
                     "properties": {"tags": ["external/cwe/cwe-77"]}}]}]}
    (f,) = parse_sarif(log)
    assert f.rule_id == "py/command-line-injection"
    assert f.cwes == {"CWE-077", "CWE-078", "CWE-088"}


@pytest.mark.parametrize("data,msg", [
    (b"not json at all", "unparseable"),
    (json.dumps({"version": "2.1.0"}), "runs"),
    (json.dumps(_log([], [], version="1.0.0")), "version"),
    (b"[1, 2]", "unparseable"),
])
def test_sarif_errors(data, msg):
    with pytest.raises(SarifError, match=msg):
        parse_sarif(data)


def test_run_analyzer_with_sarif_file_and_nonzero_exit():
    run = run_analyzer(LEFT, "python", ToolTemplate.of("fake", FAKE + " {input_dir} {output_sarif}"))
    assert run.exit_status == 1 and run.tool_version == "0.1"
    assert run.cwes == {"CWE-078"} and run.language == "python"
    assert run.findings[0].path == "snippet.py"
    assert run.snapshot_id == snapshot_id(LEFT)


def test_run_analyzer_reads_stdout_when_no_file():
    run = run_analyzer(RIGHT, "python", ToolTemplate.of("fake", FAKE + " {input_dir} -"))
    assert run.findings == [] and run.exit_status == 0


def test_empty_file_has_no_findings():
    run = run_analyzer("", "c", ToolTemplate.of("fake", FAKE + " {input_dir} {output_sarif}"))
    assert run.findings == [] and run.language == "c"


def test_unparseable_output_quotes_it():
    with pytest.raises(SarifError, match="analyzer exploded"):
        run_analyzer(LEFT, "python", ToolTemplate.of("fake", FAKE + " {input_dir} garbage"))


def test_missing_binary_named():
    with pytest.raises(AnalyzerEnvironmentError) as err:
        run_analyzer("x", "python", ToolTemplate.of("nope", "definitely-not-installed-tool {input_dir}"))
    assert err.value.binary == "definitely-not-installed-tool"


def test_unsupported_language():
    with pytest.raises(ValueError):
        run_analyzer("x", "rust", ToolTemplate.of("fake", FAKE + " {input_dir}"))


def test_mock_analyzer_keys(tmp_path):
    sarif_path = tmp_path / "canned.sarif"
    sarif_path.write_bytes((FIXTURES / "bandit_shell_injection.sarif").read_bytes())
    manifest = {"rules": [
        {"code_sha256": snapshot_id(LEFT), "sarif_file": "canned.sarif"},
        {"code_contains": "pickle", "sarif": _log([{"id": "B301"}], [{"ruleId": "B301", "message": {"text": "p"}}])},
    ], "min_level": "warning"}
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    mock = MockAnalyzer.from_file(tmp_path / "m.json")
    left = mock.run(LEFT, "python")
    assert left.cwes == {"CWE-078"} and left.untagged_rules == set()
    pick = mock.run("pickle.loads(b)", "python")
    assert pick.keys == {"rule:B301"}
    assert mock.run(RIGHT, "python").findings == []
    assert mock.run(LEFT, "python").findings == left.findings


def test_analyzer_router():
    az = Analyzer({"python": ToolTemplate.of("fake", FAKE + " {input_dir} {output_sarif}")}, jobs=2)
    runs = az.run_many([(LEFT, "python"), (RIGHT, "python")])
    assert [r.cwes for r in runs] == [{"CWE-078"}, set()]
    with pytest.raises(AnalyzerError):
        az.run("x", "c")


def _run(cwes, rules=(), lang="python"):
    findings = [Finding("t", f"R{c}", frozenset([c]), "f", 1, "") for c in cwes]
    findings += [Finding("t", r, frozenset(), "f", 1, "") for r in rules]
    return AnalysisRun("t", lang, "id", findings)


def test_diff_examples():
    d = diff_findings(_run(["CWE-078"]), _run([]))
    assert (d.fixed, d.persisted, d.introduced) == ({"CWE-078"}, set(), set())
    d = diff_findings(_run(["CWE-078"]), _run(["CWE-078"]))
    assert d.persisted == {"CWE-078"} and not d.fixed
    d = diff_findings(_run(["CWE-327"]), _run(["CWE-327"]))
    assert d.persisted == {"CWE-327"}
    d = diff_findings(_run(["CWE-078"], ["B101"]), _run(["CWE-089"], ["B101", "B110"]))
    assert (d.fixed, d.introduced) == ({"CWE-078"}, {"CWE-089"})
    assert (d.rules_persisted, d.rules_introduced) == ({"B101"}, {"B110"})


def test_diff_requires_same_language():
    with pytest.raises(ValueError):
        diff_findings(_run([]), _run([], lang="c"))


@pytest.mark.envgated
@pytest.mark.skipif(not have_bandit(), reason="bandit not installed")
def test_bandit_on_case_study():
    from sosecure.analyzer import BANDIT_TEMPLATE

    assert "CWE-078" in run_analyzer(LEFT, "python", BANDIT_TEMPLATE).cwes
    assert run_analyzer(RIGHT, "python", BANDIT_TEMPLATE).cwes == set()
