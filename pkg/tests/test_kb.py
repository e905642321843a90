import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosecure.ingest import CleanAnswer
from sosecure.kb import (
    KeywordSet,
    build_kb,
    default_keywords,
    load_kb,
    match_security,
    read_kb,
    write_kb,
)


def test_default_set_has_the_headline_terms():
    ks = default_keywords()
    for term in ("secure", "vulnerable", "cve", "cwe", "deprecated", "unauthorized"):
        assert term in ks


def test_case_insensitive():
    assert "cve" in match_security("See CVE-2021-44228 for details", default_keywords())


def test_literal_needs_both_boundaries():
    assert match_security("I discovered the bug", default_keywords()) == set()
    assert match_security("this leaks memory", KeywordSet(["leak"])) == set()


def test_stems_need_left_boundary_only():
    ks = KeywordSet(["vulnerab*", "escap*"])
    assert match_security("a vulnerability", ks) == {"vulnerab*"}
    assert match_security("unescaped input", ks) == set()
    assert match_security("Escaping matters", ks) == {"escap*"}


def test_exact_match_set():
    ks = KeywordSet(["vulnerable", "injection", "secure"])
    assert match_security("this is vulnerable to SQL injection", ks) == {"vulnerable", "injection"}


def test_default_set_on_sql_injection_comment():
    hits = match_security("this is vulnerable to SQL injection", default_keywords())
    assert {"vulnerable", "injection", "sql injection", "vulnerab*"} <= hits


def test_multiword_term_spans_whitespace():
    assert match_security("sql\n  injection here", KeywordSet(["sql injection"])) == {"sql injection"}


def test_no_match():
    assert match_security("works great, thanks!", default_keywords()) == set()


def test_shell_comment():
    hits = match_security("passing shell=True leaves this open to command injection vulnerabilities",
                          default_keywords())
    assert {"injection", "vulnerab*"} <= hits


@pytest.mark.parametrize("terms", [[], [""], ["  "], ["*"]])
def test_empty_terms_rejected(terms):
    with pytest.raises(ValueError):
        KeywordSet(terms)


def test_keyword_file(tmp_path):
    path = tmp_path / "kw.txt"
    path.write_text("# security words\nInsecure\nhack*   # stem\n\n")
    ks = KeywordSet.from_file(path)
    assert ks.terms == ("insecure", "hack*")
    assert ks.match("hackers love insecure defaults") == {"insecure", "hack*"}


def _answer(i, comments, body="<code>x</code>", tags=("python",)):
    return CleanAnswer(answer_id=i, question_id=1, language_tags=list(tags), body_clean=body,
                       code_blocks=["x = 1", "y = 2"], comments=comments, score=0)


def test_build_kb_counts():
    answers = [_answer(i, ["thanks!"]) for i in range(6)]
    answers += [_answer(10 + i, ["nice", "this is insecure"]) for i in range(4)]
    entries, stats = build_kb(answers, default_keywords())
    assert [e.answer_id for e in entries] == [10, 11, 12, 13]
    assert (stats.answers_in, stats.answers_out) == (10, 4)
    assert stats.to_dict()["per_tag"] == {"python": {"in": 10, "out": 4}}
    assert stats.comments_scanned == 14 and stats.comments_matched == 4 and stats.comments_in_kb == 8
    assert entries[0].code_concat == "x = 1\ny = 2"
    assert entries[0].matched_keywords == ["insecure"]


def test_body_keywords_do_not_qualify():
    entries, _ = build_kb([_answer(1, ["cool"], body="this is insecure <code>x</code>")], default_keywords())
    assert entries == []


def test_roundtrip_and_sorted_output(tmp_path):
    answers = [_answer(i, ["unsafe"]) for i in (5, 3, 9)]
    entries, _ = build_kb(answers, default_keywords())
    path = tmp_path / "kb.jsonl"
    write_kb(reversed(entries), path)
    assert [e.answer_id for e in read_kb(path)] == [3, 5, 9]
    assert load_kb(path)[5] == entries[1]


def test_fixture_kb_invariants(pipeline):
    ks = default_keywords()
    assert pipeline["entries"]
    for e in pipeline["entries"]:
        assert e.matched_keywords and set(e.matched_keywords) <= set(ks.terms)
        assert e.code_concat == "\n".join(e.code_blocks)
    assert 61307412 in {e.answer_id for e in pipeline["entries"]}


def test_fixture_kb_deterministic(pipeline, tmp_path):
    from sosecure.ingest import read_answers

    entries, _ = build_kb(read_answers(pipeline["answers"]), default_keywords())
    path = tmp_path / "again.jsonl"
    write_kb(entries, path)
    assert path.read_bytes() == pipeline["kb"].read_bytes()


_WORDS = st.sampled_from(["secure", "vulnerab*", "cve", "leak", "inject", "sql injection",
                          "deprecat*", "unsafe", "xss", "thanks", "great", "hack*"])
_COMMENTS = st.lists(st.lists(st.sampled_from(
    ["this is unsafe", "thanks", "CVE-1", "deprecated API", "leaky", "great answer",
     "SQL  injection!", "hackers", "xss", "injected", "vulnerability"]), max_size=3), min_size=1, max_size=8)


@settings(max_examples=200, deadline=None)
@given(st.lists(_WORDS, min_size=1, max_size=5, unique=True), st.lists(_WORDS, max_size=4), _COMMENTS)
def test_enlarging_keywords_never_shrinks_kb(base, extra, threads):
    answers = [_answer(i, c) for i, c in enumerate(threads)]
    small, _ = build_kb(answers, KeywordSet(base))
    large, _ = build_kb(answers, KeywordSet(base + extra))
    assert {e.answer_id for e in small} <= {e.answer_id for e in large}
    for e in large:
        assert set(e.matched_keywords) <= set(base + extra)
