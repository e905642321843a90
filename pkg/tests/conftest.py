import shutil
from pathlib import Path

import pytest

from sosecure.bm25 import build_index
from sosecure.ingest import ingest_files, read_answers
from sosecure.kb import build_kb, default_keywords, write_kb

FIXTURES = Path(__file__).resolve().parent / "fixtures"
DUMP = FIXTURES / "dump"
EVAL = FIXTURES / "eval"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Ingest the dump slice, build the KB and index once per session."""
    root = tmp_path_factory.mktemp("pipeline")
    answers = root / "answers.jsonl"
    stats = ingest_files(DUMP / "Posts.xml", DUMP / "Comments.xml", ["python"], answers)
    entries, kb_stats = build_kb(read_answers(answers), default_keywords())
    kb = root / "kb.jsonl"
    write_kb(entries, kb)
    index = build_index(entries)
    index_path = root / "index.jsonl"
    index.save(index_path)
    return {
        "root": root,
        "answers": answers,
        "ingest_stats": stats,
        "entries": entries,
        "kb_stats": kb_stats,
        "kb": kb,
        "index": index,
        "index_path": index_path,
    }


def have_bandit() -> bool:
    return shutil.which("bandit") is not None


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS, key=lambda l: int(l[1:l.index("]")])):
        terminalreporter.write_line(line)
