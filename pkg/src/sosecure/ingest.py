"""Streaming ingest of Stack Exchange data-dump XML (Posts.xml, Comments.xml).

Dumps are tens of gigabytes, so rows are pulled through expat in fixed-size
chunks and the answer/comment join goes through a SQLite staging database
(in memory by default, on disk when a path is given).
"""

from __future__ import annotations

import json
import logging
import sqlite3
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional
from xml.parsers import expat

from .clean import clean_comment, clean_html

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 16


class IngestError(Exception):
    """Malformed dump XML."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class PostType(IntEnum):
    QUESTION = 1
    ANSWER = 2


@dataclass(frozen=True)
class RawPostRow:
    id: int
    post_type: PostType
    parent_id: Optional[int] = None
    tags: Optional[str] = None
    body: str = ""
    score: int = 0


@dataclass(frozen=True)
class RawCommentRow:
    id: int
    post_id: int
    text: str


@dataclass
class CleanAnswer:
    answer_id: int
    question_id: int
    language_tags: list[str]
    body_clean: str
    code_blocks: list[str]
    comments: list[str]
    score: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "CleanAnswer":
        return cls(
            answer_id=int(d["answer_id"]),
            question_id=int(d["question_id"]),
            language_tags=list(d["language_tags"]),
            body_clean=d["body_clean"],
            code_blocks=list(d["code_blocks"]),
            comments=list(d["comments"]),
            score=int(d.get("score", 0)),
        )


@dataclass
class SkipTally:
    """Rows that were well-formed XML but unusable."""

    skipped: int = 0
    ignored_types: int = 0
    reasons: Counter = field(default_factory=Counter)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.reasons[reason] += 1


def _iter_row_attrs(source: BinaryIO, chunk_size: int = CHUNK_SIZE) -> Iterator[dict]:
    parser = expat.ParserCreate("UTF-8")
    parser.buffer_text = True
    pending: list[dict] = []

    def start(name, attrs):
        if name == "row":
            pending.append(attrs)

    parser.StartElementHandler = start
    while True:
        chunk = source.read(chunk_size)
        try:
            parser.Parse(chunk, not chunk)
        except expat.ExpatError as exc:
            raise IngestError(
                f"malformed dump XML: {expat.ErrorString(exc.code)}",
                parser.ErrorByteIndex,
            ) from exc
        if pending:
            yield from pending
            pending.clear()
        if not chunk:
            return


def _int(value: Optional[str]) -> int:
    if value is None:
        raise ValueError("missing")
    return int(value)


def parse_posts_stream(
    source: BinaryIO, tally: Optional[SkipTally] = None
) -> Iterator[RawPostRow]:
    """Yield question and answer rows from a Posts.xml byte stream, in file order.

    Rows of other post types (tag wikis, moderator nominations, ...) are
    counted in ``tally.ignored_types``; rows whose Id, PostTypeId, Score or
    answer ParentId cannot be read are counted in ``tally.skipped``.
    """
    tally = tally if tally is not None else SkipTally()
    for attrs in _iter_row_attrs(source):
        try:
            post_id = _int(attrs.get("Id"))
            type_id = _int(attrs.get("PostTypeId"))
            score = int(attrs.get("Score", "0"))
        except ValueError:
            tally.skip("post attribute")
            continue
        if type_id == PostType.QUESTION:
            yield RawPostRow(
                id=post_id,
                post_type=PostType.QUESTION,
                tags=attrs.get("Tags", ""),
                body=attrs.get("Body", ""),
                score=score,
            )
        elif type_id == PostType.ANSWER:
            try:
                parent = _int(attrs.get("ParentId"))
            except ValueError:
                tally.skip("answer parent")
                continue
            yield RawPostRow(
                id=post_id,
                post_type=PostType.ANSWER,
                parent_id=parent,
                body=attrs.get("Body", ""),
                score=score,
            )
        else:
            tally.ignored_types += 1


def parse_comments_stream(
    source: BinaryIO, tally: Optional[SkipTally] = None
) -> Iterator[RawCommentRow]:
    tally = tally if tally is not None else SkipTally()
    for attrs in _iter_row_attrs(source):
        try:
            comment_id = _int(attrs.get("Id"))
            post_id = _int(attrs.get("PostId"))
        except ValueError:
            tally.skip("comment attribute")
            continue
        if post_id <= 0:
            tally.skip("comment post id")
            continue
        yield RawCommentRow(id=comment_id, post_id=post_id, text=attrs.get("Text", ""))


def parse_tags(raw: Optional[str]) -> set[str]:
    """Split a dump tag string.  Handles both ``<a><b>`` and ``|a|b|`` forms."""
    if not raw:
        return set()
    if "<" in raw:
        parts = raw.replace(">", "<").split("<")
    else:
        parts = raw.split("|")
    return {p.strip().lower() for p in parts if p.strip()}


@dataclass
class IngestStats:
    posts_skipped: int = 0
    posts_ignored_types: int = 0
    comments_skipped: int = 0
    questions: int = 0
    questions_matched: int = 0
    answers_seen: int = 0
    answers_out_of_filter: int = 0
    answers_missing_parent: int = 0
    comments_attached: int = 0
    dropped_no_code: int = 0
    dropped_no_comment: int = 0
    emitted: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


_SCHEMA = """
CREATE TABLE IF NOT EXISTS question (id INTEGER PRIMARY KEY, tags TEXT);
CREATE TABLE IF NOT EXISTS answer (
    id INTEGER PRIMARY KEY, parent INTEGER, score INTEGER, body TEXT,
    resolved INTEGER
);
CREATE TABLE IF NOT EXISTS orphan (id INTEGER, parent INTEGER);
CREATE TABLE IF NOT EXISTS comment (answer INTEGER, id INTEGER, text TEXT);
"""


class Staging:
    """SQLite-backed join area.  ``path=None`` keeps everything in memory."""

    def __init__(self, path: Optional[str | Path] = None, batch: int = 5000):
        self.path = path
        self.batch = batch
        if path is not None and Path(path).exists():
            raise FileExistsError(f"staging database already exists: {path}")
        self.db = sqlite3.connect(":memory:" if path is None else str(path))
        self.db.executescript(_SCHEMA)

    def close(self) -> None:
        self.db.close()
        if self.path is not None:
            Path(self.path).unlink(missing_ok=True)

    def __enter__(self) -> "Staging":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _clean_staged(item: tuple) -> CleanAnswer:
    answer_id, parent, score, body, tags, comments = item
    body_clean, code_blocks = clean_html(body)
    return CleanAnswer(
        answer_id=answer_id,
        question_id=parent,
        language_tags=tags,
        body_clean=body_clean,
        code_blocks=code_blocks,
        comments=[clean_comment(c) for c in comments],
        score=score,
    )


def join_answers(
    posts: Iterable[RawPostRow],
    comments: Iterable[RawCommentRow],
    language_filter: Iterable[str],
    *,
    min_code_len: int = 0,
    staging: Optional[Staging] = None,
    stats: Optional[IngestStats] = None,
    jobs: int = 1,
) -> Iterator[CleanAnswer]:
    """Join answers to their question's tags and their comments.

    Posts are consumed once: questions land in the staging ``question``
    table (only the tags that intersect ``language_filter`` are kept) and
    answers of matching questions are staged with their bodies.  The
    posts stream is expected in dump order (ascending Id).
    Comments are consumed once and attached to staged answers.  Output is
    ordered by answer id.
    """
    wanted = {t.strip().lower() for t in language_filter if t.strip()}
    stats = stats if stats is not None else IngestStats()
    own_staging = staging is None
    staging = staging or Staging()
    db = staging.db
    try:
        _stage_posts(db, posts, wanted, stats, staging.batch)
        _stage_comments(db, comments, stats, staging.batch)
        yield from _emit(db, min_code_len, stats, jobs)
    finally:
        if own_staging:
            staging.close()


def _stage_posts(db, posts, wanted, stats, batch) -> None:
    # Dumps are sorted by Id, so an answer whose parent id is at most the
    # largest question id seen so far refers to a question already read
    # (or deleted).  Only answers pointing further ahead keep their body
    # while unresolved; the rest are recorded as bare (id, parent) pairs.
    matched: dict[int, str] = {}
    max_question = 0
    q_buf: list[tuple] = []
    a_buf: list[tuple] = []
    o_buf: list[tuple] = []

    def flush():
        db.executemany("INSERT OR REPLACE INTO question VALUES (?, ?)", q_buf)
        db.executemany("INSERT OR REPLACE INTO answer VALUES (?, ?, ?, ?, ?)", a_buf)
        db.executemany("INSERT INTO orphan VALUES (?, ?)", o_buf)
        q_buf.clear()
        a_buf.clear()
        o_buf.clear()

    for row in posts:
        if row.post_type == PostType.QUESTION:
            stats.questions += 1
            hit = parse_tags(row.tags) & wanted
            tags = ",".join(sorted(hit)) if hit else None
            if hit:
                stats.questions_matched += 1
                matched[row.id] = tags
            max_question = max(max_question, row.id)
            q_buf.append((row.id, tags))
        else:
            stats.answers_seen += 1
            if row.parent_id in matched:
                a_buf.append((row.id, row.parent_id, row.score, row.body, 1))
            elif row.parent_id <= max_question:
                o_buf.append((row.id, row.parent_id))
            else:
                a_buf.append((row.id, row.parent_id, row.score, row.body, 0))
        if len(q_buf) + len(a_buf) + len(o_buf) >= batch:
            flush()
    flush()

    def known(qid: int) -> bool:
        return db.execute("SELECT 1 FROM question WHERE id = ?", (qid,)).fetchone() is not None

    for (parent,) in db.execute("SELECT parent FROM orphan").fetchall():
        if known(parent):
            stats.answers_out_of_filter += 1
        else:
            stats.answers_missing_parent += 1
    for answer_id, parent in db.execute(
        "SELECT id, parent FROM answer WHERE resolved = 0"
    ).fetchall():
        if parent in matched:
            continue
        if known(parent):
            stats.answers_out_of_filter += 1
        else:
            stats.answers_missing_parent += 1
        db.execute("DELETE FROM answer WHERE id = ?", (answer_id,))
    db.commit()


def _stage_comments(db, comments, stats, batch) -> None:
    keep = {r[0] for r in db.execute("SELECT id FROM answer")}
    buf: list[tuple] = []
    for c in comments:
        if c.post_id in keep:
            buf.append((c.post_id, c.id, c.text))
            stats.comments_attached += 1
            if len(buf) >= batch:
                db.executemany("INSERT INTO comment VALUES (?, ?, ?)", buf)
                buf.clear()
    db.executemany("INSERT INTO comment VALUES (?, ?, ?)", buf)
    db.execute("CREATE INDEX IF NOT EXISTS comment_answer ON comment (answer, id)")
    db.commit()


def _staged_rows(db) -> Iterator[tuple]:
    rows = db.execute(
        "SELECT a.id, a.parent, a.score, a.body, q.tags FROM answer a "
        "JOIN question q ON q.id = a.parent ORDER BY a.id"
    )
    for answer_id, parent, score, body, tags in rows:
        comments = [
            t
            for (t,) in db.execute(
                "SELECT text FROM comment WHERE answer = ? ORDER BY id", (answer_id,)
            )
        ]
        yield (answer_id, parent, score, body, tags.split(","), comments)


def _emit(db, min_code_len, stats, jobs) -> Iterator[CleanAnswer]:
    items = _staged_rows(db)
    if jobs > 1:
        pool = ProcessPoolExecutor(max_workers=jobs)
        cleaned = pool.map(_clean_staged, items, chunksize=64)
    else:
        pool = None
        cleaned = map(_clean_staged, items)
    try:
        for ans in cleaned:
            if not ans.comments:
                stats.dropped_no_comment += 1
                continue
            if not any(len(c) >= min_code_len for c in ans.code_blocks):
                stats.dropped_no_code += 1
                continue
            stats.emitted += 1
            yield ans
    finally:
        if pool is not None:
            pool.shutdown()


def ingest_files(
    posts_path: str | Path,
    comments_path: str | Path,
    language_filter: Iterable[str],
    out_path: str | Path,
    *,
    min_code_len: int = 0,
    staging_path: Optional[str | Path] = None,
    jobs: int = 1,
) -> IngestStats:
    """Run the whole ingest and write one JSON object per line to ``out_path``."""
    stats = IngestStats()
    post_tally, comment_tally = SkipTally(), SkipTally()
    with open(posts_path, "rb") as pf, open(comments_path, "rb") as cf, Staging(
        staging_path
    ) as staging, open(out_path, "w", encoding="utf-8", newline="\n") as out:
        answers = join_answers(
            parse_posts_stream(pf, post_tally),
            parse_comments_stream(cf, comment_tally),
            language_filter,
            min_code_len=min_code_len,
            staging=staging,
            stats=stats,
            jobs=jobs,
        )
        for ans in answers:
            out.write(ans.to_json() + "\n")
    stats.posts_skipped = post_tally.skipped
    stats.posts_ignored_types = post_tally.ignored_types
    stats.comments_skipped = comment_tally.skipped
    logger.info("ingest: %s", stats.to_dict())
    return stats


def read_answers(path: str | Path) -> Iterator[CleanAnswer]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield CleanAnswer.from_dict(json.loads(line))
