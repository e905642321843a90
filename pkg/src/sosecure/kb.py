"""Security-aware knowledge base: answers whose comments raise security concerns."""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

from .ingest import CleanAnswer


def _term_pattern(term: str) -> str:
    stem = term.endswith("*")
    words = term.rstrip("*").split()
    body = r"\s+".join(re.escape(w) for w in words)
    return rf"(?<!\w){body}" if stem else rf"(?<!\w){body}(?!\w)"


class KeywordSet:
    """Case-insensitive security keyword matcher.

    Literal terms need a word boundary on both sides; stems (``vulnerab*``)
    only on the left, so ``cve`` does not fire inside ``discover`` while
    ``vulnerab*`` catches ``vulnerability``.
    """

    def __init__(self, terms: Iterable[str]):
        cleaned = []
        for t in terms:
            t = " ".join(t.strip().lower().split())
            if not t or t == "*":
                raise ValueError("empty keyword")
            if t not in cleaned:
                cleaned.append(t)
        if not cleaned:
            raise ValueError("keyword set is empty")
        self.terms: tuple[str, ...] = tuple(cleaned)
        self._patterns = [(t, re.compile(_term_pattern(t), re.IGNORECASE)) for t in self.terms]
        self._any = re.compile("|".join(_term_pattern(t) for t in self.terms), re.IGNORECASE)

    def __contains__(self, term: str) -> bool:
        return term in self.terms

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        return f"KeywordSet({len(self.terms)} terms)"

    def match(self, text: str) -> set[str]:
        if not text or self._any.search(text) is None:
            return set()
        return {t for t, pat in self._patterns if pat.search(text)}

    @classmethod
    def from_file(cls, path: str | Path) -> "KeywordSet":
        return cls(_read_terms(Path(path).read_text(encoding="utf-8")))


def _read_terms(text: str) -> list[str]:
    terms = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            terms.append(line)
    return terms


def default_keywords() -> KeywordSet:
    text = resources.files("sosecure").joinpath("data/keywords.txt").read_text(encoding="utf-8")
    return KeywordSet(_read_terms(text))


def match_security(comment: str, keywords: KeywordSet) -> set[str]:
    return keywords.match(comment)


@dataclass
class KbEntry:
    answer_id: int
    question_id: int
    language_tags: list[str]
    body_clean: str
    code_blocks: list[str]
    comments: list[str]
    matched_keywords: list[str]
    code_concat: str
    score: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "KbEntry":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class BuildStats:
    answers_in: int = 0
    answers_out: int = 0
    comments_scanned: int = 0
    comments_matched: int = 0
    comments_in_kb: int = 0
    per_tag: dict = field(default_factory=lambda: defaultdict(lambda: {"in": 0, "out": 0}))
    keyword_hits: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "answers_in": self.answers_in,
            "answers_out": self.answers_out,
            "comments_scanned": self.comments_scanned,
            "comments_matched": self.comments_matched,
            "comments_in_kb": self.comments_in_kb,
            "per_tag": {t: dict(v) for t, v in sorted(self.per_tag.items())},
            "keyword_hits": dict(sorted(self.keyword_hits.items())),
        }


def build_kb(
    answers: Iterable[CleanAnswer], keywords: KeywordSet
) -> tuple[list[KbEntry], BuildStats]:
    """Keep answers with at least one comment matching a security keyword.

    Only comments are inspected; a keyword in the answer body alone does not
    qualify.  Entries come back sorted by answer id.
    """
    stats = BuildStats()
    entries = []
    for ans in answers:
        stats.answers_in += 1
        for tag in ans.language_tags:
            stats.per_tag[tag]["in"] += 1
        matched: set[str] = set()
        for comment in ans.comments:
            stats.comments_scanned += 1
            hits = keywords.match(comment)
            if hits:
                stats.comments_matched += 1
                matched |= hits
        if not matched:
            continue
        stats.answers_out += 1
        stats.comments_in_kb += len(ans.comments)
        stats.keyword_hits.update(matched)
        for tag in ans.language_tags:
            stats.per_tag[tag]["out"] += 1
        entries.append(
            KbEntry(
                answer_id=ans.answer_id,
                question_id=ans.question_id,
                language_tags=sorted(ans.language_tags),
                body_clean=ans.body_clean,
                code_blocks=list(ans.code_blocks),
                comments=list(ans.comments),
                matched_keywords=sorted(matched),
                code_concat="\n".join(ans.code_blocks),
                score=ans.score,
            )
        )
    entries.sort(key=lambda e: e.answer_id)
    return entries, stats


def write_kb(entries: Iterable[KbEntry], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in sorted(entries, key=lambda e: e.answer_id):
            fh.write(entry.to_json() + "\n")
            n += 1
    return n


def read_kb(path: str | Path) -> Iterator[KbEntry]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield KbEntry.from_dict(json.loads(line))


def load_kb(path: str | Path) -> dict[int, KbEntry]:
    return {e.answer_id: e for e in read_kb(path)}
