"""Okapi BM25 over the concatenated code blocks of knowledge-base entries."""

from __future__ import annotations

import heapq
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

from .kb import KbEntry

INDEX_MAGIC = "sosecure-bm25-index"
INDEX_VERSION = 1
# scores equal to this many decimals count as tied (then ascending answer_id wins);
# mathematically equal BM25 weights can differ in the last ulp
TIE_DECIMALS = 9

_WORD_RE = re.compile(r"[A-Za-z0-9_]+")
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


class IndexFormatError(Exception):
    pass


def tokenize_code(code: str, split_identifiers: bool = False) -> list[str]:
    """Lowercased maximal runs of ``[A-Za-z0-9_]``.

    With ``split_identifiers`` each run is further broken at underscores and
    camelCase humps (``getHTTPResponse`` -> ``get http response``).
    """
    if not split_identifiers:
        return [t.lower() for t in _WORD_RE.findall(code)]
    out = []
    for run in _WORD_RE.findall(code):
        for part in run.split("_"):
            out.extend(p.lower() for p in _CAMEL_RE.findall(part))
    return out


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75
    idf_floor_epsilon: float = 0.25
    split_identifiers: bool = False

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be in [0, 1]")
        if self.idf_floor_epsilon < 0:
            raise ValueError("idf_floor_epsilon must be >= 0")


@dataclass(frozen=True)
class RetrievalResult:
    answer_id: int
    score: float
    rank: int


def idf(n_docs: int, df: int) -> float:
    return math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)


def term_weight(idf_t: float, tf: int, doc_len: int, avg_len: float, k1: float, b: float) -> float:
    return idf_t * (tf * (k1 + 1)) / (tf + k1 * (1 - b + b * doc_len / avg_len))


class Bm25Index:
    """Immutable inverted index; build with :func:`build_index` or :meth:`load`."""

    def __init__(
        self,
        postings: dict[str, list[tuple[int, int]]],
        doc_len: list[int],
        doc_ids: list[int],
        params: Bm25Params,
    ):
        self.postings = postings
        self.doc_len = doc_len
        self.doc_ids = doc_ids
        self.params = params
        self.doc_count = len(doc_len)
        self.avg_doc_len = sum(doc_len) / self.doc_count if self.doc_count else 0.0
        self._idf = self._compute_idf()

    def _compute_idf(self) -> dict[str, float]:
        raw = {t: idf(self.doc_count, len(p)) for t, p in self.postings.items()}
        eps = self.params.idf_floor_epsilon
        if not raw or eps == 0:
            return raw
        # fsum keeps the floor independent of dict ordering
        floor = eps * math.fsum(raw.values()) / len(raw)
        return {t: max(v, floor) for t, v in raw.items()}

    def idf(self, term: str) -> float:
        return self._idf.get(term, 0.0)

    def __len__(self) -> int:
        return self.doc_count

    def query(self, code: str, k: int) -> list[RetrievalResult]:
        """Top-``k`` documents for a code snippet; zero-score documents are omitted."""
        if not isinstance(k, int) or k < 1:
            raise ValueError(f"k must be a positive integer, got {k!r}")
        if not self.doc_count:
            return []
        p = self.params
        parts: dict[int, list[float]] = {}
        for term in tokenize_code(code, p.split_identifiers):
            plist = self.postings.get(term)
            if not plist:
                continue
            w = self._idf[term]
            for ordinal, tf in plist:
                parts.setdefault(ordinal, []).append(
                    term_weight(w, tf, self.doc_len[ordinal], self.avg_doc_len, p.k1, p.b)
                )
        # fsum is correctly rounded, so documents whose contributions are equal
        # as multisets tie exactly and fall through to the answer_id tie-break
        scores = {o: math.fsum(ws) for o, ws in parts.items()}
        ranked = heapq.nsmallest(
            k,
            ((s, o) for o, s in scores.items() if s > 0),
            key=lambda so: (-round(so[0], TIE_DECIMALS), self.doc_ids[so[1]]),
        )
        return [
            RetrievalResult(answer_id=self.doc_ids[o], score=s, rank=i)
            for i, (s, o) in enumerate(ranked, start=1)
        ]

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        header = {
            "magic": INDEX_MAGIC,
            "version": INDEX_VERSION,
            "params": asdict(self.params),
            "doc_count": self.doc_count,
            "term_count": len(self.postings),
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            fh.write(json.dumps(self.doc_ids) + "\n")
            fh.write(json.dumps(self.doc_len) + "\n")
            for term in sorted(self.postings):
                fh.write(json.dumps([term, self.postings[term]], ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Bm25Index":
        with open(path, encoding="utf-8") as fh:
            try:
                header = json.loads(fh.readline())
            except json.JSONDecodeError as exc:
                raise IndexFormatError(f"{path}: not a BM25 index file") from exc
            if not isinstance(header, dict) or header.get("magic") != INDEX_MAGIC:
                raise IndexFormatError(f"{path}: not a BM25 index file")
            if header.get("version") != INDEX_VERSION:
                raise IndexFormatError(
                    f"{path}: index format version {header.get('version')} "
                    f"is not supported (expected {INDEX_VERSION})"
                )
            doc_ids = json.loads(fh.readline())
            doc_len = json.loads(fh.readline())
            postings = {}
            for line in fh:
                term, plist = json.loads(line)
                postings[term] = [(o, tf) for o, tf in plist]
        if len(doc_ids) != header["doc_count"] or len(postings) != header["term_count"]:
            raise IndexFormatError(f"{path}: truncated index file")
        return cls(postings, doc_len, doc_ids, Bm25Params(**header["params"]))


def build_index(
    entries: Iterable[KbEntry], params: Optional[Bm25Params] = None
) -> Bm25Index:
    """Index ``code_concat`` of each entry (never the prose)."""
    params = params or Bm25Params()
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_len: list[int] = []
    doc_ids: list[int] = []
    seen: set[int] = set()
    for entry in entries:
        if entry.answer_id in seen:
            raise ValueError(f"duplicate answer_id {entry.answer_id}")
        seen.add(entry.answer_id)
        ordinal = len(doc_ids)
        tokens = tokenize_code(entry.code_concat, params.split_identifiers)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((ordinal, tf))
        doc_len.append(len(tokens))
        doc_ids.append(entry.answer_id)
    return Bm25Index(postings, doc_len, doc_ids, params)
