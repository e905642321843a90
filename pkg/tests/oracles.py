"""Reference implementations used as test oracles.

Each one is written from the definition, sharing no code with the package.
"""

import itertools
import math
import re
from collections import Counter


def bm25_brute(docs, query, k1=1.5, b=0.75, eps=0.25):
    """Score every document by looping over it directly.

    ``docs`` is a list of (doc_id, text).  Returns [(doc_id, score)] for
    positive scores, sorted by score descending then doc_id ascending.
    """
    tok = lambda s: [m.lower() for m in re.findall(r"[A-Za-z0-9_]+", s)]  # noqa: E731
    bags = [(doc_id, tok(text)) for doc_id, text in docs]
    n = len(bags)
    if n == 0:
        return []
    avgdl = sum(len(t) for _, t in bags) / n
    vocab = sorted({w for _, t in bags for w in t})
    df = {w: sum(1 for _, t in bags if w in t) for w in vocab}
    raw = {w: math.log((n - df[w] + 0.5) / (df[w] + 0.5) + 1) for w in vocab}
    if eps and raw:
        floor = eps * sum(raw.values()) / len(raw)
        idf = {w: max(v, floor) for w, v in raw.items()}
    else:
        idf = raw
    out = []
    for doc_id, tokens in bags:
        counts = Counter(tokens)
        s = 0.0
        for q in tok(query):
            tf = counts.get(q, 0)
            if tf:
                s += idf[q] * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(tokens) / avgdl))
        if s > 0:
            out.append((doc_id, s))
    out.sort(key=lambda p: (-round(p[1], 9), p[0]))
    return out


def _longest_common(a, b, alo, ahi, blo, bhi):
    """Longest common substring in a[alo:ahi], b[blo:bhi]; earliest in a, then in b."""
    best = (alo, blo, 0)
    prev = [0] * (bhi - blo + 1)
    for i in range(alo, ahi):
        cur = [0] * (bhi - blo + 1)
        for j in range(blo, bhi):
            if a[i] == b[j]:
                cur[j - blo + 1] = prev[j - blo] + 1
                size = cur[j - blo + 1]
                start_i, start_j = i - size + 1, j - size + 1
                if size > best[2] or (size == best[2] and (start_i, start_j) < best[:2]):
                    best = (start_i, start_j, size)
        prev = cur
    return best


def _matched(a, b, alo, ahi, blo, bhi):
    if alo >= ahi or blo >= bhi:
        return 0
    i, j, size = _longest_common(a, b, alo, ahi, blo, bhi)
    if size == 0:
        return 0
    return size + _matched(a, b, alo, i, blo, j) + _matched(a, b, i + size, ahi, j + size, bhi)


def ratcliff_obershelp(a, b):
    """2*M/(|a|+|b|), M from recursive longest-common-substring splitting.

    Taken as the larger of both argument orders, the symmetric form.
    """
    if not a and not b:
        return 1.0
    m = max(_matched(a, b, 0, len(a), 0, len(b)), _matched(b, a, 0, len(b), 0, len(a)))
    return 2.0 * m / (len(a) + len(b))


def secure_enum(n, v, k):
    """Fraction of k-subsets of n generations (v vulnerable) that are all clean, by enumeration."""
    items = [True] * v + [False] * (n - v)
    subsets = list(itertools.combinations(range(n), k))
    clean = sum(1 for s in subsets if not any(items[i] for i in s))
    return clean / len(subsets)
