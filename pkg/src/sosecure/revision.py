"""Prompt assembly, model-driven revision, and per-revision statistics."""

from __future__ import annotations

import difflib
import enum
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .kb import KbEntry
from .llm import ChatClient, LlmConfig, RevisionError

logger = logging.getLogger(__name__)

BASE_INSTRUCTION = (
    "Review the code for security flaws. "
    "If issues are found, fix them while keeping original functionality."
)
CONTEXT_HEADER = "Retrieved related SO context:"
ENTRY_SEPARATOR = "\n---\n"

__all__ = [
    "BASE_INSTRUCTION",
    "PromptVariant",
    "RevisionError",
    "RevisionResult",
    "VariantKind",
    "estimate_tokens",
    "extract_code_block",
    "render_prompt",
    "revise",
    "revise_many",
    "similarity_ratio",
]


class VariantKind(str, enum.Enum):
    BASE = "base"
    CWE = "cwe"
    CWE_PLUS = "cweplus"
    SOSECURE = "sosecure"


@dataclass(frozen=True)
class PromptVariant:
    kind: VariantKind
    cwe_id: Optional[str] = None
    cwe_description: Optional[str] = None
    context: tuple[KbEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", VariantKind(self.kind))
        object.__setattr__(self, "context", tuple(self.context))
        if self.kind in (VariantKind.CWE, VariantKind.CWE_PLUS) and not self.cwe_id:
            raise ValueError(f"{self.kind.value} variant needs a CWE id")
        if self.kind is VariantKind.CWE_PLUS and not self.cwe_description:
            raise ValueError("cweplus variant needs a CWE description")
        if self.kind is VariantKind.SOSECURE and not self.context:
            raise ValueError("sosecure variant needs at least one retrieved entry")

    @classmethod
    def base(cls) -> "PromptVariant":
        return cls(VariantKind.BASE)

    @classmethod
    def cwe(cls, cwe_id: str) -> "PromptVariant":
        return cls(VariantKind.CWE, cwe_id=cwe_id)

    @classmethod
    def cwe_plus(cls, cwe_id: str, description: str) -> "PromptVariant":
        return cls(VariantKind.CWE_PLUS, cwe_id=cwe_id, cwe_description=description)

    @classmethod
    def sosecure(cls, entries: Iterable[KbEntry]) -> "PromptVariant":
        return cls(VariantKind.SOSECURE, context=tuple(entries))

    @property
    def context_ids(self) -> list[int]:
        return [e.answer_id for e in self.context]


def _fence(code: str) -> str:
    longest = max((len(m) for m in re.findall(r"`{3,}", code)), default=0)
    ticks = "`" * max(3, longest + 1)
    return f"{ticks}\n{code}\n{ticks}"


def render_entry(entry: KbEntry) -> str:
    lines = ["Answer:", entry.body_clean, "Comments:"]
    lines.extend(f"- {c}" for c in entry.comments)
    return "\n".join(lines)


def render_suffix(variant: PromptVariant) -> str:
    if variant.kind is VariantKind.CWE:
        return f"CWE: {variant.cwe_id}"
    if variant.kind is VariantKind.CWE_PLUS:
        return f"CWE: {variant.cwe_id}\nDescription: {variant.cwe_description}"
    if variant.kind is VariantKind.SOSECURE:
        return CONTEXT_HEADER + "\n" + ENTRY_SEPARATOR.join(render_entry(e) for e in variant.context)
    return ""


def render_prompt(code: str, variant: PromptVariant) -> str:
    if not code or not code.strip():
        raise ValueError("code must be non-empty")
    prompt = BASE_INSTRUCTION + "\n\n" + _fence(code)
    suffix = render_suffix(variant)
    return prompt + "\n\n" + suffix if suffix else prompt


_FENCE_RE = re.compile(r"^[ \t]*(`{3,}|~{3,})[^\n]*\n", re.MULTILINE)


def extract_code_block(text: str) -> Optional[str]:
    """Body of the first fenced block in ``text``; ``None`` if there is none.

    An opening fence without a closing one runs to the end of the text.
    """
    m = _FENCE_RE.search(text or "")
    if m is None:
        return None
    fence = m.group(1)
    close = re.compile(rf"^[ \t]*{re.escape(fence[0])}{{{len(fence)},}}[ \t]*$", re.MULTILINE)
    end = close.search(text, m.end())
    body = text[m.end(): end.start() if end else len(text)]
    return body[:-1] if body.endswith("\n") else body


def normalize_code(code: str) -> str:
    return "\n".join(line.rstrip() for line in code.splitlines()).rstrip("\n")


def similarity_ratio(a: str, b: str) -> float:
    """Ratcliff/Obershelp similarity ``2*M / (len(a) + len(b))``.

    The greedy longest-match decomposition depends on argument order, so
    both orders are evaluated and the larger ratio is returned; this keeps
    the measure symmetric.
    """
    if not a and not b:
        return 1.0
    ab = difflib.SequenceMatcher(None, a, b, autojunk=False).ratio()
    ba = difflib.SequenceMatcher(None, b, a, autojunk=False).ratio()
    return max(ab, ba)


_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]")


def estimate_tokens(text: str) -> int:
    """Word runs plus isolated punctuation marks."""
    return len(_TOKEN_RE.findall(text or ""))


TokenEstimator = Callable[[str], int]


def tiktoken_estimator(encoding: str = "cl100k_base") -> TokenEstimator:
    """BPE counts via ``tiktoken`` (optional dependency, needs its encoding files)."""
    import tiktoken

    enc = tiktoken.get_encoding(encoding)
    return lambda text: len(enc.encode(text or "", disallowed_special=()))


def fit_context(
    entries: Sequence[KbEntry], budget: Optional[int], estimator: TokenEstimator = estimate_tokens
) -> tuple[list[KbEntry], bool]:
    """Drop whole entries from the tail until the rendered context fits ``budget``.

    The top-ranked entry is always kept.
    """
    kept = list(entries)
    if budget is None:
        return kept, False
    truncated = False
    while len(kept) > 1 and estimator(render_suffix(PromptVariant.sosecure(kept))) > budget:
        kept.pop()
        truncated = True
    return kept, truncated


@dataclass
class RevisionResult:
    original_code: str
    variant: str
    retrieved_context_ids: list[int]
    revised_code: str
    changed: bool
    similarity: float
    prompt_tokens_estimate: int
    context_tokens_estimate: int
    context_truncated: bool = False
    warnings: list[str] = field(default_factory=list)


def revise(
    code: str,
    variant: PromptVariant,
    cfg: LlmConfig,
    client: ChatClient,
    estimator: TokenEstimator = estimate_tokens,
) -> RevisionResult:
    """Ask the model to review ``code`` and return the first fenced block of its reply.

    A reply without a code block means the model saw nothing to change.
    Transport failures surface as :class:`RevisionError`.
    """
    warnings: list[str] = []
    truncated = False
    if variant.kind is VariantKind.SOSECURE and cfg.max_context_tokens is not None:
        kept, truncated = fit_context(variant.context, cfg.max_context_tokens, estimator)
        if truncated:
            variant = PromptVariant.sosecure(kept)
            warnings.append("context_truncated")
    prompt = render_prompt(code, variant)
    reply = client.complete([{"role": "user", "content": prompt}], cfg)

    revised = extract_code_block(reply) if reply and reply.strip() else None
    if not reply or not reply.strip():
        warnings.append("empty_reply")
        logger.warning("empty model reply; treating as no change")
    elif revised is None:
        warnings.append("no_code_block")
    if revised is None:
        revised = code

    changed = normalize_code(revised) != normalize_code(code)
    sim = similarity_ratio(normalize_code(code), normalize_code(revised)) if changed else 1.0
    suffix = render_suffix(variant)
    return RevisionResult(
        original_code=code,
        variant=variant.kind.value,
        retrieved_context_ids=variant.context_ids,
        revised_code=revised,
        changed=changed,
        similarity=sim,
        prompt_tokens_estimate=estimator(prompt),
        context_tokens_estimate=estimator(suffix) if suffix else 0,
        context_truncated=truncated,
        warnings=warnings,
    )


def revise_many(
    jobs: Sequence[tuple[str, PromptVariant]],
    cfg: LlmConfig,
    client: ChatClient,
    estimator: TokenEstimator = estimate_tokens,
) -> list[RevisionResult]:
    """Revise a batch with at most ``cfg.max_concurrency`` requests in flight.

    Results come back in submission order.
    """
    with ThreadPoolExecutor(max_workers=cfg.max_concurrency) as pool:
        return list(pool.map(lambda job: revise(job[0], job[1], cfg, client, estimator), jobs))
