"""Benchmark loading and the retrieve -> revise -> analyze evaluation loop."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .analyzer import Analyzer, AnalysisRun, AnalyzerError, normalize_cwe
from .bm25 import Bm25Index
from .cwe import describe
from .kb import KbEntry
from .llm import ChatClient, LlmConfig, RevisionError
from .metrics import (
    ERRORED,
    TOP25_2024,
    LedgerRow,
    ReportError,
    compute_rates,
    mean_precision,
    per_cwe,
    secure_at_k,
    vulnerable_at_k,
)
from .revision import PromptVariant, RevisionResult, VariantKind, estimate_tokens, revise

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
DATASETS = ("sallm", "llmseceval", "lmsys", "custom")
CURATED = {"sallm", "llmseceval", "lmsys"}
MAX_ERRORED_FRACTION = 0.10


class DatasetError(Exception):
    pass


class EvalAborted(Exception):
    def __init__(self, message: str, report: "EvalReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    source_dataset: str
    language: str
    code: str
    expected_cwes: tuple[str, ...]
    prompt_text: Optional[str] = None


def _parse_record(obj, lineno: int) -> SampleRecord:
    def fail(msg):
        raise DatasetError(f"line {lineno}: {msg}")

    if not isinstance(obj, dict):
        fail("record is not a JSON object")
    for key in ("sample_id", "source_dataset", "language", "code", "expected_cwes"):
        if key not in obj:
            fail(f"missing required field '{key}'")
    if not isinstance(obj["code"], str) or not obj["code"].strip():
        fail("'code' must be a non-empty string")
    if obj["source_dataset"] not in DATASETS:
        fail(f"unknown source_dataset {obj['source_dataset']!r}")
    if obj["language"] not in ("python", "c"):
        fail(f"unsupported language {obj['language']!r}")
    cwes = obj["expected_cwes"]
    if not isinstance(cwes, list):
        fail("'expected_cwes' must be a list")
    try:
        cwes = tuple(sorted({normalize_cwe(c) for c in cwes}))
    except ValueError as exc:
        fail(str(exc))
    if not cwes and obj["source_dataset"] in CURATED:
        fail("curated samples need at least one expected CWE")
    prompt = obj.get("prompt_text")
    if prompt is not None and not isinstance(prompt, str):
        fail("'prompt_text' must be a string")
    return SampleRecord(str(obj["sample_id"]), obj["source_dataset"], obj["language"],
                        obj["code"], cwes, prompt)


def load_dataset(path: str | Path, format: str = "jsonl") -> list[SampleRecord]:
    if format != "jsonl":
        raise DatasetError(f"unsupported dataset format {format!r}")
    records: list[SampleRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            rec = _parse_record(obj, lineno)
            if rec.sample_id in seen:
                raise DatasetError(f"line {lineno}: duplicate sample_id {rec.sample_id!r}")
            seen.add(rec.sample_id)
            records.append(rec)
    return records


class Retriever:
    """BM25 index plus the knowledge-base entries it points at."""

    def __init__(self, index: Bm25Index, entries: Mapping[int, KbEntry]):
        self.index = index
        self.entries = entries

    def neighbors(self, code: str, k: int) -> list[KbEntry]:
        return [self.entries[r.answer_id] for r in self.index.query(code, k) if r.answer_id in self.entries]


class _CachedAnalyzer:
    def __init__(self, analyzer: Analyzer):
        self.analyzer = analyzer
        self._cache: dict[tuple[str, str], AnalysisRun] = {}
        self._lock = threading.Lock()

    def run(self, code: str, language: str) -> AnalysisRun:
        key = (code, language)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        result = self.analyzer.run(code, language)
        with self._lock:
            self._cache[key] = result
        return result


@dataclass
class EvalConfig:
    variants: Sequence[str] = ("base", "cwe", "cweplus", "sosecure")
    k: int = 3
    trust_labels: bool = False
    jobs: int = 1
    cwe_allowlist: Optional[Sequence[str]] = TOP25_2024
    cwe_descriptions: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        bad = [v for v in self.variants if v not in {m.value for m in VariantKind}]
        if bad:
            raise ValueError(f"unknown variants: {', '.join(bad)}")


@dataclass
class SampleOutcome:
    sample_id: str
    variant: str
    row: LedgerRow
    revision: Optional[RevisionResult] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        rev = self.revision
        return {
            "sample_id": self.sample_id,
            "variant": self.variant,
            "status": self.row.status,
            "before": sorted(self.row.before),
            "after": sorted(self.row.after),
            "fixed": sorted(self.row.fixed),
            "persisted": sorted(self.row.persisted),
            "introduced": sorted(self.row.introduced),
            "before_findings": self.row.before_findings,
            "persisted_findings": self.row.persisted_findings,
            "changed": rev.changed if rev else None,
            "similarity": _round(rev.similarity) if rev else None,
            "context_ids": rev.retrieved_context_ids if rev else [],
            "context_tokens": rev.context_tokens_estimate if rev else None,
            "warnings": rev.warnings if rev else [],
            "error": self.error,
        }


def _round(x: Optional[float], nd: int = 4) -> Optional[float]:
    return None if x is None else round(x, nd)


def _build_variant(kind: str, sample: SampleRecord, before: set[str], cfg: EvalConfig,
                   retriever: Optional[Retriever]) -> PromptVariant:
    if kind == VariantKind.BASE.value:
        return PromptVariant.base()
    if kind in (VariantKind.CWE.value, VariantKind.CWE_PLUS.value):
        cwes = list(sample.expected_cwes) or sorted(c for c in before if c.startswith("CWE-"))
        if not cwes:
            raise ValueError("sample has no CWE to name in the prompt")
        if kind == VariantKind.CWE.value:
            return PromptVariant.cwe(", ".join(cwes))
        desc = "; ".join(describe(c, cfg.cwe_descriptions) or c for c in cwes)
        return PromptVariant.cwe_plus(", ".join(cwes), desc)
    if retriever is None:
        raise ValueError("sosecure variant needs a retriever")
    context = retriever.neighbors(sample.code, cfg.k)
    if not context:
        raise ValueError("no knowledge-base entry shares a token with the snippet")
    return PromptVariant.sosecure(context)


def _evaluate_sample(sample: SampleRecord, cfg: EvalConfig, llm_cfg: LlmConfig, client: ChatClient,
                     analyzer: _CachedAnalyzer, retriever: Optional[Retriever],
                     estimator) -> list[SampleOutcome]:
    outcomes = []
    try:
        if cfg.trust_labels:
            before = set(sample.expected_cwes)
            before_findings = len(before)
            before_keys_per_finding = [{c} for c in sorted(before)]
        else:
            run = analyzer.run(sample.code, sample.language)
            before = run.keys
            before_findings = len(run.findings)
            before_keys_per_finding = [set(f.cwes) or {f"rule:{f.rule_id}"} for f in run.findings]
    except (AnalyzerError, OSError) as exc:
        msg = f"analyzer failed on original: {exc}"
        return [SampleOutcome(sample.sample_id, v, LedgerRow(sample.sample_id, errored=True), error=msg)
                for v in cfg.variants]

    for kind in cfg.variants:
        try:
            variant = _build_variant(kind, sample, before, cfg, retriever)
            rev = revise(sample.code, variant, llm_cfg, client, estimator)
            if rev.changed:
                after = analyzer.run(rev.revised_code, sample.language).keys
            else:
                after = set(before)
        except (ValueError, RevisionError, AnalyzerError, OSError) as exc:
            outcomes.append(SampleOutcome(sample.sample_id, kind,
                                          LedgerRow(sample.sample_id, errored=True), error=str(exc)))
            continue
        persisted = sum(1 for keys in before_keys_per_finding if keys & after)
        row = LedgerRow(sample.sample_id, set(before), set(after), before_findings, persisted)
        outcomes.append(SampleOutcome(sample.sample_id, kind, row, rev))
    return outcomes


@dataclass
class VariantReport:
    name: str
    outcomes: list[SampleOutcome]
    allowlist: Optional[Sequence[str]]

    def to_dict(self) -> dict:
        rows = [o.row for o in self.outcomes]
        counts = {s: 0 for s in ("fixed", "persisted", "mixed", "clean", "errored")}
        for r in rows:
            counts[r.status] += 1
        counts["total"] = len(rows)
        done = [o for o in self.outcomes if o.row.status != ERRORED]
        try:
            rates = compute_rates(rows)
            rates_d = {"fr": _round(rates.fr), "ir": _round(rates.ir), "ncr": _round(rates.ncr),
                       "ncr_samples": _round(rates.ncr_samples)}
        except ReportError:
            rates_d = {"fr": None, "ir": None, "ncr": None, "ncr_samples": None}
        cwe_rows = per_cwe(rows, self.allowlist)
        problems = [(1, 1 if o.row.after else 0) for o in done]
        sims = [o.revision.similarity for o in done if o.revision]
        fixed_sims = [o.revision.similarity for o in done if o.revision and o.row.status == "fixed"]
        ctx = [o.revision.context_tokens_estimate for o in done
               if o.revision and o.variant == VariantKind.SOSECURE.value]
        return {
            "counts": counts,
            "rates": rates_d,
            "per_cwe": [{"cwe": r.cwe, "fixed": r.fixed, "total": r.total,
                         "precision_pct": _round(r.precision_pct)} for r in cwe_rows],
            "per_cwe_mean_precision": _round(mean_precision(cwe_rows)),
            "secure_at_k": {"1": _round(secure_at_k(problems, 1))} if problems else {},
            "vulnerable_at_k": {"1": _round(vulnerable_at_k(problems, 1))} if problems else {},
            "mean_similarity": _round(sum(sims) / len(sims)) if sims else None,
            "mean_similarity_fixed": _round(sum(fixed_sims) / len(fixed_sims)) if fixed_sims else None,
            "mean_context_tokens": _round(sum(ctx) / len(ctx), 2) if ctx else None,
        }


@dataclass
class EvalReport:
    dataset: str
    k: int
    trust_labels: bool
    variants: list[VariantReport]
    sample_count: int

    @property
    def errored(self) -> int:
        return sum(1 for v in self.variants for o in v.outcomes if o.row.errored)

    def fr(self, variant: str) -> Optional[float]:
        return self.to_dict()["variants"][variant]["rates"]["fr"]

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "dataset": self.dataset,
            "neighbors_k": self.k,
            "trust_labels": self.trust_labels,
            "samples": self.sample_count,
            "variant_order": [v.name for v in self.variants],
            "variants": {v.name: v.to_dict() for v in self.variants},
            "ledger": [o.to_dict() for v in self.variants for o in v.outcomes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        d = self.to_dict()
        fmt = lambda x: "-" if x is None else f"{x:.1f}"  # noqa: E731
        lines = [f"dataset: {self.dataset}  samples: {self.sample_count}  k: {self.k}", ""]
        lines.append(f"{'System':<10} {'FR':>7} {'IR':>7} {'NCR':>7} {'secure@1':>9} {'errored':>8}")
        for name in d["variant_order"]:
            v = d["variants"][name]
            r = v["rates"]
            lines.append(
                f"{name:<10} {fmt(r['fr']):>7} {fmt(r['ir']):>7} {fmt(r['ncr']):>7} "
                f"{fmt(v['secure_at_k'].get('1')):>9} {v['counts']['errored']:>8}"
            )
        cwes = sorted({c["cwe"] for v in d["variants"].values() for c in v["per_cwe"]})
        if cwes:
            lines += ["", f"{'CWE':<9}" + "".join(f" {n + ' F/T':>14} {'P%':>6}" for n in d["variant_order"])]
            for cwe in cwes:
                cells = []
                for name in d["variant_order"]:
                    row = next((c for c in d["variants"][name]["per_cwe"] if c["cwe"] == cwe), None)
                    ft = f"{row['fixed']}/{row['total']}" if row else "-"
                    cells.append(f" {ft:>14} {fmt(row['precision_pct']) if row else '-':>6}")
                lines.append(f"{cwe:<9}" + "".join(cells))
            avg = "".join(f" {'':>14} {fmt(d['variants'][n]['per_cwe_mean_precision']):>6}"
                          for n in d["variant_order"])
            lines.append(f"{'Avg':<9}" + avg)
        return "\n".join(lines) + "\n"


def run_eval(
    dataset: Sequence[SampleRecord],
    cfg: EvalConfig,
    llm_cfg: LlmConfig,
    client: ChatClient,
    analyzer: Analyzer,
    retriever: Optional[Retriever] = None,
    *,
    dataset_name: str = "dataset",
    estimator=estimate_tokens,
) -> EvalReport:
    """Evaluate every sample under every requested prompt variant.

    Samples whose analysis or revision fails are recorded as errored and
    excluded from the rates; once more than 10% of sample/variant units
    have errored the run stops with :class:`EvalAborted`.
    """
    cached = analyzer if isinstance(analyzer, _CachedAnalyzer) else _CachedAnalyzer(analyzer)
    total_units = len(dataset) * len(cfg.variants)
    by_variant: dict[str, list[SampleOutcome]] = {v: [] for v in cfg.variants}
    errored = 0

    def work(sample):
        return _evaluate_sample(sample, cfg, llm_cfg, client, cached, retriever, estimator)

    def report() -> EvalReport:
        return EvalReport(dataset_name, cfg.k, cfg.trust_labels,
                          [VariantReport(v, by_variant[v], cfg.cwe_allowlist) for v in cfg.variants],
                          len(dataset))

    pool = ThreadPoolExecutor(max_workers=max(1, cfg.jobs))
    try:
        for outcomes in pool.map(work, dataset):
            for o in outcomes:
                by_variant[o.variant].append(o)
                if o.row.errored:
                    errored += 1
                    logger.warning("sample %s [%s] errored: %s", o.sample_id, o.variant, o.error)
            if errored > MAX_ERRORED_FRACTION * total_units:
                raise EvalAborted(f"{errored} of {total_units} sample runs errored", report())
    finally:
        pool.shutdown(wait=True, cancel_futures=True)
    return report()


def k_sweep(
    dataset: Sequence[SampleRecord],
    ks: Iterable[int],
    cfg: EvalConfig,
    llm_cfg: LlmConfig,
    client: ChatClient,
    analyzer: Analyzer,
    retriever: Retriever,
    *,
    dataset_name: str = "dataset",
) -> list[dict]:
    """Fix rate of the retrieval-augmented variant for each neighbor count."""
    cached = _CachedAnalyzer(analyzer)
    points = []
    for k in sorted(set(ks)):
        sweep_cfg = EvalConfig(variants=(VariantKind.SOSECURE.value,), k=k,
                               trust_labels=cfg.trust_labels, jobs=cfg.jobs,
                               cwe_allowlist=cfg.cwe_allowlist, cwe_descriptions=cfg.cwe_descriptions)
        rep = run_eval(dataset, sweep_cfg, llm_cfg, client, cached, retriever, dataset_name=dataset_name)
        v = rep.to_dict()["variants"][VariantKind.SOSECURE.value]
        points.append({"k": k, "fr": v["rates"]["fr"], "ir": v["rates"]["ir"],
                       "ncr": v["rates"]["ncr"], "errored": v["counts"]["errored"]})
    return points
