"""Command-line entry point: ``sosecure <command> [options]``.

Exit codes: 0 success, 1 evaluation finished with errored samples,
2 operational failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .analyzer import Analyzer, AnalyzerError, MockAnalyzer
from .bm25 import Bm25Index, Bm25Params, IndexFormatError, build_index
from .config import AppConfig, ConfigError, load_config
from .cwe import describe
from .evaluation import (
    DatasetError,
    EvalAborted,
    EvalConfig,
    Retriever,
    k_sweep,
    load_dataset,
    run_eval,
)
from .ingest import IngestError, ingest_files, read_answers
from .kb import KeywordSet, build_kb, default_keywords, load_kb, write_kb
from .llm import HttpChatClient, LlmConfig, MockChatClient, RevisionError
from .metrics import TOP25_2024
from .revision import PromptVariant, VariantKind, estimate_tokens, revise, tiktoken_estimator

log = logging.getLogger("sosecure")

EXIT_OK, EXIT_ERRORED, EXIT_FAIL, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _ints(value: str) -> list[int]:
    try:
        return [int(v) for v in _csv(value)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from exc


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _read_code(arg: str) -> str:
    if arg == "-":
        return sys.stdin.read()
    return Path(arg).read_text(encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _client(args, cfg: AppConfig):
    if args.mock_llm:
        return MockChatClient.from_file(args.mock_llm)
    return HttpChatClient()


def _analyzer(args, cfg: AppConfig) -> Analyzer:
    mock = MockAnalyzer.from_file(args.mock_analyzer) if args.mock_analyzer else None
    return Analyzer(cfg.analyzers, mock=mock, jobs=cfg.analyzer_jobs)


def _llm_cfg(args, cfg: AppConfig) -> LlmConfig:
    overrides = {}
    if getattr(args, "model", None):
        overrides["model"] = args.model
    if getattr(args, "temperature", None) is not None:
        overrides["temperature"] = args.temperature
    if getattr(args, "max_context_tokens", None) is not None:
        overrides["max_context_tokens"] = args.max_context_tokens
    if not overrides:
        return cfg.llm
    base = {f: getattr(cfg.llm, f) for f in cfg.llm.__dataclass_fields__}
    base.update(overrides)
    return LlmConfig(**base)


def _need(value, flag: str, what: str) -> Path:
    if value is None:
        raise UsageError(f"{flag} is required ({what}); pass it or set it in --config")
    return Path(value)


def _retriever(args, cfg: AppConfig) -> Retriever:
    kb_path = _need(args.kb or cfg.kb_path, "--kb", "knowledge-base JSONL")
    index_path = _need(args.index or cfg.index_path, "--index", "BM25 index file")
    return Retriever(Bm25Index.load(index_path), load_kb(kb_path))


def _estimator(args):
    return tiktoken_estimator() if getattr(args, "bpe", False) else estimate_tokens


# commands


def cmd_ingest(args, cfg: AppConfig) -> int:
    tags = [t.lower() for t in args.tags]
    if not tags:
        raise UsageError("--tags needs at least one tag")
    stats = ingest_files(
        args.posts, args.comments, tags, args.out,
        min_code_len=args.min_code_len, staging_path=args.staging, jobs=args.jobs,
    )
    _write_json(Path(str(args.out) + ".stats.json"), stats.to_dict())
    print(f"ingest: {stats.emitted} answers -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_build_kb(args, cfg: AppConfig) -> int:
    kw_path = args.keywords or cfg.keywords_path
    keywords = KeywordSet.from_file(kw_path) if kw_path else default_keywords()
    entries, stats = build_kb(read_answers(args.answers), keywords)
    write_kb(entries, args.out)
    _write_json(Path(str(args.out) + ".stats.json"), stats.to_dict())
    print(f"build-kb: {stats.answers_out}/{stats.answers_in} answers kept -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_index(args, cfg: AppConfig) -> int:
    kb_path = _need(args.kb or cfg.kb_path, "--kb", "knowledge-base JSONL")
    out = _need(args.out or cfg.index_path, "--out", "index output path")
    params = Bm25Params(
        k1=args.k1 if args.k1 is not None else cfg.bm25.k1,
        b=args.b if args.b is not None else cfg.bm25.b,
        idf_floor_epsilon=args.epsilon if args.epsilon is not None else cfg.bm25.idf_floor_epsilon,
        split_identifiers=args.split_identifiers or cfg.bm25.split_identifiers,
    )
    index = build_index(load_kb(kb_path).values(), params)
    index.save(out)
    print(f"index: {index.doc_count} documents -> {out}", file=sys.stderr)
    return EXIT_OK


def cmd_retrieve(args, cfg: AppConfig) -> int:
    index_path = _need(args.index or cfg.index_path, "--index", "BM25 index file")
    index = Bm25Index.load(index_path)
    for r in index.query(_read_code(args.code), args.k or cfg.k):
        print(f"{r.rank}\t{r.answer_id}\t{r.score:.6f}")
    return EXIT_OK


def _variant_for(args, cfg: AppConfig, code: str) -> PromptVariant:
    kind = args.variant
    if kind == VariantKind.BASE.value:
        return PromptVariant.base()
    if kind in (VariantKind.CWE.value, VariantKind.CWE_PLUS.value):
        if not args.cwe:
            raise UsageError(f"--variant {kind} needs --cwe")
        if kind == VariantKind.CWE.value:
            return PromptVariant.cwe(args.cwe)
        desc = args.cwe_description or describe(args.cwe)
        if not desc:
            raise UsageError(f"no built-in description for {args.cwe}; pass --cwe-description")
        return PromptVariant.cwe_plus(args.cwe, desc)
    entries = _retriever(args, cfg).neighbors(code, args.k or cfg.k)
    if not entries:
        raise RevisionError("retrieval returned no knowledge-base entries for this code")
    return PromptVariant.sosecure(entries)


def cmd_revise(args, cfg: AppConfig) -> int:
    code = _read_code(args.code)
    variant = _variant_for(args, cfg, code)
    result = revise(code, variant, _llm_cfg(args, cfg), _client(args, cfg), _estimator(args))
    sys.stdout.write(result.revised_code)
    if result.revised_code and not result.revised_code.endswith("\n"):
        sys.stdout.write("\n")
    if args.sidecar:
        sidecar = {
            "variant": result.variant,
            "retrieved_context_ids": result.retrieved_context_ids,
            "changed": result.changed,
            "similarity": round(result.similarity, 6),
            "prompt_tokens_estimate": result.prompt_tokens_estimate,
            "context_tokens_estimate": result.context_tokens_estimate,
            "context_truncated": result.context_truncated,
            "warnings": result.warnings,
        }
        _write_json(Path(args.sidecar), sidecar)
    return EXIT_OK


def cmd_eval(args, cfg: AppConfig) -> int:
    dataset = load_dataset(args.dataset)
    variants = args.variants
    allowlist = None if args.all_cwes else TOP25_2024
    ecfg = EvalConfig(
        variants=tuple(variants), k=args.k or cfg.k,
        trust_labels=args.trust_labels or cfg.trust_labels,
        jobs=args.jobs or cfg.jobs, cwe_allowlist=allowlist,
    )
    needs_retrieval = VariantKind.SOSECURE.value in variants or args.k_sweep
    retriever = _retriever(args, cfg) if needs_retrieval else None
    llm_cfg = _llm_cfg(args, cfg)
    client = _client(args, cfg)
    analyzer = _analyzer(args, cfg)
    name = args.name or Path(args.dataset).stem
    out = Path(args.out)

    if args.k_sweep:
        points = k_sweep(dataset, args.k_sweep, ecfg, llm_cfg, client, analyzer, retriever, dataset_name=name)
        _write_json(out, {"dataset": name, "report_version": 1, "k_sweep": points})
        for p in points:
            fr = "-" if p["fr"] is None else f"{p['fr']:.1f}"
            print(f"k={p['k']}\tFR={fr}")
        return EXIT_ERRORED if any(p["errored"] for p in points) else EXIT_OK

    try:
        report = run_eval(dataset, ecfg, llm_cfg, client, analyzer, retriever,
                          dataset_name=name, estimator=_estimator(args))
    except EvalAborted as exc:
        out.write_text(exc.report.to_json(), encoding="utf-8")
        raise
    out.write_text(report.to_json(), encoding="utf-8")
    text = report.to_text()
    text_out = Path(args.text_out) if args.text_out else out.with_suffix(".txt")
    text_out.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_ERRORED if report.errored else EXIT_OK


# parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="TOML config file")
    common.add_argument("--mock-llm", type=Path, default=None, help="JSON rules for a mock model")
    common.add_argument("--mock-analyzer", type=Path, default=None, help="JSON manifest of canned SARIF")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    parser = _Parser(prog="sosecure", description="Security-aware code revision with retrieved Q&A context.",
                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("ingest", parents=[common], formatter_class=fmt,
                       help="join a Posts/Comments dump slice into cleaned answers")
    p.add_argument("--posts", type=Path, required=True, help="Posts.xml")
    p.add_argument("--comments", type=Path, required=True, help="Comments.xml")
    p.add_argument("--tags", type=_csv, required=True, help="comma-separated question tags (union)")
    p.add_argument("--out", type=Path, required=True, help="output JSONL")
    p.add_argument("--min-code-len", type=int, default=0, help="require one code block at least this long")
    p.add_argument("--staging", type=Path, default=None, help="on-disk SQLite staging file (must not exist)")
    p.add_argument("--jobs", type=_positive, default=1, help="worker processes for HTML cleaning")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-kb", parents=[common], formatter_class=fmt,
                       help="keep answers whose comments raise a security concern")
    p.add_argument("--answers", type=Path, required=True, help="cleaned-answer JSONL from ingest")
    p.add_argument("--out", type=Path, required=True, help="knowledge-base JSONL")
    p.add_argument("--keywords", type=Path, default=None, help="keyword file; built-in list if unset")
    p.set_defaults(func=cmd_build_kb)

    p = sub.add_parser("index", parents=[common], formatter_class=fmt, help="build the BM25 index")
    p.add_argument("--kb", type=Path, default=None, help="knowledge-base JSONL")
    p.add_argument("--out", type=Path, default=None, help="index file")
    p.add_argument("--k1", type=float, default=None, help="term-frequency saturation (config or 1.5)")
    p.add_argument("--b", type=float, default=None, help="length normalization (config or 0.75)")
    p.add_argument("--epsilon", type=float, default=None, help="IDF floor factor (config or 0.25)")
    p.add_argument("--split-identifiers", action="store_true", help="also index camelCase/snake_case parts")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", parents=[common], formatter_class=fmt,
                       help="print the top-k answers for a snippet")
    p.add_argument("--index", type=Path, default=None, help="index file")
    p.add_argument("--code", required=True, help="snippet file, or - for stdin")
    p.add_argument("-k", type=_positive, default=None, help="number of results (config or 3)")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("revise", parents=[common], formatter_class=fmt,
                       help="revise one snippet and print the result")
    p.add_argument("--code", required=True, help="snippet file, or - for stdin")
    p.add_argument("--variant", choices=[v.value for v in VariantKind], default="sosecure",
                   help="prompt variant")
    p.add_argument("--cwe", default=None, help="CWE id for the cwe/cweplus variants")
    p.add_argument("--cwe-description", default=None, help="override the CWE description")
    p.add_argument("--kb", type=Path, default=None, help="knowledge-base JSONL (sosecure)")
    p.add_argument("--index", type=Path, default=None, help="index file (sosecure)")
    p.add_argument("-k", type=_positive, default=None, help="neighbors added as context (config or 3)")
    p.add_argument("--model", default=None, help="model name (config or gpt-4o-mini)")
    p.add_argument("--temperature", type=float, default=None, help="sampling temperature (config or 0.0)")
    p.add_argument("--max-context-tokens", type=_positive, default=None, help="trim retrieved context")
    p.add_argument("--bpe", action="store_true", help="count tokens with tiktoken")
    p.add_argument("--sidecar", default=None, help="write revision metadata JSON here")
    p.set_defaults(func=cmd_revise)

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt,
                       help="run prompt variants over a dataset and report FR/IR/NCR")
    p.add_argument("--dataset", type=Path, required=True, help="samples JSONL")
    p.add_argument("--variants", type=_csv, default="base,cwe,cweplus,sosecure",
                   help="comma-separated variants")
    p.add_argument("--kb", type=Path, default=None, help="knowledge-base JSONL")
    p.add_argument("--index", type=Path, default=None, help="index file")
    p.add_argument("-k", type=_positive, default=None, help="neighbors added as context (config or 3)")
    p.add_argument("--k-sweep", type=_ints, default=None, help="e.g. 1,3,5,7: sosecure FR per k")
    p.add_argument("--trust-labels", action="store_true", help="use expected CWEs instead of analyzing originals")
    p.add_argument("--all-cwes", action="store_true", help="per-CWE table without the Top-25 filter")
    p.add_argument("--jobs", type=_positive, default=None, help="samples in flight (config or 1)")
    p.add_argument("--model", default=None, help="model name (config or gpt-4o-mini)")
    p.add_argument("--temperature", type=float, default=None, help="sampling temperature (config or 0.0)")
    p.add_argument("--max-context-tokens", type=_positive, default=None, help="trim retrieved context")
    p.add_argument("--bpe", action="store_true", help="count tokens with tiktoken")
    p.add_argument("--name", default=None, help="dataset name in the report; file stem if unset")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--text-out", default=None, help="text table path; <out>.txt if unset")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "variants", None):
        bad = [v for v in args.variants if v not in {k.value for k in VariantKind}]
        if bad:
            parser.error(f"unknown variant(s): {', '.join(bad)}")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"sosecure {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvalAborted as exc:
        print(f"sosecure eval: aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except FileNotFoundError as exc:
        print(f"sosecure {args.command}: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, IngestError, IndexFormatError, DatasetError, AnalyzerError,
            RevisionError, OSError, ValueError) as exc:
        print(f"sosecure {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
