"""Static-analyzer bridge: run a tool on a snippet, parse SARIF, diff CWE findings."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

logger = logging.getLogger(__name__)

SARIF_VERSION = "2.1.0"
SOURCE_NAMES = {"python": "snippet.py", "c": "snippet.c"}
LEVEL_RANK = {"none": 0, "note": 1, "warning": 2, "error": 3}

_CWE_TAG_RE = re.compile(r"^external/cwe/cwe-(\d+)$", re.IGNORECASE)


class AnalyzerError(Exception):
    pass


class SarifError(AnalyzerError):
    pass


class AnalyzerEnvironmentError(AnalyzerError):
    def __init__(self, binary: str):
        super().__init__(f"analyzer binary not found on PATH: {binary}")
        self.binary = binary


def normalize_cwe(value: Union[str, int]) -> str:
    """``"cwe-78"``, ``"CWE-078"``, ``78`` -> ``"CWE-078"``."""
    m = re.search(r"(\d+)", str(value))
    if m is None:
        raise ValueError(f"not a CWE identifier: {value!r}")
    return f"CWE-{int(m.group(1)):03d}"


@dataclass(frozen=True)
class Finding:
    tool: str
    rule_id: str
    cwes: frozenset[str]
    path: str
    line: int
    message: str
    level: str = "warning"

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "rule_id": self.rule_id,
            "cwes": sorted(self.cwes),
            "path": self.path,
            "line": self.line,
            "message": self.message,
            "level": self.level,
        }


@dataclass
class AnalysisRun:
    tool: str
    language: str
    snapshot_id: str
    findings: list[Finding]
    exit_status: int = 0
    wall_time: float = 0.0
    tool_version: Optional[str] = None

    @property
    def cwes(self) -> set[str]:
        return {c for f in self.findings for c in f.cwes}

    @property
    def untagged_rules(self) -> set[str]:
        return {f.rule_id for f in self.findings if not f.cwes}

    @property
    def keys(self) -> set[str]:
        """Vulnerability identities: CWE ids, plus ``rule:<id>`` for untagged rules."""
        return self.cwes | {f"rule:{r}" for r in self.untagged_rules}


def _rule_tags(rule: dict) -> list[str]:
    props = rule.get("properties") or {}
    return list(props.get("tags") or [])


def _collect_rules(run: dict) -> tuple[dict, list]:
    by_id: dict[str, dict] = {}
    ordered: list[dict] = []
    tool = run.get("tool") or {}
    for component in [tool.get("driver") or {}] + list(tool.get("extensions") or []):
        for rule in component.get("rules") or []:
            ordered.append(rule)
            if "id" in rule:
                by_id.setdefault(rule["id"], rule)
    return by_id, ordered


def _load_sarif(data: Union[bytes, str, dict]) -> dict:
    if isinstance(data, dict):
        return data
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        head = data[:200] if isinstance(data, (bytes, str)) else b""
        raise SarifError(f"unparseable SARIF: {head!r}") from exc
    if not isinstance(doc, dict):
        raise SarifError(f"unparseable SARIF: {str(data)[:200]!r}")
    return doc


def parse_sarif(data: Union[bytes, str, dict], min_level: str = "none") -> list[Finding]:
    """Findings from a SARIF 2.1.0 log.

    CWE ids come from rule tags of the form ``external/cwe/cwe-NNN`` (rule
    looked up by ``ruleId`` or ``ruleIndex``; result-level tags are merged
    in).  Results below ``min_level`` are dropped; a result without a
    level counts as ``warning``.
    """
    doc = _load_sarif(data)
    version = doc.get("version")
    if version is not None and version != SARIF_VERSION:
        raise SarifError(f"unsupported SARIF version {version!r}")
    runs = doc.get("runs")
    if not isinstance(runs, list):
        raise SarifError("SARIF log has no runs array")
    floor = LEVEL_RANK[min_level]
    findings = []
    for run in runs:
        tool = ((run.get("tool") or {}).get("driver") or {}).get("name", "unknown")
        rules_by_id, rules = _collect_rules(run)
        for result in run.get("results") or []:
            level = result.get("level", "warning")
            if LEVEL_RANK.get(level, 2) < floor:
                continue
            rule_id = result.get("ruleId") or (result.get("rule") or {}).get("id") or ""
            rule = rules_by_id.get(rule_id)
            idx = result.get("ruleIndex", (result.get("rule") or {}).get("index"))
            if rule is None and isinstance(idx, int) and 0 <= idx < len(rules):
                rule = rules[idx]
                rule_id = rule_id or rule.get("id", "")
            tags = _rule_tags(rule or {}) + list((result.get("properties") or {}).get("tags") or [])
            cwes = set()
            for tag in tags:
                m = _CWE_TAG_RE.match(str(tag).strip())
                if m:
                    cwes.add(normalize_cwe(m.group(1)))
            path, line = "", 1
            locations = result.get("locations") or []
            if locations:
                phys = locations[0].get("physicalLocation") or {}
                path = (phys.get("artifactLocation") or {}).get("uri", "")
                line = max(1, int((phys.get("region") or {}).get("startLine", 1)))
            msg = result.get("message") or {}
            findings.append(
                Finding(
                    tool=tool,
                    rule_id=rule_id,
                    cwes=frozenset(cwes),
                    path=path,
                    line=line,
                    message=msg.get("text", msg.get("markdown", "")),
                    level=level,
                )
            )
    return findings


def sarif_tool_info(data: Union[bytes, str, dict]) -> tuple[str, Optional[str]]:
    runs = _load_sarif(data).get("runs") or [{}]
    driver = (runs[0].get("tool") or {}).get("driver") or {}
    return driver.get("name", "unknown"), driver.get("semanticVersion") or driver.get("version")


def snapshot_id(code: str) -> str:
    return hashlib.sha256(code.encode("utf-8")).hexdigest()


@dataclass
class ToolTemplate:
    """Commands run in order inside a private workspace.

    Placeholders: ``{input_dir}``, ``{output_sarif}``, ``{language}``.  When no
    command mentions ``{output_sarif}``, the last command's stdout is the SARIF.
    Non-zero exits are fine as long as SARIF is produced.
    """

    name: str
    commands: list[str]
    min_level: str = "none"

    @classmethod
    def of(cls, name: str, commands: Union[str, Sequence[str]], min_level: str = "none") -> "ToolTemplate":
        return cls(name, [commands] if isinstance(commands, str) else list(commands), min_level)


BANDIT_TEMPLATE = ToolTemplate.of(
    "bandit", "bandit -r {input_dir} -f sarif -o {output_sarif} -q", min_level="warning"
)


def run_analyzer(code: str, language: str, template: ToolTemplate) -> AnalysisRun:
    if language not in SOURCE_NAMES:
        raise ValueError(f"unsupported language {language!r}")
    argvs = [shlex.split(c) for c in template.commands]
    for argv in argvs:
        if not argv:
            raise ValueError("empty analyzer command")
        if shutil.which(argv[0]) is None:
            raise AnalyzerEnvironmentError(argv[0])
    start = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="sosecure-") as tmp:
        input_dir = Path(tmp) / "src"
        input_dir.mkdir()
        (input_dir / SOURCE_NAMES[language]).write_text(code, encoding="utf-8")
        out = Path(tmp) / "results.sarif"
        values = {"input_dir": str(input_dir), "output_sarif": str(out), "language": language}
        status, stdout = 0, b""
        for argv in argvs:
            proc = subprocess.run(
                [a.format(**values) for a in argv], capture_output=True, cwd=tmp
            )
            status, stdout = proc.returncode, proc.stdout
        raw = out.read_bytes() if out.exists() else stdout
    findings = parse_sarif(raw, template.min_level)
    _, version = sarif_tool_info(raw)
    return AnalysisRun(
        tool=template.name,
        language=language,
        snapshot_id=snapshot_id(code),
        findings=findings,
        exit_status=status,
        wall_time=time.monotonic() - start,
        tool_version=version,
    )


class MockAnalyzer:
    """Canned SARIF keyed by the snippet's sha256 (or simple substring rules).

    Manifest: ``{"tool": "mock", "rules": [{"code_sha256" | "code" |
    "code_contains": ..., "sarif": {...} | "sarif_file": "rel/path"}],
    "default": {...} | null}``.  A missing default means no findings.
    """

    def __init__(self, rules: Optional[list[dict]] = None, default: Optional[dict] = None,
                 tool: str = "mock", base_dir: Optional[Path] = None, min_level: str = "none"):
        self.rules = rules or []
        self.default = default
        self.tool = tool
        self.base_dir = base_dir or Path(".")
        self.min_level = min_level

    @classmethod
    def from_file(cls, path: str | Path) -> "MockAnalyzer":
        path = Path(path)
        spec = json.loads(path.read_text(encoding="utf-8"))
        return cls(spec.get("rules"), spec.get("default"), spec.get("tool", "mock"),
                   path.parent, spec.get("min_level", "none"))

    def _sarif_for(self, code: str) -> Optional[Union[dict, bytes]]:
        digest = snapshot_id(code)
        for rule in self.rules:
            if (
                rule.get("code_sha256") == digest
                or ("code" in rule and rule["code"] == code)
                or ("code_contains" in rule and rule["code_contains"] in code)
            ):
                if "sarif_file" in rule:
                    return (self.base_dir / rule["sarif_file"]).read_bytes()
                return rule.get("sarif")
        return self.default

    def run(self, code: str, language: str) -> AnalysisRun:
        sarif = self._sarif_for(code)
        findings = parse_sarif(sarif, self.min_level) if sarif is not None else []
        return AnalysisRun(
            tool=self.tool, language=language, snapshot_id=snapshot_id(code),
            findings=findings, exit_status=0, wall_time=0.0, tool_version="mock",
        )


class Analyzer:
    """Routes snippets to a per-language tool template, or to a mock."""

    def __init__(self, templates: Optional[dict[str, ToolTemplate]] = None,
                 mock: Optional[MockAnalyzer] = None, jobs: int = 1):
        self.templates = templates or {}
        self.mock = mock
        self.jobs = max(1, jobs)

    def run(self, code: str, language: str) -> AnalysisRun:
        if self.mock is not None:
            return self.mock.run(code, language)
        if language not in self.templates:
            raise AnalyzerError(f"no analyzer configured for {language}")
        return run_analyzer(code, language, self.templates[language])

    def run_many(self, items: Iterable[tuple[str, str]]) -> list[AnalysisRun]:
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(lambda it: self.run(*it), items))


@dataclass(frozen=True)
class FindingsDiff:
    fixed: frozenset[str]
    persisted: frozenset[str]
    introduced: frozenset[str]
    rules_fixed: frozenset[str] = field(default_factory=frozenset)
    rules_persisted: frozenset[str] = field(default_factory=frozenset)
    rules_introduced: frozenset[str] = field(default_factory=frozenset)


def diff_sets(before: set[str], after: set[str]) -> tuple[frozenset, frozenset, frozenset]:
    return frozenset(before - after), frozenset(before & after), frozenset(after - before)


def diff_findings(before: AnalysisRun, after: AnalysisRun) -> FindingsDiff:
    """Compare two runs by CWE id at snippet granularity (lines are ignored).

    Findings without CWE tags are compared by rule id in the ``rules_*`` triple.
    """
    if before.language != after.language:
        raise ValueError("runs cover different languages")
    fixed, persisted, introduced = diff_sets(before.cwes, after.cwes)
    r_fixed, r_persisted, r_introduced = diff_sets(before.untagged_rules, after.untagged_rules)
    return FindingsDiff(fixed, persisted, introduced, r_fixed, r_persisted, r_introduced)
