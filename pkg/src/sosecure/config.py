"""TOML configuration for the command-line tool.

Secrets never live here: the API key is read from the environment only,
and a config that tries to set one is rejected.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analyzer import BANDIT_TEMPLATE, LEVEL_RANK, ToolTemplate
from .bm25 import Bm25Params
from .llm import LlmConfig

_SECRET_KEYS = {"api_key", "apikey", "key", "token", "secret"}


class ConfigError(Exception):
    pass


@dataclass
class AppConfig:
    kb_path: Optional[Path] = None
    index_path: Optional[Path] = None
    keywords_path: Optional[Path] = None
    bm25: Bm25Params = field(default_factory=Bm25Params)
    k: int = 3
    llm: LlmConfig = field(default_factory=LlmConfig)
    analyzers: dict[str, ToolTemplate] = field(default_factory=lambda: {"python": BANDIT_TEMPLATE})
    jobs: int = 1
    analyzer_jobs: int = 1
    trust_labels: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("retrieval k must be >= 1")
        if self.jobs < 1 or self.analyzer_jobs < 1:
            raise ConfigError("job limits must be >= 1")


def _pick(section: dict, cls, where: str) -> dict:
    allowed = {f.name for f in fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(sorted(unknown))}")
    return dict(section)


def _path(value, base: Path) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value).expanduser()
    return p if p.is_absolute() else (base / p).resolve()


def load_config(path: Optional[str | Path] = None) -> AppConfig:
    """Read a TOML config; relative paths resolve against the file's directory."""
    if path is None:
        return AppConfig()
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, path.parent.resolve())


def config_from_dict(raw: dict, base: Path = Path(".")) -> AppConfig:
    llm_raw = raw.get("llm", {})
    leaked = _SECRET_KEYS & {k.lower() for k in llm_raw}
    if leaked:
        raise ConfigError("API keys are read from SOSECURE_API_KEY, not from the config file")
    paths = raw.get("paths", {})
    unknown = set(paths) - {"kb", "index", "keywords"}
    if unknown:
        raise ConfigError(f"[paths] unknown keys: {', '.join(sorted(unknown))}")

    analyzers = {"python": BANDIT_TEMPLATE}
    for lang, spec in (raw.get("analyzer") or {}).items():
        if not isinstance(spec, dict) or "commands" not in spec:
            raise ConfigError(f"[analyzer.{lang}] needs a 'commands' entry")
        level = spec.get("min_level", "none")
        if level not in LEVEL_RANK:
            raise ConfigError(f"[analyzer.{lang}] bad min_level {level!r}")
        analyzers[lang] = ToolTemplate.of(spec.get("name", lang), spec["commands"], level)

    retrieval = raw.get("retrieval", {})
    jobs = raw.get("jobs", {})
    try:
        return AppConfig(
            kb_path=_path(paths.get("kb"), base),
            index_path=_path(paths.get("index"), base),
            keywords_path=_path(paths.get("keywords"), base),
            bm25=Bm25Params(**_pick(raw.get("bm25", {}), Bm25Params, "bm25")),
            k=int(retrieval.get("k", 3)),
            llm=LlmConfig(**_pick(llm_raw, LlmConfig, "llm")),
            analyzers=analyzers,
            jobs=int(jobs.get("samples", 1)),
            analyzer_jobs=int(jobs.get("analyzer", 1)),
            trust_labels=bool(raw.get("eval", {}).get("trust_labels", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
