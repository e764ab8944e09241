"""Pipeline configuration loaded from a YAML file (vts.yaml).

Unknown keys are rejected so typos fail loudly, and every relative path
in the file is resolved against the directory containing the file.
"""

from __future__ import annotations

import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from vts.errors import ConfigError
from vts.npv import DEFAULT_DISCOUNT_RATE

DEFAULT_LEVERS = ("staffing", "marketing", "pricing", "discount rate")
PROVIDER_MODES = ("live", "record", "replay")

ENV_API_KEY = "VTS_API_KEY"
ENV_ENDPOINT = "VTS_ENDPOINT"
ENV_MODEL = "VTS_MODEL"


def _check_keys(section: Mapping[str, Any], allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


@dataclass(frozen=True)
class ProviderConfig:
    mode: str = "replay"
    model: str = ""
    retries: int = 2
    backoff_s: float = 0.5
    fixtures_dir: Path = Path("fixtures")
    endpoint: str = ""
    api_key: str = ""

    def __post_init__(self) -> None:
        if self.mode not in PROVIDER_MODES:
            raise ConfigError(
                f"provider.mode must be one of {'|'.join(PROVIDER_MODES)}, got {self.mode!r}"
            )
        if self.retries < 0:
            raise ConfigError("provider.retries must be >= 0")
        if self.backoff_s < 0:
            raise ConfigError("provider.backoff_s must be >= 0")


@dataclass(frozen=True)
class BudgetConfig:
    max_requests: int = 500
    max_total_tokens: int = 2_000_000

    def __post_init__(self) -> None:
        if self.max_requests <= 0:
            raise ConfigError("budget.max_requests must be positive")
        if self.max_total_tokens <= 0:
            raise ConfigError("budget.max_total_tokens must be positive")


@dataclass(frozen=True)
class IngestConfig:
    dpi: int = 300
    rasterizer_cmd: str = ""
    max_pages: int = 999

    def __post_init__(self) -> None:
        if self.dpi <= 0:
            raise ConfigError("ingest.dpi must be positive")
        if not 0 < self.max_pages <= 999:
            raise ConfigError("ingest.max_pages must be in 1..999")


@dataclass(frozen=True)
class OrgConfig:
    """Organizational metadata handed to the planning tiers."""

    name: str = "the company"
    levers: tuple[str, ...] = DEFAULT_LEVERS
    budget_envelope: float = 1_000_000.0
    headcount_cap: int = 50
    currency: str = "USD"

    def __post_init__(self) -> None:
        if not self.levers:
            raise ConfigError("org.levers must not be empty")
        if self.headcount_cap < 0:
            raise ConfigError("org.headcount_cap must be >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    org: OrgConfig = field(default_factory=OrgConfig)
    taxonomy: Path | None = None
    prompts_dir: Path | None = None
    discount_rate: float = DEFAULT_DISCOUNT_RATE
    parallelism: int = 4

    def __post_init__(self) -> None:
        if self.discount_rate <= -1.0:
            raise ConfigError("discount_rate must be greater than -1")
        if self.parallelism <= 0:
            raise ConfigError("parallelism must be positive")


_TOP_KEYS = (
    "provider",
    "budget",
    "ingest",
    "org",
    "taxonomy",
    "prompts_dir",
    "discount_rate",
    "parallelism",
)
_PROVIDER_KEYS = ("mode", "model", "retries", "backoff_s", "fixtures_dir", "endpoint", "api_key")
_BUDGET_KEYS = ("max_requests", "max_total_tokens")
_INGEST_KEYS = ("dpi", "rasterizer_cmd", "max_pages")
_ORG_KEYS = ("name", "levers", "budget_envelope", "headcount_cap", "currency")


def _section(raw: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    section = raw.get(key) or {}
    if not isinstance(section, Mapping):
        raise ConfigError(f"{key} must be a mapping")
    return section


def _resolve(base: Path, value: Any) -> Path:
    path = Path(str(value))
    return path if path.is_absolute() else base / path


def _provider_from(section: Mapping[str, Any], base: Path) -> ProviderConfig:
    _check_keys(section, _PROVIDER_KEYS, "provider")
    try:
        return ProviderConfig(
            mode=str(section.get("mode", "replay")),
            model=str(section.get("model", "") or os.environ.get(ENV_MODEL, "")),
            retries=int(section.get("retries", 2)),
            backoff_s=float(section.get("backoff_s", 0.5)),
            fixtures_dir=_resolve(base, section.get("fixtures_dir", "fixtures")),
            endpoint=str(section.get("endpoint", "") or os.environ.get(ENV_ENDPOINT, "")),
            api_key=str(section.get("api_key", "") or os.environ.get(ENV_API_KEY, "")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad provider value: {exc}")


def _budget_from(section: Mapping[str, Any]) -> BudgetConfig:
    _check_keys(section, _BUDGET_KEYS, "budget")
    defaults = BudgetConfig()
    try:
        return BudgetConfig(
            max_requests=int(section.get("max_requests", defaults.max_requests)),
            max_total_tokens=int(section.get("max_total_tokens", defaults.max_total_tokens)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad budget value: {exc}")


def _ingest_from(section: Mapping[str, Any]) -> IngestConfig:
    _check_keys(section, _INGEST_KEYS, "ingest")
    defaults = IngestConfig()
    try:
        return IngestConfig(
            dpi=int(section.get("dpi", defaults.dpi)),
            rasterizer_cmd=str(section.get("rasterizer_cmd", "")),
            max_pages=int(section.get("max_pages", defaults.max_pages)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad ingest value: {exc}")


def _org_from(section: Mapping[str, Any]) -> OrgConfig:
    _check_keys(section, _ORG_KEYS, "org")
    levers_raw = section.get("levers")
    defaults = OrgConfig()
    try:
        return OrgConfig(
            name=str(section.get("name", defaults.name)),
            levers=defaults.levers if levers_raw is None else tuple(str(x) for x in levers_raw),
            budget_envelope=float(section.get("budget_envelope", defaults.budget_envelope)),
            headcount_cap=int(section.get("headcount_cap", defaults.headcount_cap)),
            currency=str(section.get("currency", defaults.currency)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad org value: {exc}")


def config_from_dict(raw: Mapping[str, Any], base: Path) -> PipelineConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, _TOP_KEYS, "config")
    try:
        discount_rate = float(raw.get("discount_rate", DEFAULT_DISCOUNT_RATE))
        parallelism = int(raw.get("parallelism", 4))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric value: {exc}")
    return PipelineConfig(
        provider=_provider_from(_section(raw, "provider"), base),
        budget=_budget_from(_section(raw, "budget")),
        ingest=_ingest_from(_section(raw, "ingest")),
        org=_org_from(_section(raw, "org")),
        taxonomy=_resolve(base, raw["taxonomy"]) if raw.get("taxonomy") else None,
        prompts_dir=_resolve(base, raw["prompts_dir"]) if raw.get("prompts_dir") else None,
        discount_rate=discount_rate,
        parallelism=parallelism,
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}")
    return config_from_dict(raw or {}, path.resolve().parent)
