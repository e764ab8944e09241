"""Configuration loading: defaults, strict keys, path resolution, env fallbacks."""

from __future__ import annotations

from pathlib import Path

import pytest

from conftest import CONFIG_PATH
from vts.config import (
    ENV_API_KEY,
    ENV_MODEL,
    OrgConfig,
    PipelineConfig,
    ProviderConfig,
    load_config,
)
from vts.errors import ConfigError


def write_config(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "vts.yaml"
    path.write_text(text, encoding="utf-8")
    return path


def test_empty_file_gives_full_defaults(tmp_path):
    config = load_config(write_config(tmp_path, ""))
    assert config.provider.mode == "replay"
    assert config.budget.max_requests == 500
    assert config.ingest.dpi == 300
    assert config.org.levers == ("staffing", "marketing", "pricing", "discount rate")
    assert config.discount_rate == 0.108
    assert config.parallelism == 4
    assert config.taxonomy is None


def test_bundled_test_config_values():
    config = load_config(CONFIG_PATH)
    assert config.provider.mode == "replay"
    assert config.provider.model == "vts-default"
    assert config.ingest.dpi == 72
    assert config.provider.fixtures_dir == CONFIG_PATH.parent / "replies"
    assert config.org.name == "Meridian Field Services"


def test_relative_paths_resolve_against_config_directory(tmp_path):
    config = load_config(
        write_config(tmp_path, "provider:\n  fixtures_dir: deep/replies\ntaxonomy: tax.yaml\n")
    )
    assert config.provider.fixtures_dir == tmp_path / "deep" / "replies"
    assert config.taxonomy == tmp_path / "tax.yaml"


def test_absolute_paths_kept(tmp_path):
    config = load_config(write_config(tmp_path, "provider:\n  fixtures_dir: /somewhere/else\n"))
    assert config.provider.fixtures_dir == Path("/somewhere/else")


@pytest.mark.parametrize(
    "text",
    [
        "providre: {}\n",
        "provider:\n  mdoe: live\n",
        "budget:\n  max_request: 3\n",
        "org:\n  heads: 3\n",
        "provider:\n  mode: dry-run\n",
        "budget:\n  max_requests: 0\n",
        "ingest:\n  dpi: -3\n",
        "parallelism: 0\n",
        "discount_rate: -2\n",
        "provider: [1, 2]\n",
    ],
)
def test_bad_configs_fail_loudly(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, text))


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_invalid_yaml_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, "provider: [unclosed\n"))


def test_env_fills_blank_credentials(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_API_KEY, "from-env")
    monkeypatch.setenv(ENV_MODEL, "env-model")
    config = load_config(write_config(tmp_path, ""))
    assert config.provider.api_key == "from-env"
    assert config.provider.model == "env-model"


def test_file_values_beat_env(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_MODEL, "env-model")
    config = load_config(write_config(tmp_path, "provider:\n  model: file-model\n"))
    assert config.provider.model == "file-model"


def test_org_validation():
    with pytest.raises(ConfigError):
        OrgConfig(levers=())
    with pytest.raises(ConfigError):
        OrgConfig(headcount_cap=-1)


def test_provider_mode_validation():
    for mode in ("live", "record", "replay"):
        assert ProviderConfig(mode=mode).mode == mode
    with pytest.raises(ConfigError):
        ProviderConfig(mode="offline")


def test_pipeline_config_defaults_compose():
    config = PipelineConfig()
    assert config.provider.mode == "replay"
    assert config.org.budget_envelope == 1_000_000.0
