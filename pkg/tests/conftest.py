"""Shared fixtures: a replayed pipeline run over the bundled sample
report, its golden artifacts, and the parsed result document."""

from __future__ import annotations

from pathlib import Path

import pytest

from vts.canonical import parse_result_document
from vts.config import load_config
from vts.ingestion import load_pages
from vts.providers import Budget, ModelRequest, ModelResponse, ProviderSession, build_session
from vts.stages import run_pipeline

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
GOLDEN = TESTS / "golden"
REPORT_PDF = FIXTURES / "report.pdf"
CONFIG_PATH = FIXTURES / "vts.yaml"


@pytest.fixture(scope="session")
def config():
    return load_config(CONFIG_PATH)


def fresh_session(config):
    """A new replay session with a fresh budget."""
    return build_session(config.provider, config.budget)


class ScriptedBackend:
    """Returns queued reply texts in order; records every request."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests: list[ModelRequest] = []

    def send(self, request: ModelRequest) -> ModelResponse:
        self.requests.append(request)
        text = self.replies.pop(0)
        return ModelResponse(text=text, input_tokens=10, output_tokens=5)


def scripted_session(replies) -> tuple[ProviderSession, ScriptedBackend]:
    """A session whose provider plays back the given reply texts in order."""
    backend = ScriptedBackend(replies)
    session = ProviderSession(
        provider=backend, budget=Budget(max_requests=50, max_total_tokens=10**6), model="m"
    )
    return session, backend


@pytest.fixture()
def replay_session(config):
    return fresh_session(config)


@pytest.fixture(scope="session")
def pipeline_dir(config, tmp_path_factory) -> Path:
    """One full replayed pipeline run, shared read-only across tests."""
    workdir = tmp_path_factory.mktemp("pipeline")
    run_pipeline(REPORT_PDF, workdir, config, fresh_session(config))
    return workdir


@pytest.fixture(scope="session")
def corpus(pipeline_dir):
    return load_pages(pipeline_dir / "pages")


@pytest.fixture(scope="session")
def golden_doc():
    return parse_result_document((GOLDEN / "result.yaml").read_text("utf-8"))
