"""Transports, budget accounting, and the record/replay fixture format."""

from __future__ import annotations

import json
import threading

import pytest

from vts.config import BudgetConfig, ProviderConfig
from vts.errors import (
    BudgetExceeded,
    ConfigError,
    MalformedResponse,
    MissingFixture,
    ProviderError,
)
from vts.providers import (
    Budget,
    LiveProvider,
    ModelRequest,
    ModelResponse,
    ProviderSession,
    RecordProvider,
    ReplayProvider,
    ResponseFormat,
    build_provider,
    build_session,
    canonical_request_hash,
    complete,
    estimate_tokens,
)


def req(**overrides) -> ModelRequest:
    base = dict(
        model="vts-default",
        system_prompt="be brief",
        user_prompt="list: yes\n",
        response_format=ResponseFormat.YAML,
        max_output_tokens=64,
    )
    base.update(overrides)
    return ModelRequest(**base)


class StaticProvider:
    def __init__(self, text="ok: true\n", input_tokens=10, output_tokens=5):
        self.response = ModelResponse(text=text, input_tokens=input_tokens, output_tokens=output_tokens)
        self.calls = 0

    def send(self, request: ModelRequest) -> ModelResponse:
        self.calls += 1
        return self.response


# --- request hashing ------------------------------------------------------


def test_hash_is_stable_and_sensitive():
    a = req()
    assert canonical_request_hash(a) == canonical_request_hash(req())
    assert canonical_request_hash(a) != canonical_request_hash(req(user_prompt="other"))
    assert canonical_request_hash(a) != canonical_request_hash(req(model="m2"))
    assert canonical_request_hash(a) != canonical_request_hash(req(max_output_tokens=65))
    assert canonical_request_hash(a) != canonical_request_hash(
        req(response_format=ResponseFormat.TEXT)
    )


def test_hash_covers_image_bytes_independent_of_location():
    with_image = req(images=(b"PNG-BYTES",))
    assert canonical_request_hash(with_image) == canonical_request_hash(req(images=(b"PNG-BYTES",)))
    assert canonical_request_hash(with_image) != canonical_request_hash(req(images=(b"OTHER",)))
    assert canonical_request_hash(with_image) != canonical_request_hash(req())


def test_hash_field_boundaries_not_confusable():
    # Moving characters across the field boundary must change the hash.
    a = req(system_prompt="ab", user_prompt="c")
    b = req(system_prompt="a", user_prompt="bc")
    assert canonical_request_hash(a) != canonical_request_hash(b)


# --- budget ---------------------------------------------------------------


def test_budget_request_cap():
    budget = Budget(max_requests=2, max_total_tokens=10_000)
    first = budget.reserve(10)
    budget.commit(first, 10)
    second = budget.reserve(10)
    budget.commit(second, 10)
    with pytest.raises(BudgetExceeded):
        budget.reserve(0)
    assert budget.consumed_requests == 2


def test_budget_token_cap_counts_reservations():
    budget = Budget(max_requests=10, max_total_tokens=100)
    budget.reserve(80)
    with pytest.raises(BudgetExceeded):
        budget.reserve(40)


def test_budget_refund_releases_headroom():
    budget = Budget(max_requests=1, max_total_tokens=100)
    reservation = budget.reserve(80)
    budget.refund(reservation)
    budget.commit(budget.reserve(80), 60)
    assert budget.consumed_tokens == 60
    assert budget.consumed_requests == 1


def test_budget_commit_clamps_to_maximum():
    budget = Budget(max_requests=5, max_total_tokens=100)
    budget.commit(budget.reserve(50), 5_000)
    assert budget.consumed_tokens == 100


def test_budget_rejects_nonpositive_maxima():
    with pytest.raises(ValueError):
        Budget(0, 10)
    with pytest.raises(ValueError):
        Budget(10, 0)


def test_budget_is_thread_safe():
    budget = Budget(max_requests=64, max_total_tokens=10_000)
    errors = []

    def worker():
        try:
            for _ in range(8):
                budget.commit(budget.reserve(10), 10)
        except Exception as exc:  # pragma: no cover - failure path
            errors.append(exc)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert budget.consumed_requests == 64
    assert budget.consumed_tokens == 640


def test_estimate_tokens_formula():
    request = req(system_prompt="x" * 30, user_prompt="y" * 31, images=(b"a", b"b"), max_output_tokens=100)
    assert estimate_tokens(request) == (61 // 3) + 2 * 1024 + 100


# --- complete(): budget + format glue ------------------------------------


def test_complete_commits_actual_usage():
    budget = Budget(max_requests=5, max_total_tokens=10_000)
    response = complete(StaticProvider(), req(), budget)
    assert response.text == "ok: true\n"
    assert budget.consumed_requests == 1
    assert budget.consumed_tokens == 15


def test_complete_refunds_when_provider_fails(tmp_path):
    budget = Budget(max_requests=1, max_total_tokens=10_000)
    with pytest.raises(MissingFixture):
        complete(ReplayProvider(tmp_path), req(), budget)
    # The failed call's reservation came back: the single slot is reusable.
    assert budget.consumed_requests == 0
    complete(StaticProvider(), req(), budget)
    assert budget.consumed_requests == 1


def test_complete_rejects_unparseable_yaml():
    budget = Budget(max_requests=5, max_total_tokens=10_000)
    with pytest.raises(MalformedResponse):
        complete(StaticProvider(text="][ not yaml"), req(), budget)
    with pytest.raises(MalformedResponse):
        complete(StaticProvider(text="just a scalar"), req(), budget)
    assert budget.consumed_requests == 0


def test_complete_rejects_empty_text_and_bad_json():
    budget = Budget(max_requests=5, max_total_tokens=10_000)
    with pytest.raises(MalformedResponse):
        complete(StaticProvider(text="   "), req(response_format=ResponseFormat.TEXT), budget)
    with pytest.raises(MalformedResponse):
        complete(
            StaticProvider(text="{oops"), req(response_format=ResponseFormat.JSON), budget
        )


def test_complete_with_exhausted_budget_never_calls_provider():
    budget = Budget(max_requests=1, max_total_tokens=10_000)
    provider = StaticProvider()
    complete(provider, req(), budget)
    with pytest.raises(BudgetExceeded):
        complete(provider, req(), budget)
    assert provider.calls == 1


# --- record / replay ------------------------------------------------------


def test_record_then_replay_round_trip(tmp_path):
    request = req(images=(b"imagebytes",))
    recorded = RecordProvider(StaticProvider(), tmp_path).send(request)
    replayed = ReplayProvider(tmp_path).send(request)
    assert replayed.text == recorded.text
    assert replayed.input_tokens == recorded.input_tokens
    assert replayed.output_tokens == recorded.output_tokens


def test_recorded_fixture_file_shape(tmp_path):
    request = req()
    RecordProvider(StaticProvider(), tmp_path).send(request)
    path = tmp_path / f"{canonical_request_hash(request)}.json"
    raw = path.read_text(encoding="utf-8")
    assert raw.endswith("\n")
    data = json.loads(raw)
    assert set(data) == {"request_summary", "text", "input_tokens", "output_tokens"}
    assert data["request_summary"]["model"] == "vts-default"
    assert data["request_summary"]["response_format"] == "yaml"
    # Keys are sorted so recordings diff cleanly.
    assert raw == json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def test_replay_missing_fixture(tmp_path):
    with pytest.raises(MissingFixture):
        ReplayProvider(tmp_path).send(req())


def test_replay_corrupted_fixture(tmp_path):
    request = req()
    path = tmp_path / f"{canonical_request_hash(request)}.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(MissingFixture):
        ReplayProvider(tmp_path).send(request)


# --- live transport (stubbed HTTP) ---------------------------------------


class FakeHttp:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text or json.dumps(payload or {})

    def json(self):
        if self._payload is None:
            raise ValueError("no body")
        return self._payload


def ok_payload(text="hello"):
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 7, "completion_tokens": 3},
    }


def patched_post(monkeypatch, responses):
    import requests

    calls = []

    def fake_post(url, json=None, headers=None, timeout=None):
        calls.append({"url": url, "body": json, "headers": headers})
        result = responses[min(len(calls) - 1, len(responses) - 1)]
        if isinstance(result, Exception):
            raise result
        return result

    monkeypatch.setattr(requests, "post", fake_post)
    return calls


def test_live_success_parses_usage(monkeypatch):
    calls = patched_post(monkeypatch, [FakeHttp(200, ok_payload())])
    provider = LiveProvider(endpoint="https://example.invalid/v1", api_key="k", backoff_s=0)
    response = provider.send(req(response_format=ResponseFormat.TEXT))
    assert response.text == "hello"
    assert response.input_tokens == 7
    assert response.output_tokens == 3
    assert calls[0]["headers"]["Authorization"] == "Bearer k"
    assert calls[0]["body"]["temperature"] == 0


def test_live_retries_transient_then_succeeds(monkeypatch):
    calls = patched_post(
        monkeypatch, [FakeHttp(503, text="busy"), FakeHttp(200, ok_payload("second"))]
    )
    provider = LiveProvider(endpoint="https://example.invalid/v1", api_key="", backoff_s=0)
    assert provider.send(req(response_format=ResponseFormat.TEXT)).text == "second"
    assert len(calls) == 2


def test_live_gives_up_after_retries(monkeypatch):
    patched_post(monkeypatch, [FakeHttp(503, text="busy")])
    provider = LiveProvider(
        endpoint="https://example.invalid/v1", api_key="", retries=1, backoff_s=0
    )
    with pytest.raises(ProviderError):
        provider.send(req(response_format=ResponseFormat.TEXT))


def test_live_client_error_is_not_retried(monkeypatch):
    calls = patched_post(monkeypatch, [FakeHttp(400, text="bad request")])
    provider = LiveProvider(endpoint="https://example.invalid/v1", api_key="", backoff_s=0)
    with pytest.raises(ProviderError):
        provider.send(req(response_format=ResponseFormat.TEXT))
    assert len(calls) == 1


def test_live_malformed_body(monkeypatch):
    patched_post(monkeypatch, [FakeHttp(200, {"surprise": True})])
    provider = LiveProvider(endpoint="https://example.invalid/v1", api_key="", backoff_s=0)
    with pytest.raises(MalformedResponse):
        provider.send(req(response_format=ResponseFormat.TEXT))


def test_live_requires_endpoint():
    with pytest.raises(ConfigError):
        LiveProvider(endpoint="", api_key="")


# --- builders -------------------------------------------------------------


def test_build_provider_by_mode(tmp_path):
    replay = build_provider(ProviderConfig(mode="replay", fixtures_dir=tmp_path))
    assert isinstance(replay, ReplayProvider)
    record = build_provider(
        ProviderConfig(mode="record", fixtures_dir=tmp_path, endpoint="https://example.invalid")
    )
    assert isinstance(record, RecordProvider)
    assert isinstance(record.inner, LiveProvider)
    live = build_provider(ProviderConfig(mode="live", endpoint="https://example.invalid"))
    assert isinstance(live, LiveProvider)
    with pytest.raises(ConfigError):
        build_provider(ProviderConfig(mode="live"))


def test_build_session_defaults_model():
    session = build_session(ProviderConfig(mode="replay"), BudgetConfig())
    assert isinstance(session, ProviderSession)
    assert session.model == "vts-default"
    named = build_session(ProviderConfig(mode="replay", model="m9"), BudgetConfig())
    assert named.model == "m9"


def test_request_validation():
    with pytest.raises(ValueError):
        ModelRequest(model="", system_prompt="", user_prompt="x")
    with pytest.raises(ValueError):
        req(max_output_tokens=0)
    with pytest.raises(ValueError):
        ModelResponse(text="x", input_tokens=-1, output_tokens=0)
