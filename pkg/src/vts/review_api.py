"""FastAPI wiring for the review service.

Kept in its own module (imported only when an app is actually built) so the
core package works without the HTTP dependencies installed.  Deliberately no
``from __future__ import annotations`` here: FastAPI reads the real annotation
objects off the endpoint signatures.
"""

from pathlib import Path
from typing import Any, Dict, Union

from fastapi import Body, FastAPI, Request, Response
from fastapi.responses import JSONResponse, RedirectResponse

from vts import canonical
from vts.consolidation import trace
from vts.errors import (
    BudgetExceeded,
    ConfigError,
    InvalidAmendment,
    MalformedResponse,
    MissingFixture,
    NothingToRecalibrate,
    ObserverFailed,
    ProviderError,
    SchemaViolation,
    ServiceBusy,
    UnknownFinding,
    UnknownId,
    VtsError,
)
from vts.evidence import Finding, ResultDocument
from vts.query import owning_group, query_findings, query_from_params, sort_key
from vts.review import ReviewService, decision_to_dict

_DECISION_BODY_KEYS = {
    "action",
    "reviewer",
    "note",
    "amended_title",
    "amended_description",
    "amended_severity",
}

_STATUS_FOR = (
    (UnknownFinding, 404),
    (UnknownId, 404),
    (ServiceBusy, 409),
    (InvalidAmendment, 422),
    (SchemaViolation, 422),
    (NothingToRecalibrate, 422),
    (ConfigError, 422),
    (ProviderError, 502),
    (MissingFixture, 502),
    (MalformedResponse, 502),
    (ObserverFailed, 502),
    (BudgetExceeded, 502),
)


def _finding_payload(state: ResultDocument, finding: Finding) -> Dict[str, Any]:
    data = canonical.finding_to_dict(finding)
    data["group_id"] = owning_group(state, finding)
    return data


def build_app(
    service: ReviewService, ui_dir: Union[str, Path, None] = None
) -> FastAPI:
    app = FastAPI(title="Finding review", docs_url=None, redoc_url=None, openapi_url=None)

    @app.exception_handler(VtsError)
    def _vts_error(_request: Request, exc: VtsError) -> JSONResponse:
        code = next((c for cls, c in _STATUS_FOR if isinstance(exc, cls)), 500)
        return JSONResponse(
            status_code=code,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/api/findings")
    def list_findings(request: Request) -> Dict[str, Any]:
        state = service.state()
        params = dict(request.query_params)
        if params:
            try:
                query = query_from_params(params)
            except ValueError as exc:
                raise SchemaViolation("query", str(exc)) from None
            hits = query_findings(state, query)
            found = [(hit.finding, hit.group_id) for hit in hits]
        else:
            ordered = sorted(state.micro_findings, key=sort_key)
            found = [(f, owning_group(state, f)) for f in ordered]
        return {
            "findings": [
                dict(canonical.finding_to_dict(f), group_id=gid) for f, gid in found
            ]
        }

    @app.get("/api/findings/{finding_id}")
    def get_finding(finding_id: str) -> Dict[str, Any]:
        state = service.state()
        for finding in state.micro_findings:
            if finding.id == finding_id:
                payload = _finding_payload(state, finding)
                payload["element"] = service.element_payload(finding)
                return {"finding": payload}
        raise UnknownFinding(f"no finding with id {finding_id!r}")

    @app.get("/api/groups")
    def get_groups() -> Dict[str, Any]:
        state = service.state()
        return {"grouped_issues": canonical.grouped_issues_to_dict(state.grouped_issues)}

    @app.get("/api/trace/{record_id}")
    def get_trace(record_id: str) -> Dict[str, Any]:
        chain = trace(service.state(), record_id)
        return {"id": record_id, "hops": canonical.chain_to_dict(chain)}

    @app.get("/api/pages/{ref}/image")
    def get_page_image(ref: str) -> Response:
        return Response(content=service.page_image(ref), media_type="image/png")

    @app.get("/api/result")
    def get_result() -> Dict[str, Any]:
        return canonical.document_to_dict(service.state())

    @app.get("/api/journal")
    def get_journal() -> Dict[str, Any]:
        return {"decisions": [decision_to_dict(d) for d in service.journal]}

    @app.post("/api/findings/{finding_id}/decision")
    def post_decision(
        finding_id: str, payload: Dict[str, Any] = Body(...)
    ) -> Dict[str, Any]:
        if not isinstance(payload, dict):
            raise SchemaViolation("decision", "body must be a JSON object")
        unknown = sorted(set(payload) - _DECISION_BODY_KEYS)
        if unknown:
            raise SchemaViolation("decision", f"unknown field(s): {', '.join(unknown)}")
        for required in ("action", "reviewer"):
            if not payload.get(required):
                raise SchemaViolation("decision", f"missing field: {required}")
        decision, updated, copy = service.decide(
            finding_id,
            action=str(payload["action"]),
            reviewer=str(payload["reviewer"]),
            note=str(payload.get("note", "")),
            amended_title=str(payload.get("amended_title", "")),
            amended_description=str(payload.get("amended_description", "")),
            amended_severity=(
                str(payload["amended_severity"])
                if payload.get("amended_severity")
                else None
            ),
        )
        state = service.state()
        return {
            "decision": decision_to_dict(decision),
            "finding": _finding_payload(state, updated),
            "copy": _finding_payload(state, copy) if copy else None,
        }

    @app.post("/api/recalibrate")
    def post_recalibrate() -> Dict[str, Any]:
        new_doc = service.run_recalibration()
        return {"result": canonical.document_to_dict(new_doc)}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/")
        def index() -> RedirectResponse:
            return RedirectResponse(url="/ui/")

    return app
