"""Human review loop: decision journal, curated state, recalibration, HTTP service.

A reviewer accepts, amends, or discards each proposed finding.  Every decision
is appended to a newline-delimited JSON journal; the curated state is always
`apply_journal(document, journal)` — a pure function — so replaying the journal
over the pristine document reproduces the current state exactly.  Recalibration
re-runs grouping and the planning tiers over the curated findings only.
"""

from __future__ import annotations

import json
import re
import threading
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any

from vts import canonical
from vts.config import OrgConfig
from vts.consolidation import FROZEN_TIMESTAMP, consolidate, render_html
from vts.errors import (
    ConfigError,
    InvalidAmendment,
    NothingToRecalibrate,
    SchemaViolation,
    ServiceBusy,
    UnknownFinding,
    UnknownId,
)
from vts.evidence import (
    PAGE_REF_RE,
    Finding,
    FindingStatus,
    PageRecord,
    ResultDocument,
    Severity,
    next_amend_id,
)
from vts.grouping import DEFAULT_TAXONOMY, CategoryTaxonomy, group_findings
from vts.npv import DEFAULT_DISCOUNT_RATE
from vts.observers import run_macro, run_meso
from vts.providers import ProviderSession

_RFC3339_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?Z$")


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class DecisionAction(str, Enum):
    ACCEPT = "accept"
    AMEND = "amend"
    DISCARD = "discard"


@dataclass(frozen=True)
class ReviewDecision:
    """One immutable journal entry; later entries supersede earlier by seq."""

    finding_id: str
    action: DecisionAction
    reviewer: str
    seq: int
    at: str
    note: str = ""
    amended_title: str = ""
    amended_description: str = ""
    amended_severity: Severity | None = None

    def __post_init__(self) -> None:
        if not self.finding_id:
            raise ValueError("decision needs a finding_id")
        if not isinstance(self.action, DecisionAction):
            raise ValueError(f"bad action: {self.action!r}")
        if not self.reviewer:
            raise ValueError("decision needs a reviewer")
        if self.seq < 1:
            raise ValueError(f"seq must be >= 1, got {self.seq}")
        if not _RFC3339_RE.match(self.at):
            raise ValueError(f"timestamp must be RFC-3339 UTC, got {self.at!r}")
        amended = self.amended_fields()
        if self.action is DecisionAction.AMEND and not amended:
            raise InvalidAmendment(
                f"amend on {self.finding_id} carries no amended fields"
            )
        if self.action is not DecisionAction.AMEND and amended:
            raise ValueError(
                f"{self.action.value} on {self.finding_id} must not carry amended fields"
            )

    def amended_fields(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.amended_title:
            out["title"] = self.amended_title
        if self.amended_description:
            out["description"] = self.amended_description
        if self.amended_severity is not None:
            out["severity"] = self.amended_severity
        return out


def decision_to_dict(decision: ReviewDecision) -> dict[str, Any]:
    data: dict[str, Any] = {
        "finding_id": decision.finding_id,
        "action": decision.action.value,
        "reviewer": decision.reviewer,
        "note": decision.note,
        "at": decision.at,
        "seq": decision.seq,
    }
    if decision.amended_title:
        data["amended_title"] = decision.amended_title
    if decision.amended_description:
        data["amended_description"] = decision.amended_description
    if decision.amended_severity is not None:
        data["amended_severity"] = decision.amended_severity.value
    return data


_DECISION_KEYS = {
    "finding_id",
    "action",
    "reviewer",
    "note",
    "at",
    "seq",
    "amended_title",
    "amended_description",
    "amended_severity",
}


def decision_from_dict(data: Mapping[str, Any], what: str = "decision") -> ReviewDecision:
    if not isinstance(data, Mapping):
        raise SchemaViolation(what, "decision must be a mapping")
    unknown = sorted(set(data) - _DECISION_KEYS)
    if unknown:
        raise SchemaViolation(what, f"unknown field(s): {', '.join(unknown)}")
    for field_name in ("finding_id", "action", "reviewer", "at", "seq"):
        if field_name not in data:
            raise SchemaViolation(what, f"missing field: {field_name}")
    try:
        action = DecisionAction(str(data["action"]))
    except ValueError:
        raise SchemaViolation(what, f"bad action: {data['action']!r}") from None
    severity = None
    if data.get("amended_severity") is not None:
        try:
            severity = Severity(str(data["amended_severity"]))
        except ValueError:
            raise SchemaViolation(
                what, f"bad amended_severity: {data['amended_severity']!r}"
            ) from None
    if not isinstance(data["seq"], int) or isinstance(data["seq"], bool):
        raise SchemaViolation(what, f"seq must be an integer, got {data['seq']!r}")
    try:
        return ReviewDecision(
            finding_id=str(data["finding_id"]),
            action=action,
            reviewer=str(data["reviewer"]),
            note=str(data.get("note", "")),
            at=str(data["at"]),
            seq=data["seq"],
            amended_title=str(data.get("amended_title", "")),
            amended_description=str(data.get("amended_description", "")),
            amended_severity=severity,
        )
    except InvalidAmendment:
        raise
    except ValueError as exc:
        raise SchemaViolation(what, str(exc)) from None


def decision_to_line(decision: ReviewDecision) -> str:
    """One compact JSON line, keys sorted, as stored in the journal."""
    return json.dumps(
        decision_to_dict(decision), sort_keys=True, ensure_ascii=False, separators=(",", ":")
    )


def read_journal(path: str | Path) -> tuple[ReviewDecision, ...]:
    """Parse the newline-delimited journal; seq must be strictly increasing."""
    path = Path(path)
    if not path.is_file():
        return ()
    decisions: list[ReviewDecision] = []
    last_seq = 0
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path.name}:{lineno}"
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(where, f"not valid JSON: {exc}") from None
        decision = decision_from_dict(data, what=where)
        if decision.seq <= last_seq:
            raise SchemaViolation(
                where, f"seq {decision.seq} does not increase (previous {last_seq})"
            )
        last_seq = decision.seq
        decisions.append(decision)
    return tuple(decisions)


def append_decision(path: str | Path, decision: ReviewDecision) -> None:
    """Append one line; the journal file is only ever opened for append."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8", newline="\n") as handle:
        handle.write(decision_to_line(decision) + "\n")
        handle.flush()


def _check_order(decisions: Sequence[ReviewDecision]) -> None:
    last = 0
    for d in decisions:
        if d.seq <= last:
            raise SchemaViolation(
                "journal", f"seq {d.seq} does not increase (previous {last})"
            )
        last = d.seq


def apply_journal(
    doc: ResultDocument, decisions: Sequence[ReviewDecision]
) -> ResultDocument:
    """Pure curated state: the document with every decision applied in order.

    Per finding, the decision with the highest seq wins.  An amend marks the
    original ``amended`` and adds an accepted copy under the next free ``-aN``
    id; countermanded amendments still burn their number so copy ids mirror
    the journal history.  Decisions whose finding id is absent from this
    document (for example after a recalibration dropped it) are skipped.
    """
    _check_order(decisions)
    base_ids = {f.id for f in doc.micro_findings}
    effective: dict[str, ReviewDecision] = {}
    copy_ids: dict[int, str] = {}
    taken = set(base_ids)
    for d in decisions:
        if d.finding_id not in base_ids:
            continue
        if d.action is DecisionAction.AMEND:
            copy_id = next_amend_id(d.finding_id, taken)
            taken.add(copy_id)
            copy_ids[d.seq] = copy_id
        effective[d.finding_id] = d

    out: list[Finding] = []
    for finding in doc.micro_findings:
        decision = effective.get(finding.id)
        if decision is None:
            out.append(finding)
            continue
        if decision.action is DecisionAction.ACCEPT:
            out.append(replace(finding, status=FindingStatus.ACCEPTED))
        elif decision.action is DecisionAction.DISCARD:
            out.append(replace(finding, status=FindingStatus.DISCARDED))
        else:
            out.append(replace(finding, status=FindingStatus.AMENDED))
            out.append(
                replace(
                    finding,
                    id=copy_ids[decision.seq],
                    status=FindingStatus.ACCEPTED,
                    title=decision.amended_title or finding.title,
                    description=decision.amended_description or finding.description,
                    severity=decision.amended_severity or finding.severity,
                )
            )
    return replace(doc, micro_findings=tuple(out))


def curated_findings(state: ResultDocument) -> list[Finding]:
    """The findings recalibration runs over: explicitly accepted ones only.

    Amended originals are superseded by their accepted copies; untouched
    (proposed) and discarded findings are excluded.
    """
    return [f for f in state.micro_findings if f.status is FindingStatus.ACCEPTED]


def recalibrate(
    doc: ResultDocument,
    decisions: Sequence[ReviewDecision],
    pages: Sequence[PageRecord],
    session: ProviderSession,
    org: OrgConfig,
    *,
    taxonomy: CategoryTaxonomy = DEFAULT_TAXONOMY,
    discount_rate: float = DEFAULT_DISCOUNT_RATE,
    prompts_dir: str | Path | None = None,
    history: Sequence[ResultDocument] = (),
    generated_at: str = FROZEN_TIMESTAMP,
) -> ResultDocument:
    """Re-run grouping and both planning tiers over the curated findings.

    Discarded findings — and any lever or step whose evidence rested solely on
    them — are absent from the returned document.  Links to absent findings are
    pruned before regrouping.
    """
    state = apply_journal(doc, decisions)
    curated = curated_findings(state)
    if not curated:
        raise NothingToRecalibrate("no accepted findings to recalibrate over")
    kept = {f.id for f in curated}
    pruned = [
        replace(f, links=tuple(l for l in f.links if l in kept)) for f in curated
    ]
    grouping = group_findings(pruned, taxonomy)
    meso = run_meso(grouping.groups, grouping.findings, org, session, prompts_dir)
    macro = run_macro(
        meso.records,
        history=history,
        org=org,
        session=session,
        discount_rate=discount_rate,
        prompts_dir=prompts_dir,
    )
    return consolidate(
        grouping.findings,
        grouping.groups,
        meso.records,
        macro.records,
        pages,
        source=doc.source,
        generated_at=generated_at,
    )


class ReviewService:
    """Serializes mutations over one document + journal; reads are lock-free."""

    def __init__(
        self,
        document: ResultDocument,
        journal_path: str | Path,
        *,
        pages: Sequence[PageRecord] | None = None,
        pages_dir: str | Path | None = None,
        doc_path: str | Path | None = None,
        session_factory: Callable[[], ProviderSession] | None = None,
        org: OrgConfig | None = None,
        taxonomy: CategoryTaxonomy = DEFAULT_TAXONOMY,
        discount_rate: float = DEFAULT_DISCOUNT_RATE,
        prompts_dir: str | Path | None = None,
        clock: Callable[[], str] = utc_now,
        generated_at: str = FROZEN_TIMESTAMP,
    ) -> None:
        self.document = document
        self.journal_path = Path(journal_path)
        self.pages = list(pages) if pages else None
        self.pages_dir = Path(pages_dir) if pages_dir else None
        self.doc_path = Path(doc_path) if doc_path else None
        self.session_factory = session_factory
        self.org = org or OrgConfig()
        self.taxonomy = taxonomy
        self.discount_rate = discount_rate
        self.prompts_dir = prompts_dir
        self.clock = clock
        self.generated_at = generated_at
        self._journal: list[ReviewDecision] = list(read_journal(self.journal_path))
        self._mutation = threading.Lock()

    # -- reads ---------------------------------------------------------------

    @property
    def journal(self) -> tuple[ReviewDecision, ...]:
        return tuple(self._journal)

    def state(self) -> ResultDocument:
        return apply_journal(self.document, self.journal)

    def page_image(self, ref: str) -> bytes:
        if not PAGE_REF_RE.match(ref):
            raise UnknownId(f"bad page reference: {ref!r}")
        if self.pages_dir is None:
            raise UnknownId("no page images available")
        path = self.pages_dir / f"page_{ref}.png"
        if not path.is_file():
            raise UnknownId(f"no image for page {ref}")
        return path.read_bytes()

    def element_payload(self, finding: Finding) -> dict[str, Any] | None:
        if not self.pages:
            return None
        for page in self.pages:
            if page.page == finding.page_reference:
                element = page.element(finding.element_id)
                if element is None:
                    return None
                return {
                    "id": element.id,
                    "kind": element.kind.value,
                    "bbox": element.bbox.as_list(),
                    "text": element.payload,
                }
        return None

    # -- mutations -----------------------------------------------------------

    def decide(
        self,
        finding_id: str,
        action: str,
        reviewer: str,
        *,
        note: str = "",
        amended_title: str = "",
        amended_description: str = "",
        amended_severity: str | None = None,
    ) -> tuple[ReviewDecision, Finding, Finding | None]:
        """Validate, append to the journal, and return (decision, finding, copy)."""
        if not self._mutation.acquire(blocking=False):
            raise ServiceBusy("another mutation is in progress")
        try:
            if finding_id not in {f.id for f in self.document.micro_findings}:
                raise UnknownFinding(f"no finding with id {finding_id!r}")
            try:
                action_value = DecisionAction(action)
            except ValueError:
                raise SchemaViolation("decision", f"bad action: {action!r}") from None
            severity = None
            if amended_severity:
                try:
                    severity = Severity(amended_severity)
                except ValueError:
                    raise SchemaViolation(
                        "decision", f"bad amended_severity: {amended_severity!r}"
                    ) from None
            seq = (self._journal[-1].seq + 1) if self._journal else 1
            try:
                decision = ReviewDecision(
                    finding_id=finding_id,
                    action=action_value,
                    reviewer=reviewer,
                    note=note,
                    at=self.clock(),
                    seq=seq,
                    amended_title=amended_title,
                    amended_description=amended_description,
                    amended_severity=severity,
                )
            except InvalidAmendment:
                raise
            except ValueError as exc:
                raise SchemaViolation("decision", str(exc)) from None
            append_decision(self.journal_path, decision)
            self._journal.append(decision)
        finally:
            self._mutation.release()

        state = self.state()
        updated = next(f for f in state.micro_findings if f.id == finding_id)
        copy = None
        if decision.action is DecisionAction.AMEND:
            copy_id = f"{finding_id}-a"
            candidates = [
                f
                for f in state.micro_findings
                if f.id.startswith(copy_id) and f.status is FindingStatus.ACCEPTED
            ]
            copy = candidates[-1] if candidates else None
        return decision, updated, copy

    def run_recalibration(self) -> ResultDocument:
        """Exclusive: rebuild the document from the curated findings."""
        if not self._mutation.acquire(blocking=False):
            raise ServiceBusy("another mutation is in progress")
        try:
            if not self.pages:
                raise ConfigError(
                    "recalibration needs the page records; start the service "
                    "with a pages directory"
                )
            if self.session_factory is None:
                raise ConfigError(
                    "recalibration needs a model provider; start the service "
                    "with provider settings"
                )
            session = self.session_factory()
            new_doc = recalibrate(
                self.document,
                self.journal,
                self.pages,
                session,
                self.org,
                taxonomy=self.taxonomy,
                discount_rate=self.discount_rate,
                prompts_dir=self.prompts_dir,
                generated_at=self.generated_at,
            )
            self.document = new_doc
            if self.doc_path is not None:
                self.doc_path.write_text(
                    canonical.canonical_serialize(new_doc), encoding="utf-8", newline="\n"
                )
                html_path = self.doc_path.with_suffix(".html")
                html_path.write_text(
                    render_html(new_doc, self.pages), encoding="utf-8", newline="\n"
                )
            return new_doc
        finally:
            self._mutation.release()


# -- HTTP layer ---------------------------------------------------------------


def create_app(service: ReviewService, ui_dir: str | Path | None = None):
    """Build the HTTP app over a service (needs the serving dependencies)."""
    from vts.review_api import build_app

    return build_app(service, ui_dir=ui_dir)


def serve(
    document: ResultDocument,
    pages: Sequence[PageRecord] | None,
    journal_path: str | Path,
    port: int,
    *,
    pages_dir: str | Path | None = None,
    doc_path: str | Path | None = None,
    session_factory: Callable[[], ProviderSession] | None = None,
    org: OrgConfig | None = None,
    taxonomy: CategoryTaxonomy = DEFAULT_TAXONOMY,
    discount_rate: float = DEFAULT_DISCOUNT_RATE,
    prompts_dir: str | Path | None = None,
    ui_dir: str | Path | None = None,
    host: str = "127.0.0.1",
) -> None:
    """Run the review service until interrupted."""
    import uvicorn

    service = ReviewService(
        document,
        journal_path,
        pages=pages,
        pages_dir=pages_dir,
        doc_path=doc_path,
        session_factory=session_factory,
        org=org,
        taxonomy=taxonomy,
        discount_rate=discount_rate,
        prompts_dir=prompts_dir,
    )
    app = create_app(service, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
