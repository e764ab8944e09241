"""Exception types shared across the pipeline."""

from __future__ import annotations


class VtsError(Exception):
    """Base class for all pipeline errors."""


class SchemaViolation(VtsError):
    """A persisted or parsed record does not conform to the schema."""

    def __init__(self, source: str, detail: str):
        self.source = source
        self.detail = detail
        super().__init__(f"{source}: {detail}")


class InvalidDocument(VtsError):
    """A structurally invalid document was refused; carries the report."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"invalid document: {report.summary()}")


class BudgetExceeded(VtsError):
    """The request or token budget is exhausted; the caller must stop."""


class ProviderError(VtsError):
    """The model endpoint failed after retries."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"provider error {status}: {body[:200]}")


class MalformedResponse(VtsError):
    """The response text does not parse as the requested format."""


class MissingFixture(VtsError):
    """Replay mode has no recorded fixture for this request hash."""

    def __init__(self, request_hash: str):
        self.request_hash = request_hash
        super().__init__(f"no fixture recorded for request {request_hash}")


class RasterizerUnavailable(VtsError):
    """The configured rasterizer tool cannot be invoked."""


class CorruptPdf(VtsError):
    """The input file is not a readable PDF or has no pages."""


class PageLimitExceeded(VtsError):
    """Documents over 999 pages cannot be addressed by 3-digit page refs."""


class ExtractionFailed(VtsError):
    """Page extraction produced unusable output twice in a row."""

    def __init__(self, page: str, detail: str = ""):
        self.page = page
        self.detail = detail
        super().__init__(f"extraction failed for page {page}" + (f": {detail}" if detail else ""))


class ObserverFailed(VtsError):
    """An observer call produced malformed output twice in a row."""

    def __init__(self, stage: str, detail: str = ""):
        self.stage = stage
        self.detail = detail
        super().__init__(f"observer failed at {stage}" + (f": {detail}" if detail else ""))


class MissingPlaceholder(VtsError):
    """A prompt template placeholder has no value in the render context."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing template placeholder: {name}")


class ConsolidationFailed(VtsError):
    """The assembled document failed validation; carries the report."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"consolidation failed: {report.summary()}")


class UnknownId(VtsError):
    """The requested id does not exist in the document."""


class UnknownFinding(VtsError):
    """The decision targets a finding id that does not exist."""


class InvalidAmendment(VtsError):
    """An amend decision carries no amended fields."""


class NothingToRecalibrate(VtsError):
    """Every micro finding has been discarded (or none was curated)."""


class ServiceBusy(VtsError):
    """Another mutation (decision or recalibration) is in progress."""


class ConfigError(VtsError):
    """The configuration file is malformed or has unknown keys."""
