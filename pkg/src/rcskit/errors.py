"""Exception hierarchy.

Each family maps onto one CLI exit code (see ``EXIT_CODES``).
"""

from __future__ import annotations


class RcsError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ValidationError(RcsError, ValueError):
    exit_code = 1


class SweepValidationError(ValidationError):
    """A sweep violates a structural invariant (length, finiteness, grid)."""


class ParseError(ValidationError):
    """Malformed sweep file. ``line`` is 1-based, or None when not line-specific."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CampaignValidationError(ValidationError):
    """Manifest failed validation; ``issues`` lists every problem found."""

    def __init__(self, issues: list[dict]):
        self.issues = issues
        lines = [i["message"] for i in issues]
        super().__init__(f"{len(issues)} campaign validation issue(s):\n  " + "\n  ".join(lines))


class PipelineError(RcsError):
    """Failure inside the extraction chain, tagged with the stage that raised."""

    exit_code = 2

    def __init__(self, stage: str, message: str, diagnostics: dict | None = None):
        self.stage = stage
        self.diagnostics = diagnostics or {}
        super().__init__(f"[{stage}] {message}")


class GateDesignError(PipelineError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__("gate", message, diagnostics)


class CalibrationError(PipelineError):
    def __init__(self, message: str, bins: list[int] | None = None):
        self.bins = bins or []
        super().__init__("calibrate", message, {"bins": self.bins})


class AcquisitionError(RcsError):
    """Base for instrument/network failures. ``code`` is a stable machine-readable tag."""

    exit_code = 4
    code = "acquisition"


class InstrumentConnectError(AcquisitionError):
    code = "connect"


class InstrumentTimeout(AcquisitionError):
    code = "timeout"


class InstrumentDisconnected(AcquisitionError):
    code = "disconnect"


class MalformedResponse(AcquisitionError):
    code = "malformed"

    def __init__(self, message: str, token: str | None = None):
        self.token = token
        super().__init__(message)


class PointCountMismatch(AcquisitionError):
    code = "point_count"

    def __init__(self, expected: int, received: int):
        self.expected = expected
        self.received = received
        super().__init__(f"expected {expected} points, received {received}")


EXIT_CODES = {
    "ok": 0,
    "validation": 1,
    "pipeline": 2,
    "io": 3,
    "network": 4,
}
