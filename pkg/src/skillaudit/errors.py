"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AuditError(Exception):
    exit_code = 3


class InputError(AuditError):
    """Bad or missing input: unreadable file, schema violation, bad config."""

    exit_code = 1


class InvariantViolation(AuditError):
    """Input parsed fine but breaks a data-model invariant (e.g. corrupt labels)."""

    exit_code = 2


class StageError(AuditError):
    """Wraps a failure inside a pipeline stage so the stage name is reported."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"[{stage}] {cause}")
