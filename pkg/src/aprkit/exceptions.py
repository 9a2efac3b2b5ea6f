"""Exception hierarchy shared by all aprkit modules."""


class AprError(Exception):
    """Base class for every error raised by aprkit."""


class RangeError(AprError, IndexError):
    """A level or grid coordinate lies outside the structure."""


class IntegrityError(AprError):
    """A sparse structure violates one of its invariants."""


class CapabilityError(AprError, ValueError):
    """The request exceeds what the implementation supports (e.g. stencil extent)."""


class FormatError(AprError, ValueError):
    """Malformed file content."""


class MagicError(FormatError):
    """Wrong magic bytes or unsupported version."""


class TruncationError(FormatError):
    """File ended before all declared payload was read."""


class SizeMismatchError(FormatError):
    """Declared dimensions disagree with the payload length."""


class ValidationFailed(FormatError):
    """A file parsed cleanly but the decoded structure is invalid."""

    def __init__(self, report):
        super().__init__(report.message)
        self.report = report
