"""Exception types raised across the pipeline."""


class EcgtizeError(Exception):
    """Base class for all errors raised by this package."""


class UnreadableDocument(EcgtizeError):
    """Input file is corrupt or in an unsupported format."""


class EmptyDocument(EcgtizeError):
    """Document contains zero pages."""


class OcrUnavailable(EcgtizeError):
    """External OCR engine was requested but is not configured/installed."""


class NoBandsFound(EcgtizeError):
    """No trace bands detected on the page."""


class BandCountMismatch(EcgtizeError):
    """Fewer trace bands found than the layout expects."""


class AllColumnsEmpty(EcgtizeError):
    """Band sub-matrix contains no lit pixels in any column."""


class LengthMismatch(EcgtizeError):
    """Vector does not have the required length."""


class FlatPulse(EcgtizeError):
    """Reference pulse has zero vertical extent; amplitude calibration impossible."""


class MissingLead(EcgtizeError):
    """Extracted windows do not cover all 12 leads."""


class IncompleteRecord(EcgtizeError):
    """Record lacks samples a renderer or consumer requires."""


class DegenerateInput(EcgtizeError):
    """Metric input is degenerate (e.g. constant signal for correlation)."""


class NoBeatsDetected(EcgtizeError):
    """No heartbeats found in the signal."""


class NoRhythmAnchor(EcgtizeError):
    """No full-length lead available to anchor beat tiling."""


class BackendUnavailable(EcgtizeError):
    """Completion backend could not be reached."""


class BackendMalformedOutput(EcgtizeError):
    """Completion backend returned a frame with wrong shape or non-finite values."""


class SchemaViolation(EcgtizeError):
    """Record file does not conform to the XML/CSV schema."""


class IoFailure(EcgtizeError):
    """Filesystem write failed."""


class NoPairs(EcgtizeError):
    """No digitized/reference record pairs matched by filename stem."""


class ConfigError(EcgtizeError):
    """Invalid run configuration (bad flag value, unknown config key, ...)."""
