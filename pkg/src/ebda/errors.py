"""Exception types shared across the toolkit.

Every error raised by the package derives from EbdaError so callers can
catch the whole family; the subclasses keep failure classes distinct for
contract tests and CLI reporting.
"""


class EbdaError(Exception):
    """Base class for all toolkit errors."""


class MalformedFileError(EbdaError):
    """A raw or container file does not match its declared layout."""


class SampleRangeError(EbdaError):
    """A sample value exceeds the range allowed by its bit depth."""


class BoundsError(EbdaError):
    """A spatial coordinate or block falls outside its plane."""


class ShapeError(EbdaError):
    """Array or plane dimensions do not match the operation's contract."""


class ParameterError(EbdaError):
    """A scalar parameter is outside its valid domain."""


class InvalidShiftError(ParameterError):
    """A bit-depth shift is negative or consumes the whole container."""


class FormatError(MalformedFileError):
    """A serialized weight or dataset file has a bad magic, version or body."""


class ModelIntegrityError(EbdaError):
    """Loaded network weights are missing layers or have wrong shapes."""


class InputTooSmallError(ShapeError):
    """Network input is below the minimum spatial size."""


class ConfigurationError(EbdaError):
    """A config file or codec template is invalid before any work starts."""


class CodecError(EbdaError):
    """Base for external codec failures; carries the failing stage."""


class CodecSpawnError(CodecError):
    """The codec executable could not be started."""


class CodecExitError(CodecError):
    """The codec process exited with a nonzero status."""


class CodecOutputMissingError(CodecError):
    """The codec ran but did not produce its declared output file."""


class NonMonotoneCurveError(EbdaError):
    """An RD curve violates bitrate/quality monotonicity."""


class NonOverlappingCurvesError(EbdaError):
    """Two RD curves share no quality (or rate) interval to integrate over."""


class InsufficientPointsError(EbdaError):
    """Too few usable RD points remain for a cubic fit."""


class UnusableSourceError(EbdaError):
    """A source sequence is too short or too small for block sampling."""
