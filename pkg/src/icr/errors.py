"""Exception types shared across the package.

Every error raised by the engine derives from IcrError so callers (and the
CLI) can catch one base class and still report a precise failure kind.
"""


class IcrError(Exception):
    """Base class for all engine errors."""


# --- prompt layout ---------------------------------------------------------

class EmptyCandidateSet(IcrError):
    pass


class DuplicateDocumentId(IcrError):
    pass


class TokenizerOffsetMismatch(IcrError):
    """A text segment maps to zero tokens."""


class NonContiguousSpan(IcrError):
    """Tokenizer interleaves segments; such tokenizers are unsupported."""


class PrefixDivergence(IcrError):
    """Shared prompt prefix tokenized differently between the two passes."""


# --- attention core --------------------------------------------------------

class RowCoverageMismatch(IcrError):
    """Stored attention rows do not match the layout's query token indices."""


class ShapeMismatch(IcrError):
    pass


class SpanMismatch(IcrError):
    pass


class EmptySpan(IcrError):
    pass


class MissingRetrieverRank(IcrError):
    pass


# --- toy backend -----------------------------------------------------------

class InvalidConfig(IcrError):
    pass


class ContextOverflow(IcrError):
    pass


class UnknownTargetDoc(IcrError):
    pass


# --- dump format -----------------------------------------------------------

class IcraError(IcrError):
    """Base class for dump format errors."""


class BadMagic(IcraError):
    pass


class UnsupportedVersion(IcraError):
    pass


class UnsupportedDtype(IcraError):
    pass


class TruncatedBody(IcraError):
    """Fewer bytes than the declared structure requires."""


class TrailingBytes(IcraError):
    pass


class NonAscendingRows(IcraError):
    pass


class RowIndexOutOfRange(IcraError):
    pass


class InvalidHeader(IcraError):
    """Structurally impossible header fields (zero layers/heads, empty context)."""


class IoFailure(IcrError):
    pass


# --- evaluation ------------------------------------------------------------

class UnknownQuery(IcrError):
    pass


class MalformedRanking(IcrError):
    """A listwise re-ranker output that does not parse to a full permutation."""


class DataFormatError(IcrError):
    """Input file violates its schema; message carries the line number."""


# --- complexity / bench ----------------------------------------------------

class InvalidWindowParams(IcrError):
    pass


class UnknownMethod(IcrError):
    pass


class BackendUnavailable(IcrError):
    pass


# --- cli / backends --------------------------------------------------------

class MissingCalibrationDump(IcrError):
    pass


class MissingQueryDump(IcrError):
    pass
