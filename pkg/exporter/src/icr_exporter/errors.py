"""Typed exporter failures.

Everything raised on purpose derives from ExporterError so the CLI can
report one clean line instead of a traceback.
"""


class ExporterError(Exception):
    pass


class LayoutSchemaError(ExporterError):
    """Layout JSON missing, wrong schema version, or malformed."""


class ModelLoadFailure(ExporterError):
    """Checkpoint or tokenizer could not be loaded / is unusable."""


class TokenizationDrift(ExporterError):
    """The model tokenizer splits the prompt in a way the span contract
    cannot absorb. The message always carries a character-level diff of
    the offending region; spans are never silently corrupted."""


class SelfCheckFailure(ExporterError):
    """Extracted attention failed validation; nothing was written."""


class IoFailure(ExporterError):
    pass
