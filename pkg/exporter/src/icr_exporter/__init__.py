"""Attention-dump exporter for the icr reranking engine.

Consumes the engine's layout JSON (schema version 1), runs a real
transformers checkpoint with eager attention, and writes the engine's
.icra dump format plus a spans sidecar. The two packages share only
those file formats.
"""

from .errors import (
    ExporterError,
    IoFailure,
    LayoutSchemaError,
    ModelLoadFailure,
    SelfCheckFailure,
    TokenizationDrift,
)
from .export import ExportJob, ExportReport, export_attention, load_layout
from .icra_writer import encode_icra, renormalize_rows, self_check, write_icra
from .model_runner import ModelRunner
from .tokenization import (
    DerivedSpans,
    char_diff,
    check_prefix_consistency,
    derive_spans,
)

__version__ = "0.1.0"

__all__ = [
    "ExportJob",
    "ExportReport",
    "ExporterError",
    "DerivedSpans",
    "IoFailure",
    "LayoutSchemaError",
    "ModelLoadFailure",
    "ModelRunner",
    "SelfCheckFailure",
    "TokenizationDrift",
    "char_diff",
    "check_prefix_consistency",
    "derive_spans",
    "encode_icra",
    "export_attention",
    "load_layout",
    "renormalize_rows",
    "self_check",
    "write_icra",
]
