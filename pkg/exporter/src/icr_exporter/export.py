"""Turn exported prompt layouts into .icra attention dumps.

Per query this reads `{qid}.layout.json` plus its `{qid}.cal.layout.json`
sibling, runs one forward pass per prompt, extracts the query-token rows,
and writes `{qid}.q.icra`, `{qid}.cal.icra` and a `{qid}.spans.json`
sidecar carrying the real-tokenizer spans. Scoring stays entirely on the
consumer side; nothing here aggregates or calibrates.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import IoFailure, LayoutSchemaError, TokenizationDrift
from .icra_writer import write_icra
from .model_runner import ModelRunner
from .tokenization import check_prefix_consistency, derive_spans

LAYOUT_SUFFIX = ".layout.json"
CAL_SUFFIX = ".cal.layout.json"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExportJob:
    model_id: str
    layout_paths: tuple[str, ...]
    out_dir: str
    precision: str = "float32"
    device: str = "cpu"
    row_sum_tol: float = 1e-3
    max_correction: float = 0.01


@dataclass
class ExportReport:
    model_id: str
    written: list[str] = field(default_factory=list)
    queries: list[str] = field(default_factory=list)


def load_layout(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise LayoutSchemaError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise LayoutSchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or data.get("schema_version") != SCHEMA_VERSION:
        raise LayoutSchemaError(
            f"{path}: expected layout schema_version {SCHEMA_VERSION}, "
            f"got {data.get('schema_version') if isinstance(data, dict) else data!r}"
        )
    for key in ("prompt_text", "char_segments", "order", "query_text"):
        if key not in data:
            raise LayoutSchemaError(f"{path}: missing {key!r}")
    return data


def _query_pairs(layout_paths) -> list[tuple[str, str, str]]:
    """(qid, query layout path, calibration layout path) per query."""
    pairs = []
    for path in layout_paths:
        name = os.path.basename(path)
        if name.endswith(CAL_SUFFIX):
            continue  # picked up via its query-side sibling
        if not name.endswith(LAYOUT_SUFFIX):
            raise LayoutSchemaError(f"{path}: expected a *{LAYOUT_SUFFIX} file")
        qid = name[: -len(LAYOUT_SUFFIX)]
        cal = os.path.join(os.path.dirname(path), f"{qid}{CAL_SUFFIX}")
        if not os.path.exists(cal):
            raise LayoutSchemaError(f"{path}: calibration sibling {cal} missing")
        pairs.append((qid, path, cal))
    if not pairs:
        raise LayoutSchemaError("no query layout files given")
    return pairs


def _query_char_end(layout: dict, path: str) -> int:
    for seg in layout["char_segments"]:
        if seg["kind"] == "query_text":
            return seg["end"]
    raise LayoutSchemaError(f"{path}: no query_text segment")


def _prepare_pass(runner: ModelRunner, layout: dict, path: str):
    """Tokenize the prompt truncated at the query end and derive spans."""
    end = _query_char_end(layout, path)
    text = layout["prompt_text"][:end]
    ids, offsets = runner.encode(text)
    spans = derive_spans(text, offsets, layout["char_segments"])
    return text, ids, offsets, spans


def _spans_block(spans, text=None, offsets=None) -> dict:
    block = {
        "total_len": spans.total_len,
        "query_span": list(spans.query_span),
        "doc_spans": {d: list(s) for d, s in spans.doc_spans.items()},
    }
    if text is not None:
        block["doc_tokens"] = {
            d: [text[offsets[t][0] : offsets[t][1]] for t in range(lo, hi)]
            for d, (lo, hi) in spans.doc_spans.items()
        }
    return block


def export_attention(job: ExportJob) -> ExportReport:
    runner = ModelRunner(job.model_id, device=job.device, precision=job.precision)
    try:
        os.makedirs(job.out_dir, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {job.out_dir}: {exc}") from exc
    report = ExportReport(model_id=job.model_id)

    for qid, q_path, c_path in _query_pairs(job.layout_paths):
        q_layout = load_layout(q_path)
        c_layout = load_layout(c_path)
        if not c_layout.get("calibration"):
            raise LayoutSchemaError(f"{c_path}: not a calibration layout")

        q_text, q_ids, q_offsets, q_spans = _prepare_pass(runner, q_layout, q_path)
        c_text, c_ids, c_offsets, c_spans = _prepare_pass(runner, c_layout, c_path)

        prefix_chars = min(_q_start(q_layout, q_path), _q_start(c_layout, c_path))
        check_prefix_consistency(q_text, q_offsets, c_text, c_offsets, prefix_chars)
        if q_spans.doc_spans != c_spans.doc_spans:
            raise TokenizationDrift(
                f"{qid}: document spans differ between passes: "
                f"{q_spans.doc_spans} vs {c_spans.doc_spans}"
            )

        for spans, ids, suffix in (
            (q_spans, q_ids, "q"),
            (c_spans, c_ids, "cal"),
        ):
            attn = runner.attentions(ids)
            rows = range(*spans.query_span)
            sliced = attn[:, :, list(rows), :]
            out_path = os.path.join(job.out_dir, f"{qid}.{suffix}.icra")
            write_icra(
                out_path,
                job.model_id,
                sliced,
                rows,
                max_correction=job.max_correction,
                tol=job.row_sum_tol,
            )
            report.written.append(out_path)

        sidecar = {
            "query": _spans_block(q_spans, q_text, q_offsets),
            "calibration": _spans_block(c_spans),
        }
        side_path = os.path.join(job.out_dir, f"{qid}.spans.json")
        try:
            with open(side_path, "w", encoding="utf-8") as fh:
                json.dump(sidecar, fh, indent=1)
                fh.write("\n")
        except OSError as exc:
            raise IoFailure(f"cannot write {side_path}: {exc}") from exc
        report.written.append(side_path)
        report.queries.append(qid)
    return report


def _q_start(layout: dict, path: str) -> int:
    for seg in layout["char_segments"]:
        if seg["kind"] == "query_text":
            return seg["start"]
    raise LayoutSchemaError(f"{path}: no query_text segment")
