"""Prompt assembly and token span tracking.

Builds the re-ranking prompt (instruction, candidate documents in reversed
retriever order, query last), records where every document and the query
land in token space, and derives the content-free calibration variant that
shares the document prefix token-for-token.

Token accounting stops at the final query token: with the query placed last,
attention rows for query tokens are unaffected by anything that follows
(causality), so suffix marker text is kept in ``prompt_text`` for real-model
consumption but excluded from ``token_ids``/``total_len``. This keeps the
query span flush with the end of the scored context.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DuplicateDocumentId,
    EmptyCandidateSet,
    NonContiguousSpan,
    PrefixDivergence,
    TokenizerOffsetMismatch,
)
from .tokenizers import Tokenizer, token_strings

QA_INSTRUCTION = (
    "Here are some paragraphs. Please answer the question based on the "
    "relevant information in the paragraphs."
)
IE_INSTRUCTION = (
    "Here are some paragraphs. Please find information that are relevant "
    "to the query."
)
QUERY_LABEL = "Query: "
CALIBRATION_QUERY = "N/A"

STYLES = ("qa", "ie")
ORDER_MODES = ("retriever", "reversed", "random")


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    title: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class Query:
    text: str
    style: str = "qa"

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty")
        if self.style not in STYLES:
            raise ValueError(f"unknown query style {self.style!r}")


@dataclass(frozen=True)
class ModelProfile:
    """Static facts about the attention source: depth, width, chat markers."""

    name: str
    layers: int
    heads: int
    tokenizer: Tokenizer
    prefix_marker: str = ""
    suffix_marker: str = ""

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1:
            raise ValueError("layers and heads must be >= 1")


@dataclass(frozen=True)
class CharSegment:
    kind: str  # instruction | doc | query_label | query_text
    start: int
    end: int
    doc_id: Optional[str] = None
    number: Optional[int] = None


@dataclass(frozen=True)
class PromptLayout:
    prompt_text: str
    token_ids: tuple[int, ...]
    token_offsets: tuple[tuple[int, int], ...]
    total_len: int
    doc_spans: dict[str, tuple[int, int]]
    query_span: tuple[int, int]
    instruction_span: tuple[int, int]
    char_segments: tuple[CharSegment, ...]
    presentation_order: tuple[str, ...]
    retriever_order: tuple[str, ...]
    identifier_map: dict[int, str]
    order_mode: str
    order_seed: Optional[int]
    query_text: str
    style: str
    calibration: bool = False

    @property
    def query_rows(self) -> tuple[int, ...]:
        return tuple(range(self.query_span[0], self.query_span[1]))

    def doc_tokens(self, doc_id: str) -> list[str]:
        s, e = self.doc_spans[doc_id]
        return token_strings(self.prompt_text, self.token_offsets[s:e])

    def segment(self, kind: str) -> CharSegment:
        for seg in self.char_segments:
            if seg.kind == kind:
                return seg
        raise KeyError(kind)


def instruction_for(style: str) -> str:
    return QA_INSTRUCTION if style == "qa" else IE_INSTRUCTION


def truncate_words(text: str, max_words: Optional[int]) -> str:
    if max_words is None:
        return text
    words = text.split()
    if len(words) <= max_words:
        return text
    return " ".join(words[:max_words])


def _assign_tokens(
    offsets: Sequence[tuple[int, int]], ranges: Sequence[tuple[int, int]]
) -> list[list[int]]:
    """Map each token to at most one segment.

    A token belongs to a segment iff their character ranges intersect;
    a token straddling a boundary goes to the segment containing its
    first character.
    """
    per_segment: list[list[int]] = [[] for _ in ranges]
    for ti, (ts, te) in enumerate(offsets):
        hits = [si for si, (ss, se) in enumerate(ranges) if ts < se and te > ss]
        if not hits:
            continue
        chosen = hits[0]
        for si in hits:
            ss, se = ranges[si]
            if ss <= ts < se:
                chosen = si
                break
        per_segment[chosen].append(ti)
    return per_segment


def locate_spans(
    full_text: str,
    segment_char_ranges: Sequence[tuple[int, int]],
    tokenizer: Tokenizer,
) -> list[tuple[int, int]]:
    """Resolve character ranges to contiguous half-open token index ranges."""
    prev_end = 0
    for ss, se in segment_char_ranges:
        if not (0 <= ss <= se <= len(full_text)):
            raise ValueError(f"segment ({ss}, {se}) outside text")
        if ss < prev_end:
            raise ValueError("segments must be disjoint and ordered")
        prev_end = se
    encoded = tokenizer.encode(full_text)
    for a, b in zip(encoded.offsets, encoded.offsets[1:]):
        if b[0] < a[0]:
            raise NonContiguousSpan("tokenizer offsets are not ordered")
    assigned = _assign_tokens(encoded.offsets, segment_char_ranges)
    spans = []
    for (ss, se), tokens in zip(segment_char_ranges, assigned):
        if not tokens:
            raise TokenizerOffsetMismatch(
                f"segment chars [{ss}, {se}) maps to zero tokens"
            )
        lo, hi = tokens[0], tokens[-1]
        if tokens != list(range(lo, hi + 1)):
            raise NonContiguousSpan(
                f"segment chars [{ss}, {se}) maps to non-contiguous tokens"
            )
        spans.append((lo, hi + 1))
    return spans


def _presentation(
    docs: Sequence[Document], order_mode: str, order_seed: Optional[int]
) -> list[Document]:
    if order_mode == "retriever":
        return list(docs)
    if order_mode == "reversed":
        return list(reversed(docs))
    if order_mode == "random":
        if order_seed is None:
            raise ValueError("order_mode='random' requires order_seed")
        rng = np.random.Generator(np.random.Philox(key=order_seed))
        perm = rng.permutation(len(docs))
        return [docs[i] for i in perm]
    raise ValueError(f"unknown order_mode {order_mode!r}")


def build_prompt(
    docs: Sequence[Document],
    query: Query,
    profile: ModelProfile,
    order_mode: str = "reversed",
    *,
    order_seed: Optional[int] = None,
    render_identifiers: bool = True,
    max_doc_words: Optional[int] = None,
    span_scope: str = "block",
) -> PromptLayout:
    """Assemble the prompt and compute every span.

    ``span_scope`` selects what the per-document token span covers:
    "block" includes the "[k]" identifier and title line, "body" only the
    document text.
    """
    if not docs:
        raise EmptyCandidateSet("no candidate documents")
    seen = set()
    for d in docs:
        if d.id in seen:
            raise DuplicateDocumentId(d.id)
        seen.add(d.id)
    if span_scope not in ("block", "body"):
        raise ValueError(f"unknown span_scope {span_scope!r}")

    presented = _presentation(docs, order_mode, order_seed)

    parts: list[str] = []
    cursor = 0

    def emit(s: str) -> tuple[int, int]:
        nonlocal cursor
        parts.append(s)
        start = cursor
        cursor += len(s)
        return start, cursor

    emit(profile.prefix_marker)
    instruction_chars = emit(instruction_for(query.style))
    emit("\n\n")

    segments: list[CharSegment] = [
        CharSegment("instruction", *instruction_chars)
    ]
    doc_char_ranges: list[tuple[int, int]] = []
    for i, doc in enumerate(presented):
        number = i + 1
        block_start = cursor
        if render_identifiers:
            emit(f"[{number}] ")
        if doc.title:
            emit(doc.title)
            emit("\n")
        body = emit(truncate_words(doc.text, max_doc_words))
        block_end = cursor
        emit("\n\n")
        chars = (block_start, block_end) if span_scope == "block" else body
        doc_char_ranges.append(chars)
        segments.append(
            CharSegment("doc", chars[0], chars[1], doc_id=doc.id, number=number)
        )

    label_chars = emit(QUERY_LABEL)
    qtext_chars = emit(query.text)
    emit(profile.suffix_marker)

    segments.append(CharSegment("query_label", *label_chars))
    segments.append(CharSegment("query_text", *qtext_chars))
    prompt_text = "".join(parts)

    ranges = [instruction_chars] + doc_char_ranges + [label_chars, qtext_chars]
    spans = locate_spans(prompt_text, ranges, profile.tokenizer)
    instruction_span = spans[0]
    doc_token_spans = spans[1:-2]
    query_span = spans[-1]

    total_len = query_span[1]
    encoded = profile.tokenizer.encode(prompt_text)

    doc_spans = {
        doc.id: span for doc, span in zip(presented, doc_token_spans)
    }
    for doc_id, (s, e) in doc_spans.items():
        if e > query_span[0]:
            raise NonContiguousSpan(
                f"document {doc_id!r} tokens overlap the query region"
            )

    return PromptLayout(
        prompt_text=prompt_text,
        token_ids=tuple(encoded.ids[:total_len]),
        token_offsets=tuple(encoded.offsets[:total_len]),
        total_len=total_len,
        doc_spans=doc_spans,
        query_span=query_span,
        instruction_span=instruction_span,
        char_segments=tuple(segments),
        presentation_order=tuple(d.id for d in presented),
        retriever_order=tuple(d.id for d in docs),
        identifier_map={i + 1: d.id for i, d in enumerate(presented)},
        order_mode=order_mode,
        order_seed=order_seed,
        query_text=query.text,
        style=query.style,
    )


def build_calibration_layout(
    layout: PromptLayout, profile: ModelProfile
) -> PromptLayout:
    """Swap the query text for the content-free query, keeping the prefix.

    The returned layout shares the document prefix with ``layout`` token
    for token; any divergence is a tokenizer we cannot support and raises
    PrefixDivergence.
    """
    qtext = layout.segment("query_text")
    cal_text = (
        layout.prompt_text[: qtext.start]
        + CALIBRATION_QUERY
        + layout.prompt_text[qtext.end :]
    )

    cal_qtext_chars = (qtext.start, qtext.start + len(CALIBRATION_QUERY))
    shift = len(CALIBRATION_QUERY) - (qtext.end - qtext.start)
    segments = []
    for seg in layout.char_segments:
        if seg.kind == "query_text":
            segments.append(replace(seg, start=cal_qtext_chars[0], end=cal_qtext_chars[1]))
        elif seg.start >= qtext.end:
            segments.append(replace(seg, start=seg.start + shift, end=seg.end + shift))
        else:
            segments.append(seg)

    doc_ranges = [
        (s.start, s.end) for s in segments if s.kind == "doc"
    ]
    label = next(s for s in segments if s.kind == "query_label")
    instruction = next(s for s in segments if s.kind == "instruction")
    ranges = (
        [(instruction.start, instruction.end)]
        + doc_ranges
        + [(label.start, label.end), cal_qtext_chars]
    )
    spans = locate_spans(cal_text, ranges, profile.tokenizer)
    query_span = spans[-1]
    total_len = query_span[1]
    encoded = profile.tokenizer.encode(cal_text)

    doc_ids = [s.doc_id for s in segments if s.kind == "doc"]
    doc_spans = dict(zip(doc_ids, spans[1:-2]))

    cal = PromptLayout(
        prompt_text=cal_text,
        token_ids=tuple(encoded.ids[:total_len]),
        token_offsets=tuple(encoded.offsets[:total_len]),
        total_len=total_len,
        doc_spans=doc_spans,
        query_span=query_span,
        instruction_span=spans[0],
        char_segments=tuple(segments),
        presentation_order=layout.presentation_order,
        retriever_order=layout.retriever_order,
        identifier_map=dict(layout.identifier_map),
        order_mode=layout.order_mode,
        order_seed=layout.order_seed,
        query_text=CALIBRATION_QUERY,
        style=layout.style,
        calibration=True,
    )

    q_start = layout.query_span[0]
    if cal.query_span[0] != q_start:
        raise PrefixDivergence(
            f"query text starts at token {cal.query_span[0]} in the "
            f"calibration prompt vs {q_start} in the original"
        )
    if cal.token_ids[:q_start] != layout.token_ids[:q_start]:
        raise PrefixDivergence("shared prefix tokenizes differently")
    if cal.doc_spans != layout.doc_spans:
        raise PrefixDivergence("document token spans moved under calibration")
    return cal


def layout_to_dict(layout: PromptLayout, include_token_ids: bool = True) -> dict:
    """Serializable form of a layout (the export schema, version 1)."""
    out = {
        "schema_version": 1,
        "prompt_text": layout.prompt_text,
        "total_len": layout.total_len,
        "char_segments": [
            {
                "kind": s.kind,
                "start": s.start,
                "end": s.end,
                **({"doc_id": s.doc_id, "number": s.number} if s.kind == "doc" else {}),
            }
            for s in layout.char_segments
        ],
        "doc_spans": {d: list(span) for d, span in layout.doc_spans.items()},
        "query_span": list(layout.query_span),
        "order": {
            "mode": layout.order_mode,
            "seed": layout.order_seed,
            "presentation": list(layout.presentation_order),
            "retriever": list(layout.retriever_order),
            "identifier_map": {str(k): v for k, v in layout.identifier_map.items()},
        },
        "query_text": layout.query_text,
        "style": layout.style,
        "calibration": layout.calibration,
    }
    if include_token_ids:
        out["token_ids"] = list(layout.token_ids)
        out["token_offsets"] = [list(o) for o in layout.token_offsets]
    return out
