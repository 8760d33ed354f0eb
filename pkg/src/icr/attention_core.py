"""Turning attention weights into document scores and rankings.

The pipeline: aggregate the attention each document token receives from the
query tokens (averaged over query tokens, summed over layers and heads),
subtract the same aggregate computed with the content-free calibration
query, drop abnormally negative outlier tokens per document, and sum what
remains into one score per document.

All accumulation happens in float64 regardless of the slice dtype, in a
fixed order (layer-major, head-minor, ascending row), so identical inputs
reproduce identical scores bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    EmptySpan,
    MissingRetrieverRank,
    RowCoverageMismatch,
    ShapeMismatch,
    SpanMismatch,
)

MODES = ("full", "no_calibration", "last_token_only", "neither")

ROW_SUM_TOL = 1e-4


@dataclass(frozen=True)
class AttentionSlice:
    """Attention rows for a chosen set of token positions.

    ``values`` has shape (layers, heads, num_rows, context_len); row ``r``
    holds the attention paid by token ``row_indices[r]`` to every earlier
    position. Structural invariants are enforced here; content checks
    (row-stochasticity, causality) live in ``attention_io.validate_dump``
    so that damaged dumps can still be loaded and reported on.
    """

    layers: int
    heads: int
    context_len: int
    row_indices: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.context_len < 1:
            raise ShapeMismatch("layers, heads and context_len must be >= 1")
        expected = (self.layers, self.heads, len(self.row_indices), self.context_len)
        if self.values.shape != expected:
            raise ShapeMismatch(
                f"values shape {self.values.shape} != expected {expected}"
            )
        prev = -1
        for k in self.row_indices:
            if k <= prev:
                raise ShapeMismatch("row_indices must be strictly ascending")
            prev = k
        if prev >= self.context_len:
            raise ShapeMismatch("row index beyond context length")

    @property
    def num_rows(self) -> int:
        return len(self.row_indices)

    @classmethod
    def from_full(cls, full: np.ndarray, row_indices: Sequence[int]) -> "AttentionSlice":
        """Slice query rows out of a full (L, H, T, T) attention tensor."""
        if full.ndim != 4 or full.shape[2] != full.shape[3]:
            raise ShapeMismatch(f"expected (L, H, T, T), got {full.shape}")
        layers, heads, ctx, _ = full.shape
        rows = tuple(int(k) for k in row_indices)
        return cls(
            layers=layers,
            heads=heads,
            context_len=ctx,
            row_indices=rows,
            values=np.ascontiguousarray(full[:, :, rows, :]),
        )

    def restrict_to_rows(self, row_indices: Sequence[int]) -> "AttentionSlice":
        keep = tuple(int(k) for k in row_indices)
        positions = []
        for k in keep:
            if k not in self.row_indices:
                raise RowCoverageMismatch(f"row {k} not stored in slice")
            positions.append(self.row_indices.index(k))
        return AttentionSlice(
            layers=self.layers,
            heads=self.heads,
            context_len=self.context_len,
            row_indices=keep,
            values=np.ascontiguousarray(self.values[:, :, positions, :]),
        )

    def check_content(self, row_sum_tol: float = ROW_SUM_TOL) -> None:
        """Assert causality and row-stochasticity (used by tests/backends)."""
        if not np.all(np.isfinite(self.values)):
            raise ShapeMismatch("non-finite attention values")
        v64 = self.values.astype(np.float64)
        for r, k in enumerate(self.row_indices):
            tail = v64[:, :, r, k + 1 :]
            if tail.size and np.any(tail != 0.0):
                raise ShapeMismatch(f"nonzero attention above the diagonal in row {k}")
            sums = v64[:, :, r, : k + 1].sum(axis=-1)
            if np.any(np.abs(sums - 1.0) > row_sum_tol):
                raise ShapeMismatch(f"row {k} does not sum to 1")


@dataclass(frozen=True)
class TokenScoreTable:
    """Per-token scores grouped by document, aligned to each doc span."""

    pass_tag: str  # query | calibration | calibrated
    scores: dict[str, np.ndarray]

    def __post_init__(self):
        for doc_id, vec in self.scores.items():
            if not np.all(np.isfinite(vec)):
                raise SpanMismatch(f"non-finite token scores for {doc_id!r}")


@dataclass(frozen=True)
class DocumentScore:
    doc_id: str
    score: float
    kept_token_count: int
    dropped_token_count: int


@dataclass(frozen=True)
class RankedDoc:
    doc_id: str
    score: float
    retriever_rank: int


@dataclass(frozen=True)
class Ranking:
    entries: tuple[RankedDoc, ...]

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]


def aggregate_rows(attn: AttentionSlice) -> np.ndarray:
    """Per-position attention mass from the stored rows.

    Returns a float64 vector over [0, context_len): the sum over layers,
    heads and rows of the attention paid to each position, divided by the
    number of rows.
    """
    acc = np.zeros(attn.context_len, dtype=np.float64)
    v = attn.values
    for l in range(attn.layers):
        for h in range(attn.heads):
            for r in range(attn.num_rows):
                acc += v[l, h, r].astype(np.float64)
    return acc / attn.num_rows


def aggregate_query_attention(attn: AttentionSlice, layout) -> TokenScoreTable:
    """Average-over-query-tokens attention received by each document token."""
    expected_rows = tuple(range(layout.query_span[0], layout.query_span[1]))
    if attn.row_indices != expected_rows:
        raise RowCoverageMismatch(
            f"slice rows {attn.row_indices[:3]}..{attn.row_indices[-1:]} do not "
            f"cover query span {layout.query_span}"
        )
    if attn.context_len != layout.total_len:
        raise ShapeMismatch(
            f"slice context {attn.context_len} != layout length {layout.total_len}"
        )
    per_token = aggregate_rows(attn)
    tag = "calibration" if getattr(layout, "calibration", False) else "query"
    return TokenScoreTable(
        pass_tag=tag,
        scores={d: per_token[s:e].copy() for d, (s, e) in layout.doc_spans.items()},
    )


def calibrate(
    query_scores: TokenScoreTable, cal_scores: TokenScoreTable
) -> TokenScoreTable:
    """Subtract content-free-query scores from actual-query scores."""
    if set(query_scores.scores) != set(cal_scores.scores):
        raise SpanMismatch("document sets differ between the two passes")
    out = {}
    for doc_id, q in query_scores.scores.items():
        c = cal_scores.scores[doc_id]
        if q.shape != c.shape:
            raise SpanMismatch(
                f"span length for {doc_id!r} differs: {q.shape} vs {c.shape}"
            )
        out[doc_id] = q - c
    return TokenScoreTable(pass_tag="calibrated", scores=out)


def filter_and_sum(scores: np.ndarray, doc_id: str = "") -> DocumentScore:
    """Drop abnormally negative outlier tokens, then sum.

    A token is kept iff its score exceeds mean - 2 * stddev (population
    stddev over the document's own tokens). When the stddev is exactly
    zero (all tokens equal, including single-token documents) everything
    is kept, since strict comparison would empty the document.
    """
    vec = np.asarray(scores, dtype=np.float64)
    if vec.size == 0:
        raise EmptySpan(f"document {doc_id!r} has no token scores")
    m = vec.mean()
    sigma = vec.std()
    if sigma == 0.0:
        kept = vec
    else:
        kept = vec[vec > m - 2.0 * sigma]
    return DocumentScore(
        doc_id=doc_id,
        score=float(kept.sum()),
        kept_token_count=int(kept.size),
        dropped_token_count=int(vec.size - kept.size),
    )


def rank(
    doc_scores: Sequence[DocumentScore], retriever_ranks: Mapping[str, int]
) -> Ranking:
    """Descending by score; ties fall back to the retriever's order."""
    for ds in doc_scores:
        if ds.doc_id not in retriever_ranks:
            raise MissingRetrieverRank(ds.doc_id)
    ordered = sorted(
        doc_scores, key=lambda ds: (-ds.score, retriever_ranks[ds.doc_id])
    )
    return Ranking(
        entries=tuple(
            RankedDoc(ds.doc_id, ds.score, retriever_ranks[ds.doc_id])
            for ds in ordered
        )
    )


@dataclass(frozen=True)
class ScoredQuery:
    ranking: Ranking
    token_scores: TokenScoreTable
    doc_scores: tuple[DocumentScore, ...]


def _retriever_ranks(layout) -> dict[str, int]:
    return {doc_id: i + 1 for i, doc_id in enumerate(layout.retriever_order)}


def _last_row_view(attn: AttentionSlice, layout):
    """Restrict a slice and its layout view to the final query token."""
    last = layout.query_span[1] - 1
    restricted = attn.restrict_to_rows([last])

    class _View:
        query_span = (last, last + 1)
        total_len = layout.total_len
        doc_spans = layout.doc_spans
        retriever_order = layout.retriever_order
        calibration = getattr(layout, "calibration", False)

    return restricted, _View()


def score_documents_detailed(
    layout,
    cal_layout,
    attn_query: AttentionSlice,
    attn_cal: Optional[AttentionSlice],
    mode: str = "full",
) -> ScoredQuery:
    """Full pipeline with all intermediate scores retained.

    Modes: "full" is the complete pipeline; "no_calibration" skips the
    content-free pass (outlier filtering then applies to raw scores);
    "last_token_only" aggregates from the final query token only;
    "neither" is last-token, uncalibrated, unfiltered attention sorting.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    ranks = _retriever_ranks(layout)

    if mode in ("last_token_only", "neither"):
        attn_query, layout = _last_row_view(attn_query, layout)
        if mode == "last_token_only":
            attn_cal, cal_layout = _last_row_view(attn_cal, cal_layout)

    q_table = aggregate_query_attention(attn_query, layout)

    if mode in ("full", "last_token_only"):
        if attn_cal is None:
            raise SpanMismatch(f"mode {mode!r} needs a calibration slice")
        c_table = aggregate_query_attention(attn_cal, cal_layout)
        table = calibrate(q_table, c_table)
    else:
        table = q_table

    if mode == "neither":
        # attention sorting: plain sum, no outlier filtering
        doc_scores = tuple(
            DocumentScore(d, float(v.sum()), int(v.size), 0)
            for d, v in table.scores.items()
        )
    else:
        doc_scores = tuple(
            filter_and_sum(v, d) for d, v in table.scores.items()
        )
    return ScoredQuery(
        ranking=rank(doc_scores, ranks),
        token_scores=table,
        doc_scores=doc_scores,
    )


def score_documents(
    layout,
    cal_layout,
    attn_query: AttentionSlice,
    attn_cal: Optional[AttentionSlice],
    mode: str = "full",
) -> Ranking:
    return score_documents_detailed(layout, cal_layout, attn_query, attn_cal, mode).ranking
