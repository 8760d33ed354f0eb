"""Attention sources behind a common interface.

A backend turns (layout, calibration layout) into one or two attention
slices and counts each acquisition, which is the unit the cost model
talks about: scoring a query takes exactly two acquisitions with
calibration and one without, independent of the candidate count.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

from .attention_core import AttentionSlice
from .attention_io import dump_paths, read_dump
from .errors import (
    DataFormatError,
    MissingCalibrationDump,
    MissingQueryDump,
)
from .tokenizers import fnv1a64
from .toy_backend import ToyConfig, ToyTransformer, synth_attention


def mix_seed(seed: int, query_id: str) -> int:
    """Stable per-query key derived from the run seed and the query id."""
    return ((seed << 64) | fnv1a64(query_id)) % (1 << 128)


@dataclass(frozen=True)
class LayoutView:
    """The slice of layout geometry the scorer needs.

    Dump backends substitute real-tokenizer spans from a sidecar file, so
    this view can differ from the engine-side layout it replaces.
    """

    total_len: int
    query_span: tuple[int, int]
    doc_spans: dict[str, tuple[int, int]]
    retriever_order: tuple[str, ...]
    calibration: bool
    doc_tokens: Optional[dict[str, list[str]]] = None


class AttentionBackend:
    """Base: counts acquisitions; subclasses produce the slices."""

    def __init__(self):
        self.acquisitions = 0

    def resolve_layouts(self, query_id: str, layout, cal_layout):
        """Geometry to score against; identity unless a backend overrides."""
        return layout, cal_layout

    def slices_for(
        self, layout, cal_layout, need_calibration: bool, query_id: str = ""
    ) -> tuple[AttentionSlice, Optional[AttentionSlice]]:
        raise NotImplementedError


class ToyAttentionBackend(AttentionBackend):
    """Runs the numpy toy transformer on the layout's token ids."""

    def __init__(self, config: ToyConfig = ToyConfig()):
        super().__init__()
        self.config = config
        self.model = ToyTransformer(config)

    def _slice(self, layout) -> AttentionSlice:
        self.acquisitions += 1
        return self.model.attention_slice(
            layout.token_ids, range(layout.query_span[0], layout.query_span[1])
        )

    def slices_for(self, layout, cal_layout, need_calibration, query_id=""):
        q = self._slice(layout)
        c = self._slice(cal_layout) if need_calibration else None
        return q, c


class PlantedAttentionBackend(AttentionBackend):
    """Synthetic attention with a known relevant document per query.

    The target document (by default the one the retriever ranked last)
    receives extra attention mass only in the query pass; the bias
    document (by default the retriever's top result) soaks up attention in
    both passes, mimicking the position bias calibration removes. With
    bias > boost the target wins only after calibration.
    """

    def __init__(
        self,
        seed: int = 0,
        *,
        layers: int = 2,
        heads: int = 2,
        boost: float = 6.0,
        bias: float = 40.0,
        target_rank: Optional[int] = None,
        bias_rank: int = 1,
        targets: Optional[dict[str, str]] = None,
    ):
        super().__init__()
        self.seed = seed
        self.layers = layers
        self.heads = heads
        self.boost = boost
        self.bias = bias
        self.target_rank = target_rank
        self.bias_rank = bias_rank
        self.targets = targets or {}

    def target_doc(self, query_id: str, layout) -> str:
        if query_id in self.targets:
            return self.targets[query_id]
        order = layout.retriever_order
        rank = self.target_rank if self.target_rank is not None else len(order)
        return order[min(rank, len(order)) - 1]

    def bias_doc(self, query_id: str, layout) -> Optional[str]:
        order = layout.retriever_order
        if len(order) < 2:
            return None
        doc = order[min(self.bias_rank, len(order)) - 1]
        if doc == self.target_doc(query_id, layout):
            doc = next(d for d in order if d != doc)
        return doc

    def slices_for(self, layout, cal_layout, need_calibration, query_id=""):
        key = mix_seed(self.seed, query_id)
        target = self.target_doc(query_id, layout)
        bias_doc = self.bias_doc(query_id, layout)
        self.acquisitions += 1
        q = synth_attention(
            layout,
            layers=self.layers,
            heads=self.heads,
            seed=key,
            boost_doc_id=target,
            boost=self.boost,
            bias_doc_id=bias_doc,
            bias=self.bias,
        )
        c = None
        if need_calibration:
            self.acquisitions += 1
            c = synth_attention(
                cal_layout,
                layers=self.layers,
                heads=self.heads,
                seed=key,
                boost_doc_id=None,
                bias_doc_id=bias_doc,
                bias=self.bias,
            )
        return q, c


def _load_span_sidecar(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    for part in ("query", "calibration"):
        block = data.get(part)
        if not isinstance(block, dict):
            raise DataFormatError(f"{path}: missing {part!r} block")
        for key in ("total_len", "query_span", "doc_spans"):
            if key not in block:
                raise DataFormatError(f"{path}: {part}.{key} missing")
    return data


def _view_from_sidecar(block: dict, retriever_order, calibration: bool) -> LayoutView:
    tokens = block.get("doc_tokens")
    return LayoutView(
        total_len=int(block["total_len"]),
        query_span=tuple(block["query_span"]),
        doc_spans={d: tuple(s) for d, s in block["doc_spans"].items()},
        retriever_order=tuple(retriever_order),
        calibration=calibration,
        doc_tokens={d: list(t) for d, t in tokens.items()} if tokens else None,
    )


class DumpAttentionBackend(AttentionBackend):
    """Reads pre-exported .icra files named {qid}.q.icra / {qid}.cal.icra.

    When a {qid}.spans.json sidecar exists (written by exporters whose
    tokenizer differs from the engine's), its spans replace the layout's
    for scoring.
    """

    def __init__(self, directory):
        super().__init__()
        self.directory = directory

    def resolve_layouts(self, query_id, layout, cal_layout):
        sidecar = os.path.join(self.directory, f"{query_id}.spans.json")
        if not os.path.exists(sidecar):
            return layout, cal_layout
        data = _load_span_sidecar(sidecar)
        order = layout.retriever_order
        return (
            _view_from_sidecar(data["query"], order, calibration=False),
            _view_from_sidecar(data["calibration"], order, calibration=True),
        )

    def slices_for(self, layout, cal_layout, need_calibration, query_id=""):
        q_path, c_path = dump_paths(self.directory, query_id)
        if not os.path.exists(q_path):
            raise MissingQueryDump(q_path)
        q, _name = read_dump(q_path)
        self.acquisitions += 1
        c = None
        if need_calibration:
            if not os.path.exists(c_path):
                raise MissingCalibrationDump(c_path)
            c, _name = read_dump(c_path)
            self.acquisitions += 1
        return q, c
