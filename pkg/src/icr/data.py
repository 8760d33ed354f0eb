"""Loading the three JSONL inputs: corpus, queries, candidate lists.

Formats (one JSON object per line):

    corpus      {"id": "...", "text": "...", "title": "..."?}
    queries     {"qid": "...", "text": "...", "style": "qa"|"ie"?, "task": "..."?}
    candidates  {"qid": "...", "docids": ["...", ...]}

Candidate lists are in retriever order, best first. Errors carry the file
and line number.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .errors import DataFormatError
from .prompt_layout import STYLES, Document, Query


@dataclass(frozen=True)
class QueryRecord:
    qid: str
    query: Query
    task: str = "default"


def _jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: bad JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise DataFormatError(f"{path}:{lineno}: expected an object")
            yield lineno, obj


def _need(obj: dict, key: str, path, lineno: int) -> object:
    if key not in obj:
        raise DataFormatError(f"{path}:{lineno}: missing {key!r}")
    return obj[key]


def load_corpus(path) -> dict[str, Document]:
    docs: dict[str, Document] = {}
    for lineno, obj in _jsonl(path):
        doc_id = str(_need(obj, "id", path, lineno))
        text = str(_need(obj, "text", path, lineno))
        title = obj.get("title")
        if doc_id in docs:
            raise DataFormatError(f"{path}:{lineno}: duplicate doc id {doc_id!r}")
        try:
            docs[doc_id] = Document(
                id=doc_id, text=text, title=str(title) if title is not None else None
            )
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    if not docs:
        raise DataFormatError(f"{path}: no documents")
    return docs


def load_queries(path, style_override: Optional[str] = None) -> list[QueryRecord]:
    records = []
    seen = set()
    for lineno, obj in _jsonl(path):
        qid = str(_need(obj, "qid", path, lineno))
        if qid in seen:
            raise DataFormatError(f"{path}:{lineno}: duplicate qid {qid!r}")
        seen.add(qid)
        style = style_override or obj.get("style", "qa")
        if style not in STYLES:
            raise DataFormatError(f"{path}:{lineno}: unknown style {style!r}")
        try:
            query = Query(text=str(_need(obj, "text", path, lineno)), style=style)
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
        records.append(
            QueryRecord(qid=qid, query=query, task=str(obj.get("task", "default")))
        )
    if not records:
        raise DataFormatError(f"{path}: no queries")
    return records


def load_candidates(path) -> dict[str, list[str]]:
    cands: dict[str, list[str]] = {}
    for lineno, obj in _jsonl(path):
        qid = str(_need(obj, "qid", path, lineno))
        docids = _need(obj, "docids", path, lineno)
        if not isinstance(docids, list) or not docids:
            raise DataFormatError(f"{path}:{lineno}: docids must be a non-empty list")
        if qid in cands:
            raise DataFormatError(f"{path}:{lineno}: duplicate qid {qid!r}")
        if len(set(docids)) != len(docids):
            raise DataFormatError(f"{path}:{lineno}: repeated doc id for {qid!r}")
        cands[qid] = [str(d) for d in docids]
    if not cands:
        raise DataFormatError(f"{path}: no candidate lists")
    return cands


def load_tasks(path) -> dict[str, str]:
    """Optional qid<TAB>task mapping for macro averaging."""
    tasks = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 'qid<TAB>task', got {line!r}"
                )
            tasks[parts[0]] = parts[1]
    return tasks


def docs_for_query(
    corpus: dict[str, Document], docids: list[str], qid: str
) -> list[Document]:
    missing = [d for d in docids if d not in corpus]
    if missing:
        raise DataFormatError(
            f"query {qid!r}: candidate docs not in corpus: {missing[:5]}"
        )
    return [corpus[d] for d in docids]
