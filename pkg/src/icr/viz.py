"""Render per-token scores as an HTML heatmap.

Positive scores shade tokens green with intensity proportional to the
score divided by the query's max positive score; negative scores use red
scaled by the most negative score. Zero stays unstyled, so an all-zero
document renders as plain text.
"""
from __future__ import annotations

import html
import json

from .errors import DataFormatError, IoFailure

_PAGE = """<!doctype html>
<html>
<head>
<meta charset="utf-8">
<title>token scores</title>
<style>
body {{ font-family: sans-serif; margin: 2em; max-width: 70em; }}
.doc {{ margin: 0.8em 0; padding: 0.6em; border: 1px solid #ddd; }}
.doc h3 {{ margin: 0 0 0.4em 0; font-size: 0.95em; }}
.tok {{ padding: 0 1px; border-radius: 2px; }}
h2 {{ border-bottom: 1px solid #aaa; padding-bottom: 0.2em; }}
.meta {{ color: #555; font-size: 0.85em; }}
</style>
</head>
<body>
<h1>Per-token re-ranking scores</h1>
{body}
</body>
</html>
"""


def _shade(score: float, max_pos: float, max_neg: float) -> str:
    if score > 0.0 and max_pos > 0.0:
        alpha = min(1.0, score / max_pos)
        return f"background: rgba(46, 160, 67, {alpha:.3f})"
    if score < 0.0 and max_neg > 0.0:
        alpha = min(1.0, -score / max_neg)
        return f"background: rgba(218, 54, 51, {alpha:.3f})"
    return ""


def _render_doc(doc_id: str, block: dict, max_pos: float, max_neg: float) -> str:
    tokens = block["tokens"]
    scores = block["scores"]
    spans = []
    for tok, sc in zip(tokens, scores):
        style = _shade(float(sc), max_pos, max_neg)
        attr = f' style="{style}"' if style else ""
        spans.append(f'<span class="tok"{attr}>{html.escape(str(tok))}</span>')
    head = html.escape(doc_id)
    meta = (
        f'doc score {block.get("score", 0.0):.6f}, '
        f'kept {block.get("kept", len(scores))}, '
        f'dropped {block.get("dropped", 0)} tokens'
    )
    return (
        f'<div class="doc"><h3>{head} <span class="meta">({meta})</span></h3>'
        f'{" ".join(spans)}</div>'
    )


def render_heatmap(score_doc: dict) -> str:
    """Build the HTML page from a token-score JSON document."""
    queries = score_doc.get("queries")
    if not isinstance(queries, list):
        raise DataFormatError("token-score JSON lacks a 'queries' list")
    sections = []
    for q in queries:
        docs = q.get("docs", {})
        all_scores = [float(s) for b in docs.values() for s in b.get("scores", [])]
        max_pos = max((s for s in all_scores if s > 0.0), default=0.0)
        max_neg = max((-s for s in all_scores if s < 0.0), default=0.0)
        parts = [f"<h2>{html.escape(str(q.get('qid', '?')))}</h2>"]
        parts.append(
            f'<p class="meta">mode: {html.escape(str(q.get("mode", "full")))}, '
            f'ranking: {html.escape(" > ".join(q.get("ranking", [])))}</p>'
        )
        for doc_id in q.get("ranking", list(docs)):
            if doc_id in docs:
                parts.append(_render_doc(doc_id, docs[doc_id], max_pos, max_neg))
        sections.append("\n".join(parts))
    return _PAGE.format(body="\n".join(sections))


def write_heatmap(scores_path, out_path) -> None:
    try:
        with open(scores_path, "r", encoding="utf-8") as fh:
            score_doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {scores_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{scores_path}: bad JSON: {exc}") from None
    page = render_heatmap(score_doc)
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(page)
    except OSError as exc:
        raise IoFailure(f"cannot write {out_path}: {exc}") from exc
