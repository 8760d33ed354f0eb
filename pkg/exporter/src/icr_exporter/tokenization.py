"""Span derivation against the real tokenizer.

The engine exports character ranges per prompt segment; the model's own
tokenizer is the authority on token boundaries. Token spans are re-derived
here by intersecting tokenizer offsets with those character ranges. A
token belongs to the segment containing its first character, matching the
engine's rule for its own tokenizer.

Anything the re-derivation cannot absorb (a scored segment ending up with
no tokens, the query and calibration prompts tokenizing differently over
their shared prefix, disordered offsets) raises TokenizationDrift with a
character-level diff pointing at the offending text.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import TokenizationDrift


def char_diff(expected: str, actual: str, *, pos_base: int = 0, context: int = 24) -> str:
    """Two-line diff with a caret under the first differing character.

    ``pos_base`` shifts the reported absolute position, for when the
    inputs are slices of a larger prompt.
    """
    limit = min(len(expected), len(actual))
    i = limit
    for j in range(limit):
        if expected[j] != actual[j]:
            i = j
            break
    start = max(0, i - context)
    clip = "..." if start > 0 else ""
    exp_view = clip + expected[start : i + context].replace("\n", "\\n")
    act_view = clip + actual[start : i + context].replace("\n", "\\n")
    # \n renders as two chars, so recount the caret offset on the rendered text
    caret_at = len(clip) + len(expected[start:i].replace("\n", "\\n"))
    return (
        f"first difference at char {pos_base + i}\n"
        f"  expected: {exp_view}\n"
        f"  actual:   {act_view}\n"
        f"            {' ' * caret_at}^"
    )


@dataclass(frozen=True)
class DerivedSpans:
    total_len: int
    query_span: tuple[int, int]
    doc_spans: dict[str, tuple[int, int]]
    doc_order: tuple[str, ...]


def _check_offsets(offsets, text_len: int, text: str) -> None:
    prev_start = -1
    prev_end = 0
    for s, e in offsets:
        if s >= e or e > text_len:
            raise TokenizationDrift(
                f"token offset ({s}, {e}) outside text of length {text_len}"
            )
        if s < prev_end or s <= prev_start:
            region = text[max(0, s - 20) : e + 20].replace("\n", "\\n")
            raise TokenizationDrift(
                f"token offsets overlap or go backwards near char {s}: "
                f"...{region}..."
            )
        prev_start, prev_end = s, e


def derive_spans(text: str, offsets, char_segments) -> DerivedSpans:
    """Map tokenizer offsets onto the exported character segments.

    ``char_segments`` is the layout JSON list ({kind, start, end, doc_id?});
    only segments of kind "doc" and "query_text" produce spans, and both
    must receive at least one token each.
    """
    _check_offsets(offsets, len(text), text)
    scored = [s for s in char_segments if s["kind"] in ("doc", "query_text")]
    members: dict[int, list[int]] = {id(s): [] for s in scored}
    for t, (start, _end) in enumerate(offsets):
        for seg in scored:
            if seg["start"] <= start < seg["end"]:
                members[id(seg)].append(t)
                break

    doc_spans: dict[str, tuple[int, int]] = {}
    doc_order: list[str] = []
    query_span = None
    for seg in scored:
        toks = members[id(seg)]
        label = seg.get("doc_id", seg["kind"])
        if not toks:
            seg_text = text[seg["start"] : seg["end"]]
            covering = next(
                (
                    text[s:e]
                    for s, e in offsets
                    if s < seg["end"] and e > seg["start"]
                ),
                "",
            )
            raise TokenizationDrift(
                f"segment {label!r} (chars {seg['start']}..{seg['end']}) "
                "received no tokens; the tokenizer merged it into a "
                "neighboring token\n"
                + char_diff(seg_text, covering, pos_base=seg["start"])
            )
        lo, hi = toks[0], toks[-1] + 1
        if toks != list(range(lo, hi)):
            raise TokenizationDrift(
                f"segment {label!r} maps to non-contiguous token indices {toks}"
            )
        if seg["kind"] == "doc":
            doc_spans[seg["doc_id"]] = (lo, hi)
            doc_order.append(seg["doc_id"])
        else:
            query_span = (lo, hi)

    if query_span is None:
        raise TokenizationDrift("layout has no query_text segment")
    if query_span[1] != len(offsets):
        tail = text[offsets[query_span[1]][0] :].replace("\n", "\\n")
        raise TokenizationDrift(
            f"tokens continue past the query text: ...{tail[:40]!r}"
        )
    return DerivedSpans(
        total_len=len(offsets),
        query_span=query_span,
        doc_spans=doc_spans,
        doc_order=tuple(doc_order),
    )


def check_prefix_consistency(
    q_text: str, q_offsets, c_text: str, c_offsets, prefix_chars: int
) -> int:
    """Both prompts must tokenize identically before the query text.

    Calibration subtraction aligns document token indices across the two
    passes, so any divergence inside the shared prefix corrupts scores.
    Returns the number of shared prefix tokens.
    """
    if q_text[:prefix_chars] != c_text[:prefix_chars]:
        raise TokenizationDrift(
            "prompt pair does not share its document prefix\n"
            + char_diff(q_text[:prefix_chars], c_text[:prefix_chars])
        )
    q_pre = [(s, e) for s, e in q_offsets if e <= prefix_chars]
    c_pre = [(s, e) for s, e in c_offsets if e <= prefix_chars]
    for i, (qo, co) in enumerate(zip(q_pre, c_pre)):
        if qo != co:
            raise TokenizationDrift(
                f"prefix token {i} differs between passes: "
                f"chars {qo} vs {co}\n"
                + char_diff(
                    q_text[qo[0] : qo[1]],
                    c_text[co[0] : co[1]],
                    pos_base=min(qo[0], co[0]),
                )
            )
    if len(q_pre) != len(c_pre):
        i = min(len(q_pre), len(c_pre))
        longer_text, longer = (q_text, q_pre) if len(q_pre) > len(c_pre) else (c_text, c_pre)
        s, e = longer[i]
        raise TokenizationDrift(
            f"prompt pair disagrees on prefix token count "
            f"({len(q_pre)} vs {len(c_pre)}); first extra token is "
            f"{longer_text[s:e]!r} at chars ({s}, {e})\n"
            + char_diff(
                q_text[s:prefix_chars], c_text[s:prefix_chars], pos_base=s
            )
        )
    return len(q_pre)
