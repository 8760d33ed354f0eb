import random

import pytest

from icr.errors import (
    DuplicateDocumentId,
    EmptyCandidateSet,
    NonContiguousSpan,
    PrefixDivergence,
    TokenizerOffsetMismatch,
)
from icr.prompt_layout import (
    CALIBRATION_QUERY,
    IE_INSTRUCTION,
    QA_INSTRUCTION,
    QUERY_LABEL,
    Document,
    ModelProfile,
    Query,
    build_calibration_layout,
    build_prompt,
    instruction_for,
    layout_to_dict,
    locate_spans,
    truncate_words,
)
from icr.tokenizers import TokenizedText, WhitespaceTokenizer


def test_instruction_templates_exact():
    assert QA_INSTRUCTION == (
        "Here are some paragraphs. Please answer the question based on the "
        "relevant information in the paragraphs."
    )
    assert IE_INSTRUCTION == (
        "Here are some paragraphs. Please find information that are "
        "relevant to the query."
    )
    assert instruction_for("qa") == QA_INSTRUCTION
    assert instruction_for("ie") == IE_INSTRUCTION
    assert QUERY_LABEL == "Query: "
    assert CALIBRATION_QUERY == "N/A"


def test_prompt_text_shape(docs, query, profile):
    layout = build_prompt(docs, query, profile)
    text = layout.prompt_text
    assert text.startswith(QA_INSTRUCTION + "\n\n")
    # documents are presented in reverse retriever order, query comes last
    assert text.index("[1] bread") < text.index("[2] rivers") < text.index("[3] dogs")
    assert layout.presentation_order == ("d4", "d3", "d2", "d1")
    assert layout.retriever_order == ("d1", "d2", "d3", "d4")
    assert layout.identifier_map == {1: "d4", 2: "d3", 3: "d2", 4: "d1"}
    assert text.rstrip().endswith(query.text)
    assert f"{QUERY_LABEL}{query.text}" in text
    for number, doc_id in layout.identifier_map.items():
        assert f"[{number}] " in text


def test_retriever_and_random_orders(docs, query, profile):
    keep = build_prompt(docs, query, profile, order_mode="retriever")
    assert keep.presentation_order == ("d1", "d2", "d3", "d4")
    shuffled = build_prompt(
        docs, query, profile, order_mode="random", order_seed=42
    )
    again = build_prompt(
        docs, query, profile, order_mode="random", order_seed=42
    )
    assert shuffled.presentation_order == again.presentation_order
    assert sorted(shuffled.presentation_order) == ["d1", "d2", "d3", "d4"]
    other = build_prompt(docs, query, profile, order_mode="random", order_seed=43)
    seen = {shuffled.presentation_order, other.presentation_order}
    assert len(seen) >= 1  # different seeds may collide on tiny lists
    with pytest.raises(ValueError):
        build_prompt(docs, query, profile, order_mode="sideways")
    with pytest.raises(ValueError):
        build_prompt(docs, query, profile, order_mode="random")  # seed missing


def test_token_accounting_ends_at_query(docs, query, profile):
    layout = build_prompt(docs, query, profile)
    assert len(layout.token_ids) == layout.total_len
    assert len(layout.token_offsets) == layout.total_len
    assert layout.query_span[1] == layout.total_len
    assert layout.query_rows[-1] == layout.total_len - 1
    n_query_words = len(query.text.split())
    assert layout.query_span[1] - layout.query_span[0] == n_query_words


def test_suffix_marker_not_counted(docs, query):
    profile = ModelProfile(
        name="toy",
        layers=1,
        heads=1,
        tokenizer=WhitespaceTokenizer(),
        suffix_marker="\nAnswer:",
    )
    layout = build_prompt(docs, query, profile)
    assert layout.prompt_text.endswith("\nAnswer:")
    # the marker stays in the text but never enters the token accounting
    assert layout.query_span[1] == layout.total_len
    last_start, last_end = layout.token_offsets[-1]
    assert layout.prompt_text[last_start:last_end] == query.text.split()[-1]


def test_doc_spans_cover_identifier_and_body(docs, query, profile):
    layout = build_prompt(docs, query, profile)
    assert layout.doc_tokens("d3")[0] == "[2]"
    assert layout.doc_tokens("d3")[1:] == "rivers flow down to the sea".split()
    body_only = build_prompt(docs, query, profile, span_scope="body")
    assert body_only.doc_tokens("d3") == "rivers flow down to the sea".split()
    spans = sorted(layout.doc_spans.values())
    for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
        assert e1 <= s2  # disjoint and ordered


def test_max_doc_words(docs, query, profile):
    layout = build_prompt(docs, query, profile, max_doc_words=3)
    assert layout.doc_tokens("d1")[1:] == ["the", "cat", "sat"]
    assert truncate_words("a b c d", 2) == "a b"
    assert truncate_words("a b", None) == "a b"
    assert truncate_words("a b", 5) == "a b"


def test_input_validation(docs, query, profile):
    with pytest.raises(EmptyCandidateSet):
        build_prompt([], query, profile)
    with pytest.raises(DuplicateDocumentId):
        build_prompt([docs[0], docs[0]], query, profile)
    with pytest.raises(ValueError):
        Document(id="", text="x")
    with pytest.raises(ValueError):
        Document(id="d", text=" ")
    with pytest.raises(ValueError):
        Query(text="")
    with pytest.raises(ValueError):
        Query(text="x", style="chat")
    with pytest.raises(ValueError):
        ModelProfile(name="m", layers=0, heads=1, tokenizer=WhitespaceTokenizer())


def test_locate_spans_straddle_rule():
    tok = WhitespaceTokenizer()
    text = "[1] cat sat\nQuery: x"
    # tokens: [1](0,3) cat(4,7) sat(8,11) Query:(12,18) x(19,20)
    doc, q = locate_spans(text, [(4, 11), (19, 20)], tok)
    assert doc == (1, 3)
    assert q == (4, 5)
    # a token straddling two segments goes with its first character:
    # token "sat" covers chars [8, 11) and lands in the segment owning char 8
    left, right = locate_spans(text, [(4, 9), (9, 20)], tok)
    assert left == (1, 3)
    assert right == (3, 5)


def test_locate_spans_errors():
    tok = WhitespaceTokenizer()
    with pytest.raises(TokenizerOffsetMismatch):
        locate_spans("a b c", [(1, 2)], tok)  # only whitespace inside
    with pytest.raises(ValueError):
        locate_spans("a b", [(2, 1)], tok)


def test_calibration_layout(docs, query, profile):
    layout = build_prompt(docs, query, profile)
    cal = build_calibration_layout(layout, profile)
    assert cal.calibration is True
    assert cal.query_text == CALIBRATION_QUERY
    assert cal.doc_spans == layout.doc_spans
    assert cal.query_span[0] == layout.query_span[0]
    p = layout.query_span[0]
    assert cal.token_ids[:p] == layout.token_ids[:p]
    shared = layout.prompt_text[: layout.prompt_text.rindex(query.text)]
    assert cal.prompt_text.startswith(shared)
    assert cal.prompt_text.rstrip().endswith(CALIBRATION_QUERY)


class _DriftingTokenizer:
    """Splits differently when the calibration query is present."""

    def encode(self, text):
        base = WhitespaceTokenizer().encode(text)
        if "N/A" not in text:
            return base
        return TokenizedText(
            ids=(99,) + base.ids[1:], offsets=base.offsets
        )


def test_calibration_prefix_divergence(docs, query):
    profile = ModelProfile(
        name="weird", layers=1, heads=1, tokenizer=_DriftingTokenizer()
    )
    layout = build_prompt(docs, query, profile)
    with pytest.raises(PrefixDivergence):
        build_calibration_layout(layout, profile)


def test_layout_export_schema(docs, query, profile):
    layout = build_prompt(docs, query, profile)
    doc = layout_to_dict(layout)
    assert doc["schema_version"] == 1
    assert doc["prompt_text"] == layout.prompt_text
    assert doc["total_len"] == layout.total_len
    assert doc["query_span"] == [35, 39] or doc["query_span"] == list(layout.query_span)
    assert set(doc["doc_spans"]) == {"d1", "d2", "d3", "d4"}
    assert doc["order"]["mode"] == "reversed"
    assert doc["order"]["presentation"] == list(layout.presentation_order)
    assert doc["style"] == "qa"
    assert doc["calibration"] is False
    assert len(doc["token_ids"]) == layout.total_len
    slim = layout_to_dict(layout, include_token_ids=False)
    assert "token_ids" not in slim


def test_identifier_free_prompt(docs, query, profile):
    layout = build_prompt(docs, query, profile, render_identifiers=False)
    assert "[1]" not in layout.prompt_text
    assert layout.doc_tokens("d3") == "rivers flow down to the sea".split()


def test_many_random_layouts_are_consistent(profile):
    rng = random.Random(7)
    words = ["alpha", "beta", "gamma", "delta", "kappa", "omega", "sigma"]
    for trial in range(25):
        n_docs = rng.randint(1, 8)
        docs = [
            Document(
                id=f"d{i}",
                text=" ".join(rng.choice(words) for _ in range(rng.randint(1, 9))),
            )
            for i in range(n_docs)
        ]
        q = Query(" ".join(rng.choice(words) for _ in range(rng.randint(1, 5))))
        style = rng.choice(("qa", "ie"))
        layout = build_prompt(docs, Query(q.text, style=style), profile)
        assert layout.total_len == layout.query_span[1]
        assert set(layout.doc_spans) == {d.id for d in docs}
        for doc in docs:
            s, e = layout.doc_spans[doc.id]
            assert e - s == len(doc.text.split()) + 1  # body + identifier
        cal = build_calibration_layout(layout, profile)
        assert cal.doc_spans == layout.doc_spans
