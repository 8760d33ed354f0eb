"""Shared fixtures: a small dataset, engine-exported layouts, and tiny
local GPT-2-architecture checkpoints with word-level tokenizers. Built
once per session; everything is offline and seeded.
"""
import json
import subprocess
import sys

import pytest


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    docs = [
        {"id": f"d{i}", "text": " ".join(f"w{i}{j}" for j in range(6))}
        for i in range(5)
    ]
    _write_jsonl(root / "corpus.jsonl", docs)
    _write_jsonl(
        root / "queries.jsonl",
        [
            {"qid": "q1", "text": "find w40 here"},
            {"qid": "q2", "text": "where is w21", "style": "ie"},
        ],
    )
    _write_jsonl(
        root / "candidates.jsonl",
        [
            {"qid": "q1", "docids": ["d0", "d2", "d4"]},
            {"qid": "q2", "docids": ["d1", "d2", "d3", "d0"]},
        ],
    )
    return root


@pytest.fixture(scope="session")
def layout_dir(dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("layouts")
    subprocess.run(
        [
            sys.executable, "-m", "icr.cli", "layout-export",
            "--corpus", str(dataset_dir / "corpus.jsonl"),
            "--queries", str(dataset_dir / "queries.jsonl"),
            "--candidates", str(dataset_dir / "candidates.jsonl"),
            "--out-dir", str(out),
        ],
        check=True, capture_output=True,
    )
    return out


def _truncated_texts(layout_dir):
    texts = []
    for path in sorted(layout_dir.glob("*.json")):
        data = json.loads(path.read_text())
        q_end = next(
            s["end"] for s in data["char_segments"] if s["kind"] == "query_text"
        )
        texts.append(data["prompt_text"][:q_end])
    return texts


def _save_checkpoint(out_dir, tokenizer_object, vocab_size):
    import torch
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    torch.manual_seed(7)
    config = GPT2Config(
        vocab_size=vocab_size,
        n_positions=256,
        n_embd=32,
        n_layer=2,
        n_head=2,
        n_inner=64,
        bos_token_id=0,
        eos_token_id=0,
    )
    GPT2LMHeadModel(config).save_pretrained(out_dir)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer_object, unk_token="[UNK]"
    )
    fast.save_pretrained(out_dir)


@pytest.fixture(scope="session")
def checkpoint_dir(layout_dir, tmp_path_factory):
    """Word-level tokenizer splitting on whitespace: boundary-safe."""
    from tokenizers import Tokenizer, pre_tokenizers
    from tokenizers.models import WordLevel

    words = {"[UNK]"}
    for text in _truncated_texts(layout_dir):
        words.update(text.split())
    vocab = {w: i for i, w in enumerate(sorted(words))}
    tok = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    out = tmp_path_factory.mktemp("checkpoint")
    _save_checkpoint(out, tok, len(vocab))
    return out


@pytest.fixture(scope="session")
def line_checkpoint_dir(layout_dir, tmp_path_factory):
    """Degenerate tokenizer treating whole lines as single tokens, so the
    query text never gets a token of its own: guaranteed drift."""
    from tokenizers import Tokenizer, pre_tokenizers
    from tokenizers.models import WordLevel

    lines = {"[UNK]"}
    for text in _truncated_texts(layout_dir):
        lines.update(line for line in text.split("\n") if line)
    vocab = {w: i for i, w in enumerate(sorted(lines))}
    tok = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.Split("\n", behavior="removed")
    out = tmp_path_factory.mktemp("line_checkpoint")
    _save_checkpoint(out, tok, len(vocab))
    return out
