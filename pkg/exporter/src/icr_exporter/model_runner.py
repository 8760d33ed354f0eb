"""Thin wrapper around a transformers checkpoint.

Loads the model with eager attention so per-head weights are available,
and exposes exactly what the exporter needs: offset-mapped encoding and
a (layers, heads, T, T) attention tensor per forward pass.
"""
from __future__ import annotations

import numpy as np

from .errors import ModelLoadFailure

_DTYPES = {"float32": "float32", "float16": "float16"}


class ModelRunner:
    def __init__(self, model_id: str, device: str = "cpu", precision: str = "float32"):
        if precision not in _DTYPES:
            raise ModelLoadFailure(f"unsupported precision {precision!r}")
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except Exception as exc:  # pragma: no cover
            raise ModelLoadFailure(f"torch/transformers unavailable: {exc}") from exc
        self._torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModelForCausalLM.from_pretrained(
                model_id, attn_implementation="eager"
            )
        except Exception as exc:
            raise ModelLoadFailure(f"cannot load {model_id!r}: {exc}") from exc
        if not getattr(self.tokenizer, "is_fast", False):
            raise ModelLoadFailure(
                f"{model_id!r} has no fast tokenizer; offset mapping is required"
            )
        try:
            self.model.to(device=device, dtype=getattr(torch, _DTYPES[precision]))
        except Exception as exc:
            raise ModelLoadFailure(f"cannot move model to {device!r}: {exc}") from exc
        self.model.eval()
        self.device = device
        config = self.model.config
        self.layers = int(config.num_hidden_layers)
        # per attention-weight head: for grouped-query models this is the
        # query head count, the H that indexes the attention matrices
        self.heads = int(config.num_attention_heads)
        self.max_positions = int(getattr(config, "max_position_embeddings", 10**9))

    def encode(self, text: str):
        enc = self.tokenizer(
            text, return_offsets_mapping=True, add_special_tokens=False
        )
        offsets = [tuple(o) for o in enc["offset_mapping"]]
        return list(enc["input_ids"]), offsets

    def attentions(self, token_ids) -> np.ndarray:
        """One forward pass; returns float32 (layers, heads, T, T)."""
        if not token_ids:
            raise ModelLoadFailure("empty token sequence")
        if len(token_ids) > self.max_positions:
            raise ModelLoadFailure(
                f"prompt of {len(token_ids)} tokens exceeds the model's "
                f"{self.max_positions} positions"
            )
        torch = self._torch
        ids = torch.tensor([token_ids], dtype=torch.long, device=self.device)
        with torch.no_grad():
            out = self.model(ids, output_attentions=True, use_cache=False)
        stacked = torch.stack(out.attentions, dim=0)[:, 0]
        return stacked.to(torch.float32).cpu().numpy()
